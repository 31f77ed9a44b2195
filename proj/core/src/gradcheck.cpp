#include "elastic/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "elastic/ops.hpp"
#include "elastic/rng.hpp"

namespace elastic {

namespace {

double project(const OpFn& op, const std::vector<TensorRef>& inputs,
               const std::vector<double>& w) {
  NoGradGuard guard;
  TensorRef out = op(inputs);
  double acc = 0.0;
  for (size_t i = 0; i < out->data.size(); ++i) {
    acc += w[i] * static_cast<double>(out->data[i]);
  }
  return acc;
}

}  // namespace

GradCheckReport grad_check(const OpFn& op, std::vector<TensorRef> inputs,
                           double tolerance, double step, i64 max_probes,
                           std::uint64_t seed) {
  if (inputs.empty()) throw UsageError("grad_check: no inputs");
  Pcg32 rng(seed, rng_stream::kProbe);

  // Analytic pass through the real graph.
  TensorRef out = op(inputs);
  std::vector<double> w(out->data.size());
  for (auto& v : w) v = rng.next_double() * 2.0 - 1.0;
  for (auto& t : inputs) {
    t->ensure_grad();
    t->zero_grad();
  }
  TensorRef loss = weighted_sum(out, w);
  backward(loss);

  GradCheckReport report;
  double max_abs_analytic = 0.0, max_abs_numeric = 0.0, max_diff = 0.0;
  std::string worst;

  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    TensorRef t = inputs[ti];
    if (!t->requires_grad) continue;
    i64 numel = t->numel();
    std::vector<i64> probe_idx;
    if (max_probes > 0 && numel > max_probes) {
      std::unordered_set<i64> chosen;
      while (static_cast<i64>(chosen.size()) < max_probes) {
        chosen.insert(static_cast<i64>(
            rng.next_below(static_cast<std::uint32_t>(numel))));
      }
      probe_idx.assign(chosen.begin(), chosen.end());
      std::sort(probe_idx.begin(), probe_idx.end());
    } else {
      probe_idx.resize(static_cast<size_t>(numel));
      std::iota(probe_idx.begin(), probe_idx.end(), 0);
    }

    for (i64 idx : probe_idx) {
      float saved = t->data[idx];
      t->data[idx] = static_cast<float>(static_cast<double>(saved) + step);
      double f_plus = project(op, inputs, w);
      t->data[idx] = static_cast<float>(static_cast<double>(saved) - step);
      double f_minus = project(op, inputs, w);
      t->data[idx] = saved;

      double numeric = (f_plus - f_minus) / (2.0 * step);
      double analytic = static_cast<double>(t->grad[idx]);
      max_abs_analytic = std::max(max_abs_analytic, std::abs(analytic));
      max_abs_numeric = std::max(max_abs_numeric, std::abs(numeric));
      double diff = std::abs(analytic - numeric);
      if (diff >= max_diff) {
        max_diff = diff;
        std::ostringstream os;
        os << "input " << ti << " element " << idx << ": analytic=" << analytic
           << ", numeric=" << numeric;
        worst = os.str();
      }
      ++report.probed;
    }
  }

  double scale = std::max({max_abs_analytic, max_abs_numeric, 1e-8});
  report.max_rel_err = max_diff / scale;
  report.pass = report.max_rel_err <= tolerance;
  report.worst = worst;
  return report;
}

}  // namespace elastic
