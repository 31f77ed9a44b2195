#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "elastic/policy.hpp"

namespace elastic {

double block_scale_score(const Tensor& high, const Tensor& low) {
  const Shape& hs = high.shape;
  const Shape& ls = low.shape;
  if (hs.n != 1 || ls.n != 1 || hs.c != ls.c || hs.h != 2 * ls.h ||
      hs.w != 2 * ls.w) {
    throw InputError("scale score expects (1,C,2H,2W) against (1,C,H,W), got " +
                     hs.str() + " and " + ls.str());
  }
  double sum_high = 0.0;
  for (float v : high.data) sum_high += v;
  double sum_low = 0.0;
  for (float v : low.data) sum_low += v;
  double mean_high = sum_high / static_cast<double>(hs.numel());
  double mean_low = sum_low / static_cast<double>(ls.numel());
  return mean_high - mean_low;
}

namespace {

std::string block_tag(size_t stage, i64 block) {
  return "stage " + std::to_string(stage) + " block " + std::to_string(block);
}

double score_capture(const ArchSpec& spec, const BlockCapture& cap) {
  ElasticBlockSpec bs = block_spec_at(spec, cap.stage, cap.block);
  const auto& trace = cap.trace;
  if (bs.kind != BlockKind::resnext_bottleneck) {
    throw UsageError("policy scoring needs resnext-kind blocks; " +
                     block_tag(cap.stage, cap.block) + " is not one");
  }
  if (trace.scale_ratios.size() != 2) {
    throw UsageError("policy scoring needs exactly two branches; " +
                     block_tag(cap.stage, cap.block) + " has " +
                     std::to_string(trace.scale_ratios.size()));
  }
  int hi = -1, lo = -1;
  for (int i = 0; i < 2; ++i) {
    if (trace.scale_ratios[i] == 1) hi = i;
    if (trace.scale_ratios[i] == 2) lo = i;
  }
  if (hi < 0 || lo < 0) {
    throw UsageError("policy scoring needs branch ratios {1,2}; " +
                     block_tag(cap.stage, cap.block) + " has {" +
                     std::to_string(trace.scale_ratios[0]) + "," +
                     std::to_string(trace.scale_ratios[1]) + "}");
  }
  const Tensor& high = *trace.post_transform[hi];
  const Tensor& low = *trace.post_transform[lo];
  if (high.shape.c != low.shape.c) {
    throw UsageError("policy scoring needs equal branch widths; " +
                     block_tag(cap.stage, cap.block) + " has " +
                     std::to_string(high.shape.c) + " vs " +
                     std::to_string(low.shape.c));
  }
  return block_scale_score(high, low);
}

}  // namespace

PolicyTrace trace_image(Network& net, const TensorRef& image,
                        const std::string& image_id, int label) {
  if (image->shape.n != 1) {
    throw InputError("trace_image expects a single image, got batch " +
                     std::to_string(image->shape.n));
  }
  NormParams::Mode saved = net.mode();
  net.set_mode(NormParams::Mode::eval);
  PolicyTrace out;
  out.image_id = image_id;
  out.label = label;
  try {
    NoGradGuard guard;
    std::vector<BlockCapture> captures;
    auto logits = net.forward(image, &captures);
    out.prediction = predict_classes(logits)[0];
    out.scores.reserve(captures.size());
    for (const auto& cap : captures) {
      out.scores.push_back(score_capture(net.spec(), cap));
    }
  } catch (...) {
    net.set_mode(saved);
    throw;
  }
  net.set_mode(saved);
  return out;
}

std::vector<PolicyTrace> trace_dataset(Network& net, const Dataset& data,
                                       i64 limit) {
  i64 n = data.size();
  if (limit > 0) n = std::min(n, limit);
  std::vector<PolicyTrace> traces;
  traces.reserve(static_cast<size_t>(n));
  for (i64 i = 0; i < n; ++i) {
    traces.push_back(
        trace_image(net, data.image_tensor(i), data.ids[i], data.labels[i]));
  }
  return traces;
}

std::vector<CategoryAggregate> aggregate_by_category(
    const std::vector<PolicyTrace>& traces) {
  struct Acc {
    i64 images{0};
    double sum{0.0};
    i64 scores{0};
  };
  std::vector<Acc> accs;
  for (const auto& t : traces) {
    if (t.label < 0) throw InputError("trace without a label cannot aggregate");
    if (static_cast<size_t>(t.label) >= accs.size()) {
      accs.resize(static_cast<size_t>(t.label) + 1);
    }
    auto& a = accs[static_cast<size_t>(t.label)];
    a.images += 1;
    for (double s : t.scores) a.sum += s;
    a.scores += static_cast<i64>(t.scores.size());
  }
  std::vector<CategoryAggregate> out;
  for (size_t label = 0; label < accs.size(); ++label) {
    if (accs[label].images == 0) continue;
    CategoryAggregate c;
    c.label = static_cast<int>(label);
    c.images = accs[label].images;
    c.mean_score =
        accs[label].scores ? accs[label].sum / accs[label].scores : 0.0;
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.mean_score != b.mean_score) return a.mean_score < b.mean_score;
    return a.label < b.label;
  });
  return out;
}

std::vector<BlockAggregate> aggregate_by_block(
    const std::vector<PolicyTrace>& traces) {
  if (traces.empty()) return {};
  size_t k = traces.front().scores.size();
  for (const auto& t : traces) {
    if (t.scores.size() != k) {
      throw InputError("traces disagree on block count: " + std::to_string(k) +
                       " vs " + std::to_string(t.scores.size()));
    }
  }
  std::vector<BlockAggregate> out(k);
  for (size_t b = 0; b < k; ++b) {
    double sum = 0.0;
    double mn = traces.front().scores[b], mx = mn;
    for (const auto& t : traces) {
      double s = t.scores[b];
      sum += s;
      mn = std::min(mn, s);
      mx = std::max(mx, s);
    }
    double mean = sum / static_cast<double>(traces.size());
    double var = 0.0;
    for (const auto& t : traces) {
      double d = t.scores[b] - mean;
      var += d * d;
    }
    var /= static_cast<double>(traces.size());
    out[b] = {b, mean, std::sqrt(var), mn, mx};
  }
  return out;
}

void export_traces_csv(const std::vector<PolicyTrace>& traces,
                       std::ostream& out) {
  size_t k = traces.empty() ? 0 : traces.front().scores.size();
  out << "image_id,label,prediction";
  for (size_t i = 1; i <= k; ++i) out << ",s_" << i;
  out << "\n";
  char buf[64];
  for (const auto& t : traces) {
    if (t.scores.size() != k) {
      throw InputError("traces disagree on block count: " + std::to_string(k) +
                       " vs " + std::to_string(t.scores.size()));
    }
    out << t.image_id << ',' << t.label << ',' << t.prediction;
    for (double s : t.scores) {
      std::snprintf(buf, sizeof(buf), "%.6g", s);
      out << ',' << buf;
    }
    out << "\n";
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::vector<PolicyTrace> import_traces_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("trace csv: empty input");
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "image_id" || header[1] != "label" ||
      header[2] != "prediction") {
    throw FormatError("trace csv: bad header '" + line + "'");
  }
  size_t k = header.size() - 3;
  for (size_t i = 0; i < k; ++i) {
    if (header[3 + i] != "s_" + std::to_string(i + 1)) {
      throw FormatError("trace csv: expected column s_" + std::to_string(i + 1) +
                        ", got '" + header[3 + i] + "'");
    }
  }
  std::vector<PolicyTrace> traces;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw FormatError("trace csv line " + std::to_string(line_no) + ": got " +
                        std::to_string(fields.size()) + " fields, want " +
                        std::to_string(header.size()));
    }
    PolicyTrace t;
    t.image_id = fields[0];
    try {
      t.label = std::stoi(fields[1]);
      t.prediction = std::stoi(fields[2]);
      for (size_t i = 0; i < k; ++i) {
        t.scores.push_back(std::stod(fields[3 + i]));
      }
    } catch (const std::exception&) {
      throw FormatError("trace csv line " + std::to_string(line_no) +
                        ": unparsable number");
    }
    traces.push_back(std::move(t));
  }
  return traces;
}

}  // namespace elastic
