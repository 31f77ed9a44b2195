#pragma once

#include <functional>
#include <string>
#include <vector>

#include "elastic/tensor.hpp"

namespace elastic {

struct GradCheckReport {
  double max_rel_err{0.0};
  bool pass{false};
  std::string worst;  // "input 0 element 17: analytic=..., numeric=..."
  i64 probed{0};
};

using OpFn = std::function<TensorRef(const std::vector<TensorRef>&)>;

// Finite-difference check of reverse-mode gradients in float32.
//
// The op output is reduced to a scalar through a fixed random projection
// (weights drawn from the given seed), with the projection accumulated in
// double so the numeric side is not drowned by reduction noise. Central
// differences with absolute step h perturb each probed element of each
// requires_grad input; when max_probes > 0 a random subset of elements is
// probed instead of all of them. The error is
//   max_i |analytic_i - numeric_i| / max(max|analytic|, max|numeric|, 1e-8)
// over probed elements, compared against the tolerance.
//
// The op must be output-pure: repeated calls on the same data must return
// the same values. Ops with internal counters (e.g. running statistics in
// train mode) qualify as long as the output ignores that state.
GradCheckReport grad_check(const OpFn& op, std::vector<TensorRef> inputs,
                           double tolerance, double step = 1e-3,
                           i64 max_probes = 0, std::uint64_t seed = 1234);

}  // namespace elastic
