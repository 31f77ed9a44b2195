#pragma once

#include <string>
#include <vector>

#include "elastic/arch.hpp"
#include "elastic/rational.hpp"
#include "elastic/rng.hpp"

namespace elastic {

// The six block-level scaling schemes whose per-layer compute and parameter
// formulas are compared symbolically. "single" is the plain block.
enum class ScalingMethod {
  single,
  feature_pyramid_concat,
  feature_pyramid_add,
  filter_pyramid_standard,
  filter_pyramid_dilated,
  elastic
};

ScalingMethod scaling_method_from_string(const std::string& name);
std::string scaling_method_name(ScalingMethod m);

// Symbolic single-layer query: resolution n, channels c, kernel k, and q
// branches with scale ratios r_i and width divisors b_i, sum(1/b_i) == 1.
struct CostQuery {
  i64 resolution{0};
  i64 channels{0};
  int kernel{0};
  std::vector<int> scale_ratios;
  std::vector<Rational> width_divisors;

  void validate() const;  // InputError on violations
};

struct SymbolicCost {
  Rational flops;   // multiply-accumulates, exact
  Rational params;
};

SymbolicCost layer_scaling_cost(ScalingMethod method, const CostQuery& q);

// Property sweep: over randomized queries, the elastic scheme never exceeds
// the single-branch compute, matches it exactly when every ratio is 1, and
// always matches its parameter count.
struct BoundCheck {
  bool ok{true};
  i64 trials{0};
  std::string counterexample;
};
BoundCheck verify_elastic_bound(i64 trials, std::uint64_t seed);

// Exact integer walk of a whole architecture. Convention: one
// multiply-accumulate per FLOP entry; only convolutions and the classifier
// count compute (normalization, activations, pooling and resampling are
// free); parameter totals cover every learnable tensor including
// normalization scale/shift, excluding running statistics.
struct LayerCost {
  std::string name;
  i64 macs{0};
  i64 params{0};
};

struct CostReport {
  std::vector<LayerCost> layers;
  i64 total_macs{0};
  i64 total_params{0};
  i64 input_resolution{0};
};

// input_resolution 0 means the spec's native one. InputError when the
// resolution cannot flow through the arch.
CostReport model_cost(const ArchSpec& spec, i64 input_resolution = 0);

}  // namespace elastic
