#pragma once

#include <string>
#include <vector>

#include "elastic/block.hpp"

namespace elastic {

enum class Family { resnext, densenet };
enum class StemPool { none, max3s2 };

struct StemSpec {
  int kernel{3};
  int stride{1};
  int padding{1};
  i64 out_channels{64};
  StemPool pool{StemPool::none};

  bool operator==(const StemSpec&) const = default;
};

// One stage of same-resolution blocks. For the densenet family,
// stride_on_entry == 2 means a compressing transition layer sits in front of
// the stage; for resnext it is the first block's stride.
struct StageSpec {
  int num_blocks{0};
  i64 out_channels{0};         // resnext block output width
  i64 bottleneck_channels{0};  // transform width per block
  int cardinality{1};          // 3x3 groups of plain (non-Elastic) blocks
  int growth{0};               // densenet growth rate
  i64 resolution{0};           // feature size while in this stage
  int stride_on_entry{1};
  bool elastic{false};
  std::vector<BranchSpec> branches;  // Elastic block template
  Resample resample{Resample::avgpool_bilinear};

  bool operator==(const StageSpec&) const = default;
};

struct ArchSpec {
  std::string name;
  Family family{Family::resnext};
  i64 input_resolution{224};
  int num_classes{1000};
  StemSpec stem;
  std::vector<StageSpec> stages;
  Rational transition_compression{1, 2};  // densenet only

  bool operator==(const ArchSpec&) const = default;

  // ConfigError naming the stage/block on any inconsistency: resolutions not
  // matching input_resolution and cumulative strides, widths not divisible by
  // cardinality, branch templates whose fractions or ratios do not fit, ...
  void validate() const;

  i64 min_resolution() const;
  i64 stem_output_resolution() const;
};

// A block may carry resolution branches only when it is not a stride-2 entry
// block and its stage is not at the network's minimum resolution tier.
bool block_eligible(const ArchSpec& spec, size_t stage_idx, i64 block_idx);

// Eligible and requested: the stage is flagged elastic. Ineligible blocks of
// an elastic stage silently stay plain, which is what keeps stride-2 entries
// and the last tier untouched.
bool block_is_elastic(const ArchSpec& spec, size_t stage_idx, i64 block_idx);

i64 count_elastic_blocks(const ArchSpec& spec);

// The concrete block spec the builder instantiates at (stage, block).
ElasticBlockSpec block_spec_at(const ArchSpec& spec, size_t stage_idx,
                               i64 block_idx);

// In-place Elastic conversion of a plain spec: every stage off the minimum
// tier gains the two-branch half-width template (r=1 and r=2, cardinality
// halved), keeping block counts and widths; conv parameter count is
// conserved exactly. UsageError if the spec already has elastic stages.
ArchSpec selastic_transform(const ArchSpec& spec);

// Feature-map side lengths this spec can consume, walked with the exact
// integer arithmetic of the real layers.
struct ResolutionCheck {
  bool ok{false};
  std::string reason;                  // set when !ok
  std::vector<i64> stage_resolutions;  // set when ok
};
ResolutionCheck check_input_resolution(const ArchSpec& spec, i64 resolution);
std::vector<i64> valid_input_resolutions(const ArchSpec& spec, i64 lo, i64 hi);

// Built-in architectures; ConfigError for unknown names.
std::vector<std::string> preset_names();
ArchSpec preset(const std::string& name);

}  // namespace elastic
