#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "elastic/ops.hpp"
#include "elastic/rational.hpp"

namespace elastic {

enum class BlockKind { resnext_bottleneck, densenet_growth };

// How non-native branches reach their working resolution and come back.
// avgpool_bilinear (2x2 mean pooling down, bilinear up) is the default and
// the only variant on the accuracy path; the others exist for comparisons.
enum class Resample { avgpool_bilinear, nearest, trained_filter };

struct BranchSpec {
  int scale_ratio{1};          // process at (H/r, W/r); 1 = native resolution
  Rational width_fraction{1};  // share of the block's transform width
  int cardinality{1};          // groups in the 3x3 (resnext kind)

  bool operator==(const BranchSpec&) const = default;
};

// One block of either family, possibly with several resolution branches.
// A single branch with scale_ratio 1 and full width is exactly the plain
// (non-Elastic) block and runs through the same code path.
struct ElasticBlockSpec {
  BlockKind kind{BlockKind::resnext_bottleneck};
  i64 in_channels{0};
  i64 bottleneck_channels{0};  // resnext: total 3x3 width; densenet: 1x1 width
  i64 out_channels{0};         // resnext only; densenet emits in + growth
  int growth{0};               // densenet only
  int stride{1};               // resnext entry stride, carried by the 3x3
  bool residual{true};         // resnext only
  Resample resample{Resample::avgpool_bilinear};
  std::vector<BranchSpec> branches;

  bool operator==(const ElasticBlockSpec&) const = default;

  // ConfigError with specifics on any violation: empty branches, width
  // fractions not summing to 1, non-integer or zero branch widths, widths
  // not divisible by cardinality, non power-of-two scale ratios under
  // avgpool resampling, stride 2 combined with multiple branches.
  void validate() const;

  bool is_elastic() const;  // any branch with scale_ratio > 1, or > 1 branch
  i64 branch_width(size_t i) const;
  i64 effective_out_channels() const;
};

struct ConvBn {
  ConvParams conv;
  NormParams bn;
};

struct ResnextBranchParams {
  ConvBn reduce;   // 1x1: in -> width
  ConvBn grouped;  // 3x3 grouped: width -> width, carries the block stride
  ConvBn expand;   // 1x1: width -> out (no activation before the merge)
  std::optional<ConvParams> down;  // trained_filter resampling only
  std::optional<ConvParams> up;
};

struct DensenetBranchParams {
  ConvParams conv1;  // 1x1: in -> width (pre-activation ordering)
  NormParams bn1;
  ConvParams conv2;  // 3x3: width -> growth
  std::optional<ConvParams> down;
  std::optional<ConvParams> up;
};

struct ResnextBlockParams {
  std::vector<ResnextBranchParams> branches;
  std::optional<ConvBn> projection;  // on shape or stride mismatch
};

struct DensenetBlockParams {
  NormParams norm0;  // shared pre-activation norm on the incoming stream
  std::vector<DensenetBranchParams> branches;
};

struct BlockParams {
  ElasticBlockSpec spec;
  std::optional<ResnextBlockParams> resnext;
  std::optional<DensenetBlockParams> densenet;
};

BlockParams make_block(const ElasticBlockSpec& spec, Pcg32& rng);

// Per-branch observability for tests and the scale-policy analyzer.
struct BranchTrace {
  std::vector<TensorRef> post_transform;  // after the 3x3 stage, at branch res
  std::vector<TensorRef> merged_inputs;   // branch contribution at stream res
  std::vector<int> scale_ratios;
};

TensorRef block_forward(const TensorRef& x, BlockParams& params,
                        BranchTrace* trace = nullptr);

// Walk every trainable tensor (on_tensor) and every norm layer (on_norm) in
// a fixed, documented order; the order defines checkpoint layout.
void visit_block(BlockParams& params, const std::string& prefix,
                 const std::function<void(const std::string&, const TensorRef&)>&
                     on_tensor,
                 const std::function<void(const std::string&, NormParams*)>&
                     on_norm);

i64 block_learnable_param_count(BlockParams& params);

}  // namespace elastic
