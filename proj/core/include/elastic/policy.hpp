#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "elastic/data.hpp"
#include "elastic/network.hpp"

namespace elastic {

// Scale preference of one two-resolution block for one image: mean
// activation of the native branch minus mean activation of the downscaled
// branch, both taken after the 3x3 stage (conv + norm + relu). Positive
// means the image leans on fine detail. Shapes must be (1,C,2H,2W) against
// (1,C,H,W); accumulation is in double, so constant inputs give exactly
// mean_high - mean_low.
double block_scale_score(const Tensor& high, const Tensor& low);

struct PolicyTrace {
  std::string image_id;
  int label{-1};
  int prediction{-1};
  std::vector<double> scores;  // one per elastic block, network order
};

// Runs one image (1,3,H,W) through the network in eval mode without building
// a graph and scores every elastic block. Defined for resnext-kind blocks
// with exactly two branches at ratios {1, 2} and equal branch widths;
// anything else is rejected with a UsageError naming the block.
PolicyTrace trace_image(Network& net, const TensorRef& image,
                        const std::string& image_id, int label);

std::vector<PolicyTrace> trace_dataset(Network& net, const Dataset& data,
                                       i64 limit = 0);

struct CategoryAggregate {
  int label{0};
  i64 images{0};
  double mean_score{0.0};
};

// Mean over all blocks and images per category, ascending by mean score
// (scale-hungriest categories first); ties break on the label.
std::vector<CategoryAggregate> aggregate_by_category(
    const std::vector<PolicyTrace>& traces);

struct BlockAggregate {
  size_t block_index{0};
  double mean{0.0};
  double stddev{0.0};  // population
  double min{0.0};
  double max{0.0};
};

std::vector<BlockAggregate> aggregate_by_block(
    const std::vector<PolicyTrace>& traces);

// CSV with header image_id,label,prediction,s_1..s_K; scores at six
// significant digits; row order follows the trace order.
void export_traces_csv(const std::vector<PolicyTrace>& traces,
                       std::ostream& out);
std::vector<PolicyTrace> import_traces_csv(std::istream& in);

}  // namespace elastic
