#pragma once

#include <string>
#include <vector>

#include "elastic/rng.hpp"
#include "elastic/tensor.hpp"

namespace elastic {

enum class Stratum { none, small, medium, large };
const char* stratum_name(Stratum s);

enum class AugmentKind { none, hflip, pad_crop_hflip };

struct Dataset {
  i64 height{0}, width{0};
  std::vector<float> images;  // samples * 3 * height * width, CHW per sample
  std::vector<int> labels;
  std::vector<Stratum> strata;  // empty when unstratified
  std::vector<std::string> ids;
  int num_classes{0};
  AugmentKind augment{AugmentKind::none};

  i64 size() const { return static_cast<i64>(labels.size()); }
  const float* sample(i64 index) const {
    return images.data() + index * 3 * height * width;
  }
  TensorRef image_tensor(i64 index) const;  // (1,3,H,W)
};

// ---- synthetic multi-scale shapes -----------------------------------------

// Geometry classes; color never separates them.
inline constexpr int kShapeClassCount = 8;
const char* shape_class_name(int shape_class);

struct ShapeInstance {
  int shape_class{0};
  double cx{0}, cy{0};  // center, pixels
  i64 size{0};          // bounding box side, pixels
  float color[3]{};
};

struct GenRecord {
  int label{0};
  Stratum stratum{Stratum::none};
  std::vector<ShapeInstance> shapes;
};

struct SyntheticSpec {
  i64 canvas{32};
  int num_classes{8};  // uses the first num_classes geometry classes
  int min_count{1}, max_count{3};
  double frac_small{1.0 / 3}, frac_medium{1.0 / 3};  // large takes the rest
  double noise_sigma{0.05};
  i64 train_samples{1024};
  i64 eval_samples{512};
  std::uint64_t seed{1};
  i64 small_lo{5}, small_hi{8};
  i64 medium_lo{11}, medium_hi{16};
  i64 large_lo{20}, large_hi{26};

  void validate() const;  // ConfigError when sizes cannot fit the canvas
};

struct SyntheticData {
  Dataset train, eval;
  std::vector<GenRecord> train_records, eval_records;
};

// Deterministic for a fixed spec: same seed, byte-identical pixels.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Renders one shape alone onto a blank canvas (no background, no noise);
// the measurement oracle in tests recomputes bounding boxes from this.
std::vector<float> render_shape_mask(const ShapeInstance& shape, i64 canvas);

Stratum stratum_of_size(const SyntheticSpec& spec, i64 size);

// ---- CIFAR-10 binary files ------------------------------------------------

// Each file: 10000 records of 1 label byte + 3072 pixel bytes (RGB planes,
// row-major), 30730000 bytes total. Pixels are scaled to [0,1] and
// standardized with the channel constants below.
inline constexpr float kCifarMean[3] = {0.4914f, 0.4822f, 0.4465f};
inline constexpr float kCifarStd[3] = {0.2470f, 0.2435f, 0.2616f};
inline constexpr i64 kCifarFileBytes = 30730000;
inline constexpr i64 kCifarRecordsPerFile = 10000;

// train: data_batch_1.bin .. data_batch_5.bin; eval: test_batch.bin.
// IoError when files are missing, FormatError on size or label violations.
Dataset load_cifar10(const std::string& dir, bool train);

}  // namespace elastic
