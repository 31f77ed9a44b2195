#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "elastic/data.hpp"
#include "elastic/network.hpp"

namespace elastic {

struct TrainConfig {
  ArchSpec arch;
  std::uint64_t seed{1};
  i64 epochs{2};
  i64 batch_size{32};
  double base_lr{0.1};
  std::vector<i64> lr_milestones;  // 0-based epochs where the rate decays
  double lr_decay{0.1};
  double momentum{0.9};
  double weight_decay{5e-4};

  void validate() const;
};

// base_lr * decay^(milestones passed); a milestone at epoch e already
// applies to epoch e itself.
double lr_at_epoch(const TrainConfig& cfg, i64 epoch);

struct EpochMetrics {
  i64 epoch{0};
  std::string split;  // "train" or "eval"
  double loss{0.0};
  double top1{0.0};
};

// CSV with header epoch,split,loss,top1.
void write_metrics_csv(const std::vector<EpochMetrics>& history,
                       std::ostream& out);

struct StratumCount {
  i64 correct{0};
  i64 total{0};
};

struct EvalResult {
  double loss{0.0};
  double top1{0.0};
  i64 count{0};
  std::array<StratumCount, 4> per_stratum{};  // indexed by Stratum
  i64 feature_side{0};  // feature map side entering the global pool
  i64 macs{0};          // per-image multiply-accumulates at this resolution
};

// Batched eval-mode pass. A nonzero resolution bilinearly resizes the inputs
// first and the global pool adapts; invalid sizes raise InputError listing
// valid ones.
EvalResult evaluate(Network& net, const Dataset& data, i64 batch_size,
                    i64 resolution = 0);

// SGD with momentum: v <- momentum*v + (g + wd*w); w <- w - lr*v.
// Every trainable tensor is decayed, norm affine parameters included.
class Sgd {
 public:
  Sgd(Network& net, double momentum, double weight_decay);
  void step(double lr);
  void zero_grad();

 private:
  Network& net_;
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<float>> velocity_;
};

struct TrainResult {
  Network net;
  std::vector<EpochMetrics> history;
  i64 step{0};  // optimizer steps taken
  std::uint64_t shuffle_state{0}, shuffle_inc{0};
  std::uint64_t augment_state{0}, augment_inc{0};
};

// Full recipe: shuffled batches (last partial batch dropped), augmentation
// per the dataset's kind, per-epoch train metrics plus an eval pass. The
// arch's class count is adapted to the dataset. NaN loss raises
// TrainingDiverged naming epoch, step and rate.
TrainResult run_training(const TrainConfig& cfg, const Dataset& train_data,
                         const Dataset& eval_data);

}  // namespace elastic
