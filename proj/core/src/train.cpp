#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "elastic/cost.hpp"
#include "elastic/train.hpp"

namespace elastic {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (base_lr < 0) throw ConfigError("train: base_lr must be >= 0");
  if (lr_decay <= 0) throw ConfigError("train: lr_decay must be > 0");
  if (momentum < 0 || momentum >= 1) {
    throw ConfigError("train: momentum must be in [0,1)");
  }
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  for (size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] < 0) {
      throw ConfigError("train: lr milestones must be >= 0");
    }
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) {
      throw ConfigError("train: lr milestones must be strictly increasing");
    }
  }
}

double lr_at_epoch(const TrainConfig& cfg, i64 epoch) {
  int passed = 0;
  for (i64 m : cfg.lr_milestones) {
    if (m <= epoch) ++passed;
  }
  return cfg.base_lr * std::pow(cfg.lr_decay, passed);
}

void write_metrics_csv(const std::vector<EpochMetrics>& history,
                       std::ostream& out) {
  out << "epoch,split,loss,top1\n";
  char buf[64];
  for (const auto& m : history) {
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.6g,%.6g",
                  static_cast<long long>(m.epoch), m.split.c_str(), m.loss,
                  m.top1);
    out << buf << "\n";
  }
}

Sgd::Sgd(Network& net, double momentum, double weight_decay)
    : net_(net), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(net.parameters().size());
  for (const auto& p : net.parameters()) {
    velocity_.emplace_back(p.tensor->data.size(), 0.0f);
  }
}

void Sgd::zero_grad() {
  for (const auto& p : net_.parameters()) p.tensor->zero_grad();
}

void Sgd::step(double lr) {
  const auto& params = net_.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i].tensor;
    if (t.grad.empty()) continue;  // parameter unused by this graph
    auto& v = velocity_[i];
    for (size_t j = 0; j < t.data.size(); ++j) {
      float g = t.grad[j] + static_cast<float>(weight_decay_) * t.data[j];
      v[j] = static_cast<float>(momentum_) * v[j] + g;
      t.data[j] -= static_cast<float>(lr) * v[j];
    }
  }
}

namespace {

struct Batch {
  TensorRef images;
  std::vector<int> labels;
};

// Copies one CHW sample into the batch buffer, applying the split's
// augmentation. The rng draw order per sample is fixed by kind so runs
// are reproducible.
void place_sample(const Dataset& data, i64 index, float* dst, Pcg32& rng,
                  bool augment) {
  const i64 h = data.height, w = data.width;
  const float* src = data.sample(index);
  bool flip = false;
  i64 dy = 0, dx = 0;
  constexpr i64 kPad = 4;
  bool crop = false;
  if (augment) {
    if (data.augment == AugmentKind::hflip) {
      flip = rng.next_double() < 0.5;
    } else if (data.augment == AugmentKind::pad_crop_hflip) {
      dy = static_cast<i64>(rng.next_below(2 * kPad + 1)) - kPad;
      dx = static_cast<i64>(rng.next_below(2 * kPad + 1)) - kPad;
      crop = true;
      flip = rng.next_double() < 0.5;
    }
  }
  for (i64 c = 0; c < 3; ++c) {
    for (i64 y = 0; y < h; ++y) {
      for (i64 x = 0; x < w; ++x) {
        i64 sx = flip ? (w - 1 - x) : x;
        i64 sy = y;
        float v = 0.0f;
        if (crop) {
          i64 yy = sy + dy, xx = sx + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
            v = src[(c * h + yy) * w + xx];
          }
        } else {
          v = src[(c * h + sy) * w + sx];
        }
        dst[(c * h + y) * w + x] = v;
      }
    }
  }
}

Batch make_batch(const Dataset& data, const std::vector<i64>& indices,
                 size_t first, i64 count, Pcg32* aug_rng) {
  Batch b;
  b.images = Tensor::create({count, 3, data.height, data.width});
  for (i64 i = 0; i < count; ++i) {
    i64 idx = indices[first + static_cast<size_t>(i)];
    float* dst = b.images->data.data() + i * 3 * data.height * data.width;
    static Pcg32 dummy(0, 0);
    place_sample(data, idx, dst, aug_rng ? *aug_rng : dummy,
                 aug_rng != nullptr);
    b.labels.push_back(data.labels[static_cast<size_t>(idx)]);
  }
  return b;
}

i64 count_correct(const TensorRef& logits, const std::vector<int>& labels,
                  const Dataset& data, const std::vector<i64>& indices,
                  size_t first, std::array<StratumCount, 4>* strata) {
  auto preds = predict_classes(logits);
  i64 correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    bool hit = preds[i] == labels[i];
    if (hit) ++correct;
    if (strata) {
      i64 idx = indices[first + i];
      Stratum s = data.strata.empty() ? Stratum::none
                                      : data.strata[static_cast<size_t>(idx)];
      auto& slot = (*strata)[static_cast<size_t>(s)];
      slot.total += 1;
      if (hit) slot.correct += 1;
    }
  }
  return correct;
}

}  // namespace

EvalResult evaluate(Network& net, const Dataset& data, i64 batch_size,
                    i64 resolution) {
  if (batch_size < 1) throw UsageError("evaluate: batch_size must be >= 1");
  if (data.size() == 0) throw InputError("evaluate: empty dataset");
  i64 res = resolution > 0 ? resolution : data.height;

  auto check = check_input_resolution(net.spec(), res);
  if (!check.ok) {
    std::string msg = "evaluate: resolution " + std::to_string(res) +
                      " unusable (" + check.reason + ")";
    auto valids =
        valid_input_resolutions(net.spec(), 1, std::max<i64>(4 * res, 256));
    if (!valids.empty()) {
      msg += "; valid sizes:";
      size_t shown = 0;
      for (i64 v : valids) {
        if (shown++ == 12) {
          msg += " ...";
          break;
        }
        msg += " " + std::to_string(v);
      }
    }
    throw InputError(msg);
  }

  EvalResult out;
  out.feature_side = check.stage_resolutions.back();
  out.macs = model_cost(net.spec(), res).total_macs;

  NormParams::Mode saved = net.mode();
  net.set_mode(NormParams::Mode::eval);
  NoGradGuard guard;
  double loss_sum = 0.0;
  i64 correct = 0;
  std::vector<i64> identity(static_cast<size_t>(data.size()));
  std::iota(identity.begin(), identity.end(), 0);
  try {
    for (i64 start = 0; start < data.size(); start += batch_size) {
      i64 count = std::min<i64>(batch_size, data.size() - start);
      Batch b = make_batch(data, identity, static_cast<size_t>(start), count,
                           nullptr);
      TensorRef x = b.images;
      if (res != data.height) x = bilinear_resize(x, res, res);
      auto logits = net.forward(x);
      auto loss = softmax_cross_entropy(logits, b.labels);
      loss_sum += static_cast<double>(loss->data[0]) * count;
      correct += count_correct(logits, b.labels, data, identity,
                               static_cast<size_t>(start), &out.per_stratum);
    }
  } catch (...) {
    net.set_mode(saved);
    throw;
  }
  net.set_mode(saved);
  out.count = data.size();
  out.loss = loss_sum / static_cast<double>(out.count);
  out.top1 = static_cast<double>(correct) / static_cast<double>(out.count);
  return out;
}

TrainResult run_training(const TrainConfig& cfg, const Dataset& train_data,
                         const Dataset& eval_data) {
  cfg.validate();
  if (train_data.size() < cfg.batch_size) {
    throw InputError("train: dataset of " + std::to_string(train_data.size()) +
                     " samples cannot fill one batch of " +
                     std::to_string(cfg.batch_size));
  }
  ArchSpec arch = cfg.arch;
  if (arch.num_classes != train_data.num_classes) {
    arch.num_classes = train_data.num_classes;
    arch.validate();
  }

  TrainResult result{Network::build(arch, cfg.seed), {}, 0, 0, 0, 0, 0};
  Network& net = result.net;
  Sgd opt(net, cfg.momentum, cfg.weight_decay);
  Pcg32 shuffle_rng(cfg.seed, rng_stream::kShuffle);
  Pcg32 aug_rng(cfg.seed, rng_stream::kAugment);

  std::vector<i64> order(static_cast<size_t>(train_data.size()));
  std::iota(order.begin(), order.end(), 0);
  const i64 batches = train_data.size() / cfg.batch_size;

  for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at_epoch(cfg, epoch);
    net.set_mode(NormParams::Mode::train);

    // Fisher-Yates on the shuffle stream; the last partial batch is dropped.
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = shuffle_rng.next_below(static_cast<std::uint32_t>(i));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    i64 correct = 0;
    for (i64 b = 0; b < batches; ++b) {
      Batch batch = make_batch(train_data, order,
                               static_cast<size_t>(b * cfg.batch_size),
                               cfg.batch_size, &aug_rng);
      opt.zero_grad();
      auto logits = net.forward(batch.images);
      auto loss = softmax_cross_entropy(logits, batch.labels);
      float lv = loss->data[0];
      if (!std::isfinite(lv)) {
        throw TrainingDiverged("loss " + std::to_string(lv) + " at epoch " +
                               std::to_string(epoch) + " step " +
                               std::to_string(result.step) + " lr " +
                               std::to_string(lr));
      }
      loss_sum += lv;
      correct += count_correct(logits, batch.labels, train_data, order,
                               static_cast<size_t>(b * cfg.batch_size),
                               nullptr);
      backward(loss);
      opt.step(lr);
      result.step += 1;
    }

    EpochMetrics train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.loss = loss_sum / static_cast<double>(batches);
    train_row.top1 = static_cast<double>(correct) /
                     static_cast<double>(batches * cfg.batch_size);
    result.history.push_back(train_row);

    EvalResult ev = evaluate(net, eval_data, cfg.batch_size);
    result.history.push_back({epoch, "eval", ev.loss, ev.top1});
  }

  net.set_mode(NormParams::Mode::eval);
  result.shuffle_state = shuffle_rng.state();
  result.shuffle_inc = shuffle_rng.inc();
  result.augment_state = aug_rng.state();
  result.augment_inc = aug_rng.inc();
  return result;
}

}  // namespace elastic
