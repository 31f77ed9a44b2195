#include "elastic/network.hpp"

#include <sstream>

namespace elastic {

Network Network::build(const ArchSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec_ = spec;
  Pcg32 rng(seed, rng_stream::kInit);

  net.stem_.conv = ConvParams::create(3, spec.stem.out_channels,
                                      spec.stem.kernel, spec.stem.stride,
                                      spec.stem.padding, 1, false, rng);
  net.stem_.bn = NormParams::create(spec.stem.out_channels);

  net.transitions_.resize(spec.stages.size());
  i64 stream_channels = spec.stem.out_channels;
  for (size_t si = 0; si < spec.stages.size(); ++si) {
    const StageSpec& st = spec.stages[si];
    if (spec.family == Family::densenet && st.stride_on_entry == 2) {
      Transition tr;
      tr.bn = NormParams::create(stream_channels);
      i64 squeezed =
          (Rational(stream_channels) * spec.transition_compression).floor_div();
      tr.conv = ConvParams::create(stream_channels, squeezed, 1, 1, 0, 1,
                                   false, rng);
      net.transitions_[si] = std::move(tr);
      stream_channels = squeezed;
    }
    std::vector<BlockParams> blocks;
    for (i64 bi = 0; bi < st.num_blocks; ++bi) {
      ElasticBlockSpec bs = block_spec_at(spec, si, bi);
      blocks.push_back(make_block(bs, rng));
      stream_channels = bs.effective_out_channels();
    }
    net.stages_.push_back(std::move(blocks));
  }

  if (spec.family == Family::densenet) {
    net.final_norm_ = NormParams::create(stream_channels);
  }
  net.fc_ = LinearParams::create(stream_channels, spec.num_classes, rng);
  net.register_all();
  net.set_mode(NormParams::Mode::train);
  return net;
}

Network::Network(Network&& other) { *this = std::move(other); }

Network& Network::operator=(Network&& other) {
  if (this == &other) return *this;
  spec_ = std::move(other.spec_);
  stem_ = std::move(other.stem_);
  stages_ = std::move(other.stages_);
  transitions_ = std::move(other.transitions_);
  final_norm_ = std::move(other.final_norm_);
  fc_ = std::move(other.fc_);
  mode_ = other.mode_;
  register_all();
  return *this;
}

void Network::register_all() {
  params_.clear();
  norms_.clear();
  auto on_tensor = [this](const std::string& name, const TensorRef& t) {
    params_.push_back({name, t});
  };
  auto on_norm = [this](const std::string& name, NormParams* n) {
    norms_.push_back({name, n});
  };
  on_tensor("stem.conv.weight", stem_.conv.weight);
  on_tensor("stem.bn.gamma", stem_.bn.gamma);
  on_tensor("stem.bn.beta", stem_.bn.beta);
  on_norm("stem.bn", &stem_.bn);
  for (size_t si = 0; si < stages_.size(); ++si) {
    if (transitions_[si]) {
      std::string t = "trans" + std::to_string(si);
      on_tensor(t + ".bn.gamma", transitions_[si]->bn.gamma);
      on_tensor(t + ".bn.beta", transitions_[si]->bn.beta);
      on_norm(t + ".bn", &transitions_[si]->bn);
      on_tensor(t + ".conv.weight", transitions_[si]->conv.weight);
    }
    for (size_t bi = 0; bi < stages_[si].size(); ++bi) {
      std::string prefix =
          "stage" + std::to_string(si) + ".block" + std::to_string(bi);
      visit_block(stages_[si][bi], prefix, on_tensor, on_norm);
    }
  }
  if (final_norm_) {
    on_tensor("final_bn.gamma", final_norm_->gamma);
    on_tensor("final_bn.beta", final_norm_->beta);
    on_norm("final_bn", &*final_norm_);
  }
  on_tensor("fc.weight", fc_->weight);
  on_tensor("fc.bias", fc_->bias);
}

void Network::set_mode(NormParams::Mode mode) {
  mode_ = mode;
  for (auto& n : norms_) n.norm->mode = mode;
}

i64 Network::learnable_param_count() const {
  i64 total = 0;
  for (const auto& p : params_) total += p.tensor->numel();
  return total;
}

TensorRef Network::forward(const TensorRef& x,
                           std::vector<BlockCapture>* captures) {
  if (x->shape.c != 3) {
    throw InputError("network forward: expected 3 input channels, got " +
                     std::to_string(x->shape.c));
  }
  ResolutionCheck rc = check_input_resolution(spec_, x->shape.h);
  if (!rc.ok || x->shape.h != x->shape.w) {
    std::ostringstream os;
    os << "network forward: input " << x->shape.str() << " unusable";
    if (!rc.ok) os << " (" << rc.reason << ")";
    if (x->shape.h != x->shape.w) os << " (input must be square)";
    std::vector<i64> valid =
        valid_input_resolutions(spec_, spec_.min_resolution(),
                                spec_.input_resolution * 4);
    os << "; valid sizes include:";
    size_t shown = 0;
    for (i64 v : valid) {
      os << " " << v;
      if (++shown >= 12) break;
    }
    throw InputError(os.str());
  }

  TensorRef t = relu(batch_norm(conv2d(x, stem_.conv), stem_.bn));
  if (spec_.stem.pool == StemPool::max3s2) t = max_pool2d(t, 3, 2, 1);

  for (size_t si = 0; si < stages_.size(); ++si) {
    if (transitions_[si]) {
      t = relu(batch_norm(t, transitions_[si]->bn));
      t = conv2d(t, transitions_[si]->conv);
      t = avg_pool2(t);
    }
    for (size_t bi = 0; bi < stages_[si].size(); ++bi) {
      bool want_capture =
          captures && block_is_elastic(spec_, si, static_cast<i64>(bi));
      if (want_capture) {
        BlockCapture cap;
        cap.stage = si;
        cap.block = static_cast<i64>(bi);
        t = block_forward(t, stages_[si][bi], &cap.trace);
        captures->push_back(std::move(cap));
      } else {
        t = block_forward(t, stages_[si][bi]);
      }
    }
  }

  if (final_norm_) t = relu(batch_norm(t, *final_norm_));
  t = global_avg_pool(t);
  return linear(t, *fc_);
}

}  // namespace elastic
