#pragma once

#include <optional>
#include <string>
#include <vector>

#include "elastic/arch.hpp"

namespace elastic {

struct NamedParam {
  std::string name;
  TensorRef tensor;
};

struct NamedNorm {
  std::string name;
  NormParams* norm;
};

// Per-elastic-block activations captured during a forward pass.
struct BlockCapture {
  size_t stage{0};
  i64 block{0};
  BranchTrace trace;
};

// A built, runnable model: parameters initialized (He fan-in normal from the
// given seed, consumed in a fixed architecture order), a flat named-parameter
// registry for the optimizer and checkpoints, and a forward that assembles
// the autograd graph.
class Network {
 public:
  static Network build(const ArchSpec& spec, std::uint64_t seed);

  // The registries hold pointers into member storage, so moves re-register.
  Network(Network&& other);
  Network& operator=(Network&& other);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const ArchSpec& spec() const { return spec_; }

  // Logits (N, num_classes, 1, 1). Throws InputError when the input cannot
  // flow through the stride/branch structure; captures, when given, receive
  // one entry per elastic block in network order.
  TensorRef forward(const TensorRef& x,
                    std::vector<BlockCapture>* captures = nullptr);

  void set_mode(NormParams::Mode mode);
  NormParams::Mode mode() const { return mode_; }

  const std::vector<NamedParam>& parameters() const { return params_; }
  const std::vector<NamedNorm>& norms() { return norms_; }

  i64 learnable_param_count() const;
  i64 elastic_block_count() const { return count_elastic_blocks(spec_); }

 private:
  Network() = default;
  void register_all();

  ArchSpec spec_;
  ConvBn stem_;
  std::vector<std::vector<BlockParams>> stages_;
  struct Transition {
    NormParams bn;
    ConvParams conv;
  };
  std::vector<std::optional<Transition>> transitions_;  // one slot per stage
  std::optional<NormParams> final_norm_;
  std::optional<LinearParams> fc_;

  std::vector<NamedParam> params_;
  std::vector<NamedNorm> norms_;
  NormParams::Mode mode_{NormParams::Mode::train};
};

}  // namespace elastic
