#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "elastic/errors.hpp"

namespace elastic {

using i64 = std::int64_t;

// Dense NCHW shape. Rank-4 everywhere; vectors are (N,K,1,1), scalars
// (1,1,1,1), conv weights (Cout, Cin/groups, kh, kw).
struct Shape {
  i64 n{1}, c{1}, h{1}, w{1};

  i64 numel() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor;
using TensorRef = std::shared_ptr<Tensor>;

// A float32 buffer plus the reverse-mode bookkeeping needed to run backward
// from a scalar loss. Graphs are built implicitly by the ops: each op output
// holds shared_ptr edges to its inputs and a closure that pushes gradient to
// them. There is no global tape, so independent graphs never interact.
class Tensor : public std::enable_shared_from_this<Tensor> {
 public:
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until backward() reaches this tensor
  bool requires_grad{false};

  std::vector<TensorRef> parents;
  std::function<void(Tensor&)> backward_fn;

  static TensorRef create(Shape s, bool requires_grad = false);
  static TensorRef full(Shape s, float value, bool requires_grad = false);
  static TensorRef from(Shape s, std::vector<float> values,
                        bool requires_grad = false);

  i64 numel() const { return shape.numel(); }
  bool is_leaf() const { return parents.empty(); }

  i64 index(i64 n, i64 c, i64 h, i64 w) const {
    return ((n * shape.c + c) * shape.h + h) * shape.w + w;
  }
  float& at(i64 n, i64 c, i64 h, i64 w) { return data[index(n, c, h, w)]; }
  float at(i64 n, i64 c, i64 h, i64 w) const { return data[index(n, c, h, w)]; }

  void ensure_grad();  // allocate and zero if absent
  void zero_grad();

 private:
  Tensor() = default;
};

// True when an op consuming t must participate in the graph: t is either a
// trainable leaf or an interior node that still has gradient to propagate.
inline bool wants_grad(const Tensor& t) {
  return t.requires_grad || !t.parents.empty();
}

bool any_wants_grad(const std::vector<TensorRef>& ts);

// While a guard is alive, ops do not record graph edges; forwards behave as
// pure functions and intermediates free as soon as the last reference drops.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Runs reverse-mode accumulation from a scalar loss. Topological order is
// derived from the graph structure alone (deterministic for a fixed program);
// gradients of shared inputs accumulate by addition across all consumers.
// Throws UsageError when loss is not a scalar.
void backward(const TensorRef& loss);

void throw_shape_mismatch(const std::string& op, const std::string& detail);

}  // namespace elastic
