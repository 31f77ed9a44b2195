#include "elastic/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace elastic {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

static void check_shape(const Shape& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
    throw InputError("tensor shape must have positive dims, got " + s.str());
  }
}

TensorRef Tensor::create(Shape s, bool requires_grad) {
  check_shape(s);
  auto t = TensorRef(new Tensor());
  t->shape = s;
  t->data.assign(static_cast<size_t>(s.numel()), 0.0f);
  t->requires_grad = requires_grad;
  return t;
}

TensorRef Tensor::full(Shape s, float value, bool requires_grad) {
  auto t = create(s, requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

TensorRef Tensor::from(Shape s, std::vector<float> values, bool requires_grad) {
  check_shape(s);
  if (static_cast<i64>(values.size()) != s.numel()) {
    throw InputError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + s.str());
  }
  auto t = TensorRef(new Tensor());
  t->shape = s;
  t->data = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.0f);
}

bool any_wants_grad(const std::vector<TensorRef>& ts) {
  if (!g_grad_enabled) return false;
  for (const auto& t : ts) {
    if (t && wants_grad(*t)) return true;
  }
  return false;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const TensorRef& loss) {
  if (!loss) throw UsageError("backward: null tensor");
  if (loss->numel() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " +
                     loss->shape.str());
  }

  // Iterative postorder DFS over parent edges; the reversed postorder is a
  // valid topological order of the backward pass.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<Tensor*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Tensor* p = node->parents[next_child].get();
      ++next_child;
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Buffers only where gradient can land: backward closures never write to
  // tensors that do not want gradient, so their grads stay empty.
  for (Tensor* t : order) {
    if (wants_grad(*t)) t->ensure_grad();
  }
  loss->ensure_grad();
  loss->grad[0] = 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* t = *it;
    if (t->backward_fn) t->backward_fn(*t);
  }
}

void throw_shape_mismatch(const std::string& op, const std::string& detail) {
  throw InputError(op + ": " + detail);
}

}  // namespace elastic
