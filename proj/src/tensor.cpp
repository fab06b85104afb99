#include "moodval/tensor.hpp"

#include <unordered_set>

#include "moodval/error.hpp"

namespace moodval {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  impl_->value.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::from_buffer(Shape shape, Buffer values, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  if (values.size() != shape_numel(shape)) {
    throw ValidationError("tensor values size " + std::to_string(values.size()) +
                          " does not match shape " + shape_string(shape));
  }
  t.impl_->shape = std::move(shape);
  t.impl_->value = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor::Tensor(Shape shape, const std::vector<double>& values, bool requires_grad)
    : Tensor(from_buffer(std::move(shape), Buffer(values.begin(), values.end()), requires_grad)) {}

Tensor Tensor::scalar(double value) { return from_buffer(Shape{1}, Buffer{value}); }

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->value.begin(), t.impl_->value.end(), value);
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ValidationError("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->value.size(); }

std::span<double> Tensor::values() { return impl_->value; }
std::span<const double> Tensor::values() const { return impl_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ValidationError("item() on tensor of shape " + shape_string(shape()));
  return impl_->value[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }

std::span<double> Tensor::grad() { return impl_->ensure_grad(); }
std::span<const double> Tensor::grad() const { return impl_->ensure_grad(); }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ValidationError("backward() requires a scalar, got shape " + shape_string(shape()));
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  impl_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  for (Impl* node : order) {
    if (node->backward_fn) {
      node->backward_fn = nullptr;
      node->parents.clear();
    }
  }
}

Tensor Tensor::detach() const { return from_buffer(shape(), impl_->value); }

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, Buffer values,
                   const std::vector<Tensor>& inputs,
                   std::function<void(Tensor::Impl&)> backward_fn) {
  Tensor out = Tensor::from_buffer(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool needs = false;
  for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  if (!needs) return out;
  auto& impl = *out.impl();
  impl.requires_grad = true;
  for (const auto& t : inputs) {
    if (t.defined()) impl.parents.push_back(t.impl());
  }
  impl.backward_fn = std::move(backward_fn);
  return out;
}

Tensor make_result(Shape shape, Buffer values,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Tensor::Impl&)> backward_fn) {
  std::vector<Tensor> list;
  list.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    if (t && t->defined()) list.push_back(*t);
  }
  return make_result(std::move(shape), std::move(values), list, std::move(backward_fn));
}

}  // namespace detail

}  // namespace moodval
