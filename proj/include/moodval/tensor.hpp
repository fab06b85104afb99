#pragma once

// Dense double-precision tensor with a reverse-mode autograd tape.
//
// A Tensor is a handle: copies alias the same storage. Operations in ops.hpp
// record a backward closure on their result whenever gradient recording is
// enabled and at least one input requires a gradient.

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace moodval {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Eigen's vectorised reductions peel a
/// pointer-dependent prefix, so unaligned buffers make sums vary between runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  struct Impl;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, const std::vector<double>& values, bool requires_grad = false);
  static Tensor from_buffer(Shape shape, Buffer values, bool requires_grad = false);

  static Tensor scalar(double value);
  static Tensor filled(Shape shape, double value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> values();
  std::span<const double> values() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  /// Gradient buffer (allocated zero-filled on first access).
  std::span<double> grad();
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Back-propagates from this scalar. The recorded graph is released
  /// afterwards; leaf gradients accumulate.
  void backward() const;

  /// Value copy with no graph history.
  Tensor detach() const;

  const std::shared_ptr<Impl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<Impl> impl_;
};

struct Tensor::Impl {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Impl>> parents;
  std::function<void(Impl&)> backward_fn;

  Buffer& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Wraps freshly computed values as an op result. The backward closure is
/// attached only when some input needs a gradient and recording is on.
Tensor make_result(Shape shape, Buffer values,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Tensor::Impl&)> backward_fn);

Tensor make_result(Shape shape, Buffer values,
                   const std::vector<Tensor>& inputs,
                   std::function<void(Tensor::Impl&)> backward_fn);

}  // namespace detail

}  // namespace moodval
