#pragma once

// Parameter-holding building blocks: a Module tree with hierarchical
// parameter names, plus Linear / Conv3d / BatchNorm layers.

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "moodval/ops.hpp"
#include "moodval/rng.hpp"
#include "moodval/tensor.hpp"

namespace moodval::nn {

using NamedTensor = std::pair<std::string, Tensor>;

class Module {
 public:
  virtual ~Module() = default;

  void set_training(bool on);
  bool training() const { return training_; }

  /// Parameters keyed "child.grandchild.name", in registration order.
  std::vector<NamedTensor> named_parameters() const;
  /// Non-trainable state (batch-norm running statistics).
  std::vector<NamedTensor> named_buffers() const;
  std::vector<Tensor> parameters() const;
  std::vector<Tensor> trainable_parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
  void set_requires_grad(bool on);

 protected:
  Tensor register_parameter(std::string name, Tensor t);
  Tensor register_buffer(std::string name, Tensor t);
  template <class M>
  std::shared_ptr<M> register_module(std::string name, std::shared_ptr<M> m) {
    children_.emplace_back(std::move(name), m);
    return m;
  }

 private:
  void collect(const std::string& prefix, bool buffers, std::vector<NamedTensor>& out) const;

  bool training_ = true;
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
  std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
};

/// Fully connected layer; weights and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
class Linear : public Module {
 public:
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng, bool bias = true);
  Tensor forward(const Tensor& x) const { return ops::linear(x, weight_, bias_); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  std::size_t in_features() const { return weight_.dim(1); }
  std::size_t out_features() const { return weight_.dim(0); }

 private:
  Tensor weight_;
  Tensor bias_;
};

class Conv3d : public Module {
 public:
  Conv3d(std::size_t in_channels, std::size_t out_channels, std::array<std::size_t, 3> kernel,
         ops::Conv3dOptions options, Rng& rng, bool bias = true);
  Tensor forward(const Tensor& x) const { return ops::conv3d(x, weight_, bias_, options_); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
  ops::Conv3dOptions options_;
};

class BatchNorm : public Module {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x);

 private:
  Tensor gamma_, beta_, running_mean_, running_var_;
  double momentum_;
  double eps_;
};

}  // namespace moodval::nn
