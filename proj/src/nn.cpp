#include "moodval/nn.hpp"

#include <cmath>

namespace moodval::nn {

void Module::set_training(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) child->set_training(on);
}

void Module::collect(const std::string& prefix, bool buffers,
                     std::vector<NamedTensor>& out) const {
  for (const auto& [name, t] : buffers ? buffers_ : params_) out.emplace_back(prefix + name, t);
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", buffers, out);
}

std::vector<NamedTensor> Module::named_parameters() const {
  std::vector<NamedTensor> out;
  collect("", false, out);
  return out;
}

std::vector<NamedTensor> Module::named_buffers() const {
  std::vector<NamedTensor> out;
  collect("", true, out);
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<Tensor> Module::trainable_parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

void Module::zero_grad() {
  for (auto& [name, t] : named_parameters()) t.zero_grad();
}

void Module::set_requires_grad(bool on) {
  for (auto& [name, t] : named_parameters()) t.set_requires_grad(on);
}

Tensor Module::register_parameter(std::string name, Tensor t) {
  t.set_requires_grad(true);
  params_.emplace_back(std::move(name), t);
  return t;
}

Tensor Module::register_buffer(std::string name, Tensor t) {
  buffers_.emplace_back(std::move(name), t);
  return t;
}

namespace {
Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}
}  // namespace

Linear::Linear(std::size_t in_features, std::size_t out_features, Rng& rng, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  weight_ = register_parameter("weight", uniform_tensor({out_features, in_features}, bound, rng));
  if (bias) bias_ = register_parameter("bias", uniform_tensor({out_features}, bound, rng));
}

Conv3d::Conv3d(std::size_t in_channels, std::size_t out_channels,
               std::array<std::size_t, 3> kernel, ops::Conv3dOptions options, Rng& rng,
               bool bias)
    : options_(options) {
  const std::size_t fan_in = in_channels * kernel[0] * kernel[1] * kernel[2];
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  weight_ = register_parameter(
      "weight",
      uniform_tensor({out_channels, in_channels, kernel[0], kernel[1], kernel[2]}, bound, rng));
  if (bias) bias_ = register_parameter("bias", uniform_tensor({out_channels}, bound, rng));
}

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  gamma_ = register_parameter("gamma", Tensor::filled({channels}, 1.0));
  beta_ = register_parameter("beta", Tensor({channels}));
  running_mean_ = register_buffer("running_mean", Tensor({channels}));
  running_var_ = register_buffer("running_var", Tensor::filled({channels}, 1.0));
}

Tensor BatchNorm::forward(const Tensor& x) {
  return ops::batch_norm(x, gamma_, beta_, running_mean_, running_var_, training(), momentum_,
                         eps_);
}

}  // namespace moodval::nn
