#pragma once

// Differentiable tensor operations. Channel-first layouts throughout:
// (B, C, T, H, W) for clips, (B, C, H, W) for frames, (B, F) for features.

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "moodval/tensor.hpp"

namespace moodval::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

/// Elementwise product where `gate` has the same rank as `x` and each of its
/// dimensions is either equal to x's or 1 (broadcast).
Tensor mul_broadcast(const Tensor& x, const Tensor& gate);

/// y = x W^T + b for x (B, in), W (out, in), b (out) or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Conv3dOptions {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
};

/// x (B, Ci, T, H, W), weight (Co, Ci, kT, kH, kW), bias (Co) or undefined.
Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv3dOptions options);

/// Batch normalisation over axis 1. In training mode uses batch statistics
/// and updates the running buffers in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training,
                  double momentum = 0.1, double eps = 1e-5);

/// Reductions over the listed axes, keeping them as size-1 dimensions.
Tensor mean_over(const Tensor& x, std::span<const std::size_t> axes);
Tensor max_over(const Tensor& x, std::span<const std::size_t> axes);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

/// Inverted dropout; identity when `training` is false or p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training);

/// Sum of all elements as a shape-(1) tensor.
Tensor sum(const Tensor& x);

}  // namespace moodval::ops
