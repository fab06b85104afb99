#pragma once

// Compute kernels behind the convolution and fully-connected ops.
//
// Two implementations share one signature set:
//   parallel::  im2col + Eigen GEMM, OpenMP over the batch axis
//   reference:: direct serial loops, kept as the test oracle
//
// All gradient outputs accumulate (+=). Per-sample weight-gradient partials
// are reduced in sample order, so results do not depend on thread count.

#include <array>
#include <cstddef>
#include <span>

namespace moodval::kernels {

enum class Backend { parallel, reference };

void set_backend(Backend backend) noexcept;
Backend backend() noexcept;

/// RAII backend switch, for tests.
class BackendScope {
 public:
  explicit BackendScope(Backend b) : previous_(backend()) { set_backend(b); }
  ~BackendScope() { set_backend(previous_); }
  BackendScope(const BackendScope&) = delete;
  BackendScope& operator=(const BackendScope&) = delete;

 private:
  Backend previous_;
};

/// Geometry of a 3-D convolution over (N, C, T, H, W) inputs with
/// weights laid out (C_out, C_in, kT, kH, kW).
struct ConvShape {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::array<std::size_t, 3> in_size{1, 1, 1};
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};

  std::array<std::size_t, 3> out_size() const;
  std::size_t in_plane() const { return in_size[0] * in_size[1] * in_size[2]; }
  std::size_t out_plane() const;
  std::size_t patch() const { return in_channels * kernel[0] * kernel[1] * kernel[2]; }
  void validate() const;
};

struct LinearShape {
  std::size_t batch = 1;
  std::size_t in_features = 1;
  std::size_t out_features = 1;
};

namespace reference {
void conv3d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv3d_backward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);
void linear_forward(const LinearShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void linear_backward(const LinearShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);
}  // namespace reference

namespace parallel {
void conv3d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv3d_backward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);
void linear_forward(const LinearShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void linear_backward(const LinearShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);
}  // namespace parallel

// Dispatch on backend(). Empty spans skip the corresponding output.
void conv3d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv3d_backward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);
void linear_forward(const LinearShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void linear_backward(const LinearShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);

}  // namespace moodval::kernels
