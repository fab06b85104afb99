#include <atomic>

#include "moodval/error.hpp"
#include "moodval/kernels.hpp"

namespace moodval::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

void set_backend(Backend b) noexcept { g_backend.store(b); }
Backend backend() noexcept { return g_backend.load(); }

std::array<std::size_t, 3> ConvShape::out_size() const {
  std::array<std::size_t, 3> out{};
  for (int d = 0; d < 3; ++d) {
    out[d] = (in_size[d] + 2 * padding[d] - kernel[d]) / stride[d] + 1;
  }
  return out;
}

std::size_t ConvShape::out_plane() const {
  auto o = out_size();
  return o[0] * o[1] * o[2];
}

void ConvShape::validate() const {
  for (int d = 0; d < 3; ++d) {
    if (kernel[d] == 0 || stride[d] == 0) throw ValidationError("conv kernel/stride must be positive");
    if (in_size[d] + 2 * padding[d] < kernel[d]) {
      throw ValidationError("conv kernel larger than padded input extent");
    }
  }
}

namespace reference {

void conv3d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const auto o = s.out_size();
  const auto& in = s.in_size;
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t co = 0; co < s.out_channels; ++co)
      for (std::size_t ot = 0; ot < o[0]; ++ot)
        for (std::size_t oh = 0; oh < o[1]; ++oh)
          for (std::size_t ow = 0; ow < o[2]; ++ow) {
            double acc = bias.empty() ? 0.0 : bias[co];
            for (std::size_t ci = 0; ci < s.in_channels; ++ci)
              for (std::size_t kt = 0; kt < s.kernel[0]; ++kt)
                for (std::size_t kh = 0; kh < s.kernel[1]; ++kh)
                  for (std::size_t kw = 0; kw < s.kernel[2]; ++kw) {
                    const auto it = static_cast<std::ptrdiff_t>(ot * s.stride[0] + kt) -
                                    static_cast<std::ptrdiff_t>(s.padding[0]);
                    const auto ih = static_cast<std::ptrdiff_t>(oh * s.stride[1] + kh) -
                                    static_cast<std::ptrdiff_t>(s.padding[1]);
                    const auto iw = static_cast<std::ptrdiff_t>(ow * s.stride[2] + kw) -
                                    static_cast<std::ptrdiff_t>(s.padding[2]);
                    if (it < 0 || ih < 0 || iw < 0 ||
                        it >= static_cast<std::ptrdiff_t>(in[0]) ||
                        ih >= static_cast<std::ptrdiff_t>(in[1]) ||
                        iw >= static_cast<std::ptrdiff_t>(in[2]))
                      continue;
                    const std::size_t x_idx =
                        (((n * s.in_channels + ci) * in[0] + it) * in[1] + ih) * in[2] + iw;
                    const std::size_t w_idx =
                        (((co * s.in_channels + ci) * s.kernel[0] + kt) * s.kernel[1] + kh) *
                            s.kernel[2] + kw;
                    acc += input[x_idx] * weight[w_idx];
                  }
            output[(((n * s.out_channels + co) * o[0] + ot) * o[1] + oh) * o[2] + ow] = acc;
          }
}

void conv3d_backward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const auto o = s.out_size();
  const auto& in = s.in_size;
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t co = 0; co < s.out_channels; ++co)
      for (std::size_t ot = 0; ot < o[0]; ++ot)
        for (std::size_t oh = 0; oh < o[1]; ++oh)
          for (std::size_t ow = 0; ow < o[2]; ++ow) {
            const double go =
                grad_output[(((n * s.out_channels + co) * o[0] + ot) * o[1] + oh) * o[2] + ow];
            if (!grad_bias.empty()) grad_bias[co] += go;
            for (std::size_t ci = 0; ci < s.in_channels; ++ci)
              for (std::size_t kt = 0; kt < s.kernel[0]; ++kt)
                for (std::size_t kh = 0; kh < s.kernel[1]; ++kh)
                  for (std::size_t kw = 0; kw < s.kernel[2]; ++kw) {
                    const auto it = static_cast<std::ptrdiff_t>(ot * s.stride[0] + kt) -
                                    static_cast<std::ptrdiff_t>(s.padding[0]);
                    const auto ih = static_cast<std::ptrdiff_t>(oh * s.stride[1] + kh) -
                                    static_cast<std::ptrdiff_t>(s.padding[1]);
                    const auto iw = static_cast<std::ptrdiff_t>(ow * s.stride[2] + kw) -
                                    static_cast<std::ptrdiff_t>(s.padding[2]);
                    if (it < 0 || ih < 0 || iw < 0 ||
                        it >= static_cast<std::ptrdiff_t>(in[0]) ||
                        ih >= static_cast<std::ptrdiff_t>(in[1]) ||
                        iw >= static_cast<std::ptrdiff_t>(in[2]))
                      continue;
                    const std::size_t x_idx =
                        (((n * s.in_channels + ci) * in[0] + it) * in[1] + ih) * in[2] + iw;
                    const std::size_t w_idx =
                        (((co * s.in_channels + ci) * s.kernel[0] + kt) * s.kernel[1] + kh) *
                            s.kernel[2] + kw;
                    if (!grad_weight.empty()) grad_weight[w_idx] += go * input[x_idx];
                    if (!grad_input.empty()) grad_input[x_idx] += go * weight[w_idx];
                  }
          }
}

void linear_forward(const LinearShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_features; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t i = 0; i < s.in_features; ++i) {
        acc += input[b * s.in_features + i] * weight[o * s.in_features + i];
      }
      output[b * s.out_features + o] = acc;
    }
}

void linear_backward(const LinearShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_features; ++o) {
      const double go = grad_output[b * s.out_features + o];
      if (!grad_bias.empty()) grad_bias[o] += go;
      for (std::size_t i = 0; i < s.in_features; ++i) {
        if (!grad_weight.empty()) grad_weight[o * s.in_features + i] += go * input[b * s.in_features + i];
        if (!grad_input.empty()) grad_input[b * s.in_features + i] += go * weight[o * s.in_features + i];
      }
    }
}

}  // namespace reference

void conv3d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  if (backend() == Backend::reference) {
    reference::conv3d_forward(s, input, weight, bias, output);
  } else {
    parallel::conv3d_forward(s, input, weight, bias, output);
  }
}

void conv3d_backward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  if (backend() == Backend::reference) {
    reference::conv3d_backward(s, input, weight, grad_output, grad_input, grad_weight, grad_bias);
  } else {
    parallel::conv3d_backward(s, input, weight, grad_output, grad_input, grad_weight, grad_bias);
  }
}

void linear_forward(const LinearShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  if (backend() == Backend::reference) {
    reference::linear_forward(s, input, weight, bias, output);
  } else {
    parallel::linear_forward(s, input, weight, bias, output);
  }
}

void linear_backward(const LinearShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  if (backend() == Backend::reference) {
    reference::linear_backward(s, input, weight, grad_output, grad_input, grad_weight, grad_bias);
  } else {
    parallel::linear_backward(s, input, weight, grad_output, grad_input, grad_weight, grad_bias);
  }
}

}  // namespace moodval::kernels
