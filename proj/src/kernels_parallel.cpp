#include <Eigen/Core>
#include <vector>

#include "moodval/kernels.hpp"
#include "moodval/tensor.hpp"

namespace moodval::kernels::parallel {

using moodval::Buffer;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// Unfolds one sample into a (patch x out_plane) column matrix.
void im2col(const ConvShape& s, const double* x, double* col) {
  const auto o = s.out_size();
  const auto& in = s.in_size;
  const std::size_t plane = o[0] * o[1] * o[2];
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < s.in_channels; ++ci)
    for (std::size_t kt = 0; kt < s.kernel[0]; ++kt)
      for (std::size_t kh = 0; kh < s.kernel[1]; ++kh)
        for (std::size_t kw = 0; kw < s.kernel[2]; ++kw, ++row) {
          double* dst = col + row * plane;
          const double* src = x + ci * s.in_plane();
          std::size_t p = 0;
          for (std::size_t ot = 0; ot < o[0]; ++ot) {
            const auto it = static_cast<std::ptrdiff_t>(ot * s.stride[0] + kt) -
                            static_cast<std::ptrdiff_t>(s.padding[0]);
            const bool t_ok = it >= 0 && it < static_cast<std::ptrdiff_t>(in[0]);
            for (std::size_t oh = 0; oh < o[1]; ++oh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * s.stride[1] + kh) -
                              static_cast<std::ptrdiff_t>(s.padding[1]);
              const bool h_ok = t_ok && ih >= 0 && ih < static_cast<std::ptrdiff_t>(in[1]);
              for (std::size_t ow = 0; ow < o[2]; ++ow, ++p) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * s.stride[2] + kw) -
                                static_cast<std::ptrdiff_t>(s.padding[2]);
                dst[p] = (h_ok && iw >= 0 && iw < static_cast<std::ptrdiff_t>(in[2]))
                             ? src[(static_cast<std::size_t>(it) * in[1] +
                                    static_cast<std::size_t>(ih)) * in[2] +
                                   static_cast<std::size_t>(iw)]
                             : 0.0;
              }
            }
          }
        }
}

// Inverse of im2col, accumulating overlapping taps.
void col2im_add(const ConvShape& s, const double* col, double* dx) {
  const auto o = s.out_size();
  const auto& in = s.in_size;
  const std::size_t plane = o[0] * o[1] * o[2];
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < s.in_channels; ++ci)
    for (std::size_t kt = 0; kt < s.kernel[0]; ++kt)
      for (std::size_t kh = 0; kh < s.kernel[1]; ++kh)
        for (std::size_t kw = 0; kw < s.kernel[2]; ++kw, ++row) {
          const double* src = col + row * plane;
          double* dst = dx + ci * s.in_plane();
          std::size_t p = 0;
          for (std::size_t ot = 0; ot < o[0]; ++ot) {
            const auto it = static_cast<std::ptrdiff_t>(ot * s.stride[0] + kt) -
                            static_cast<std::ptrdiff_t>(s.padding[0]);
            const bool t_ok = it >= 0 && it < static_cast<std::ptrdiff_t>(in[0]);
            for (std::size_t oh = 0; oh < o[1]; ++oh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * s.stride[1] + kh) -
                              static_cast<std::ptrdiff_t>(s.padding[1]);
              const bool h_ok = t_ok && ih >= 0 && ih < static_cast<std::ptrdiff_t>(in[1]);
              for (std::size_t ow = 0; ow < o[2]; ++ow, ++p) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * s.stride[2] + kw) -
                                static_cast<std::ptrdiff_t>(s.padding[2]);
                if (h_ok && iw >= 0 && iw < static_cast<std::ptrdiff_t>(in[2])) {
                  dst[(static_cast<std::size_t>(it) * in[1] + static_cast<std::size_t>(ih)) *
                          in[2] + static_cast<std::size_t>(iw)] += src[p];
                }
              }
            }
          }
        }
}

}  // namespace

void conv3d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t patch = s.patch();
  const std::size_t plane = s.out_plane();
  const auto batch = static_cast<std::ptrdiff_t>(s.batch);
  ConstMap w(weight.data(), static_cast<Eigen::Index>(s.out_channels),
             static_cast<Eigen::Index>(patch));

#pragma omp parallel
  {
    Buffer col(patch * plane);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
      im2col(s, input.data() + static_cast<std::size_t>(n) * s.in_channels * s.in_plane(),
             col.data());
      MutMap out(output.data() + static_cast<std::size_t>(n) * s.out_channels * plane,
                 static_cast<Eigen::Index>(s.out_channels), static_cast<Eigen::Index>(plane));
      out.noalias() = w * ConstMap(col.data(), static_cast<Eigen::Index>(patch),
                                   static_cast<Eigen::Index>(plane));
      if (!bias.empty()) {
        for (std::size_t co = 0; co < s.out_channels; ++co) {
          out.row(static_cast<Eigen::Index>(co)).array() += bias[co];
        }
      }
    }
  }
}

void conv3d_backward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const std::size_t patch = s.patch();
  const std::size_t plane = s.out_plane();
  const std::size_t wsize = s.out_channels * patch;
  const auto batch = static_cast<std::ptrdiff_t>(s.batch);
  const bool want_w = !grad_weight.empty();
  const bool want_b = !grad_bias.empty();
  const bool want_x = !grad_input.empty();
  ConstMap w(weight.data(), static_cast<Eigen::Index>(s.out_channels),
             static_cast<Eigen::Index>(patch));

  Buffer partial_w(want_w ? s.batch * wsize : 0);
  Buffer partial_b(want_b ? s.batch * s.out_channels : 0);

#pragma omp parallel
  {
    Buffer col(patch * plane);
    Buffer dcol(want_x ? patch * plane : 0);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
      const auto un = static_cast<std::size_t>(n);
      ConstMap go(grad_output.data() + un * s.out_channels * plane,
                  static_cast<Eigen::Index>(s.out_channels), static_cast<Eigen::Index>(plane));
      if (want_w) {
        im2col(s, input.data() + un * s.in_channels * s.in_plane(), col.data());
        MutMap gw(partial_w.data() + un * wsize, static_cast<Eigen::Index>(s.out_channels),
                  static_cast<Eigen::Index>(patch));
        gw.noalias() = go * ConstMap(col.data(), static_cast<Eigen::Index>(patch),
                                     static_cast<Eigen::Index>(plane)).transpose();
      }
      if (want_b) {
        for (std::size_t co = 0; co < s.out_channels; ++co) {
          partial_b[un * s.out_channels + co] = go.row(static_cast<Eigen::Index>(co)).sum();
        }
      }
      if (want_x) {
        MutMap dc(dcol.data(), static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
        dc.noalias() = w.transpose() * go;
        col2im_add(s, dcol.data(), grad_input.data() + un * s.in_channels * s.in_plane());
      }
    }
  }

  for (std::size_t n = 0; n < s.batch; ++n) {
    if (want_w) {
      const double* src = partial_w.data() + n * wsize;
      for (std::size_t i = 0; i < wsize; ++i) grad_weight[i] += src[i];
    }
    if (want_b) {
      for (std::size_t co = 0; co < s.out_channels; ++co) {
        grad_bias[co] += partial_b[n * s.out_channels + co];
      }
    }
  }
}

void linear_forward(const LinearShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const auto in_f = static_cast<Eigen::Index>(s.in_features);
  const auto out_f = static_cast<Eigen::Index>(s.out_features);
  ConstMap w(weight.data(), out_f, in_f);
  const auto batch = static_cast<std::ptrdiff_t>(s.batch);
  constexpr std::ptrdiff_t kRows = 16;
  const std::ptrdiff_t chunks = (batch + kRows - 1) / kRows;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < chunks; ++c) {
    const std::ptrdiff_t begin = c * kRows;
    const std::ptrdiff_t rows = std::min(kRows, batch - begin);
    ConstMap x(input.data() + static_cast<std::size_t>(begin) * s.in_features, rows, in_f);
    MutMap y(output.data() + static_cast<std::size_t>(begin) * s.out_features, rows, out_f);
    y.noalias() = x * w.transpose();
    if (!bias.empty()) {
      Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), out_f);
      y.rowwise() += b;
    }
  }
}

void linear_backward(const LinearShape& s, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const auto in_f = static_cast<Eigen::Index>(s.in_features);
  const auto out_f = static_cast<Eigen::Index>(s.out_features);
  const auto rows = static_cast<Eigen::Index>(s.batch);
  ConstMap x(input.data(), rows, in_f);
  ConstMap w(weight.data(), out_f, in_f);
  ConstMap go(grad_output.data(), rows, out_f);
  if (!grad_input.empty()) {
    MutMap gx(grad_input.data(), rows, in_f);
    gx.noalias() += go * w;
  }
  if (!grad_weight.empty()) {
    MutMap gw(grad_weight.data(), out_f, in_f);
    gw.noalias() += go.transpose() * x;
  }
  if (!grad_bias.empty()) {
    Eigen::Map<Eigen::RowVectorXd> gb(grad_bias.data(), out_f);
    gb += go.colwise().sum();
  }
}

}  // namespace moodval::kernels::parallel
