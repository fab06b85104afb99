#include "moodval/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moodval/error.hpp"
#include "moodval/kernels.hpp"

namespace moodval::ops {

using Impl = Tensor::Impl;
using detail::make_result;

namespace {

bool wants_grad(const std::shared_ptr<Impl>& t) { return t && t->requires_grad; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
  }
}

// Shape padded on the left to rank 5 plus the matching strides of a
// "broadcast partner" whose size-1 axes get stride 0.
struct Strided5 {
  std::array<std::size_t, 5> dims{1, 1, 1, 1, 1};
  std::array<std::size_t, 5> partner_stride{0, 0, 0, 0, 0};
};

Strided5 broadcast_layout(const Shape& full, const Shape& partner) {
  if (full.size() > 5 || full.size() != partner.size()) {
    throw ValidationError("broadcast: rank mismatch " + shape_string(full) + " vs " +
                          shape_string(partner));
  }
  Strided5 s;
  const std::size_t offset = 5 - full.size();
  std::size_t stride = 1;
  for (std::size_t i = full.size(); i-- > 0;) {
    if (partner[i] != full[i] && partner[i] != 1) {
      throw ValidationError("broadcast: incompatible shapes " + shape_string(full) + " vs " +
                            shape_string(partner));
    }
    s.dims[offset + i] = full[i];
    s.partner_stride[offset + i] = partner[i] == 1 ? 0 : stride;
    stride *= partner[i];
  }
  return s;
}

// Calls f(i, j) for every linear index i of the full tensor, j being the
// partner's linear index.
template <class F>
void for_each_broadcast(const Strided5& s, F&& f) {
  std::size_t i = 0;
  const auto& d = s.dims;
  const auto& st = s.partner_stride;
  for (std::size_t a = 0; a < d[0]; ++a)
    for (std::size_t b = 0; b < d[1]; ++b)
      for (std::size_t c = 0; c < d[2]; ++c)
        for (std::size_t e = 0; e < d[3]; ++e) {
          const std::size_t base = a * st[0] + b * st[1] + c * st[2] + e * st[3];
          for (std::size_t g = 0; g < d[4]; ++g, ++i) f(i, base + g * st[4]);
        }
}

Shape reduced_shape(const Shape& shape, std::span<const std::size_t> axes) {
  Shape out = shape;
  for (auto a : axes) {
    if (a >= shape.size()) throw ValidationError("reduction axis out of range");
    out[a] = 1;
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto ia = a.impl();
  auto ib = b.impl();
  return make_result(a.shape(), std::move(out), {&a, &b}, [ia, ib](Impl& self) {
    for (const auto& t : {ia, ib}) {
      if (!wants_grad(t)) continue;
      auto& g = t->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  Buffer out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {&x}, [ix, factor](Impl& self) {
    auto& g = ix->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  Buffer out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] < 0.0 ? 0.0 : xv[i];  // NaN passes through
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {&x}, [ix](Impl& self) {
    auto& g = ix->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ix->value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  Buffer out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {&x}, [ix, lo, hi](Impl& self) {
    auto& g = ix->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ix->value[i] >= lo && ix->value[i] <= hi) g[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  Buffer out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {&x}, [ix](Impl& self) {
    auto& g = ix->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor mul_broadcast(const Tensor& x, const Tensor& gate) {
  const auto layout = broadcast_layout(x.shape(), gate.shape());
  Buffer out(x.numel());
  const auto xv = x.values();
  const auto gv = gate.values();
  for_each_broadcast(layout, [&](std::size_t i, std::size_t j) { out[i] = xv[i] * gv[j]; });
  auto ix = x.impl();
  auto ig = gate.impl();
  return make_result(x.shape(), std::move(out), {&x, &gate}, [ix, ig, layout](Impl& self) {
    const bool gx = wants_grad(ix);
    const bool gg = wants_grad(ig);
    double* dx = gx ? ix->ensure_grad().data() : nullptr;
    double* dg = gg ? ig->ensure_grad().data() : nullptr;
    for_each_broadcast(layout, [&](std::size_t i, std::size_t j) {
      if (gx) dx[i] += self.grad[i] * ig->value[j];
      if (gg) dg[j] += self.grad[i] * ix->value[i];
    });
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ValidationError("linear: incompatible shapes " + shape_string(x.shape()) + " x " +
                          shape_string(weight.shape()));
  }
  kernels::LinearShape s{x.dim(0), x.dim(1), weight.dim(0)};
  if (bias.defined() && bias.numel() != s.out_features) {
    throw ValidationError("linear: bias size mismatch");
  }
  Buffer out(s.batch * s.out_features);
  kernels::linear_forward(s, x.values(), weight.values(),
                          bias.defined() ? bias.values() : std::span<const double>{}, out);
  auto ix = x.impl();
  auto iw = weight.impl();
  auto ib = bias.defined() ? bias.impl() : nullptr;
  return make_result({s.batch, s.out_features}, std::move(out), {&x, &weight, &bias},
                     [ix, iw, ib, s](Impl& self) {
                       std::span<double> gx, gw, gb;
                       if (wants_grad(ix)) gx = ix->ensure_grad();
                       if (wants_grad(iw)) gw = iw->ensure_grad();
                       if (wants_grad(ib)) gb = ib->ensure_grad();
                       kernels::linear_backward(s, ix->value, iw->value, self.grad, gx, gw, gb);
                     });
}

Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv3dOptions options) {
  if (x.rank() != 5 || weight.rank() != 5 || x.dim(1) != weight.dim(1)) {
    throw ValidationError("conv3d: incompatible shapes " + shape_string(x.shape()) + " * " +
                          shape_string(weight.shape()));
  }
  kernels::ConvShape s;
  s.batch = x.dim(0);
  s.in_channels = x.dim(1);
  s.out_channels = weight.dim(0);
  s.in_size = {x.dim(2), x.dim(3), x.dim(4)};
  s.kernel = {weight.dim(2), weight.dim(3), weight.dim(4)};
  s.stride = options.stride;
  s.padding = options.padding;
  s.validate();
  const auto o = s.out_size();
  Buffer out(s.batch * s.out_channels * s.out_plane());
  kernels::conv3d_forward(s, x.values(), weight.values(),
                          bias.defined() ? bias.values() : std::span<const double>{}, out);
  auto ix = x.impl();
  auto iw = weight.impl();
  auto ib = bias.defined() ? bias.impl() : nullptr;
  return make_result({s.batch, s.out_channels, o[0], o[1], o[2]}, std::move(out),
                     {&x, &weight, &bias}, [ix, iw, ib, s](Impl& self) {
                       std::span<double> gx, gw, gb;
                       if (wants_grad(ix)) gx = ix->ensure_grad();
                       if (wants_grad(iw)) gw = iw->ensure_grad();
                       if (wants_grad(ib)) gb = ib->ensure_grad();
                       kernels::conv3d_backward(s, ix->value, iw->value, self.grad, gx, gw, gb);
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training, double momentum,
                  double eps) {
  if (x.rank() < 2) throw ValidationError("batch_norm: rank must be >= 2");
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  if (gamma.numel() != channels || beta.numel() != channels ||
      running_mean.numel() != channels || running_var.numel() != channels) {
    throw ValidationError("batch_norm: parameter size mismatch for " + shape_string(x.shape()));
  }
  const std::size_t inner = x.numel() / (batch * channels);
  const std::size_t count = batch * inner;
  const auto xv = x.values();
  Buffer mean(channels), invstd(channels);
  if (training) {
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = xv.data() + (b * channels + c) * inner;
        for (std::size_t r = 0; r < inner; ++r) s += p[r];
      }
      const double mu = s / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = xv.data() + (b * channels + c) * inner;
        for (std::size_t r = 0; r < inner; ++r) sq += (p[r] - mu) * (p[r] - mu);
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + eps);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      rm[c] = (1.0 - momentum) * rm[c] + momentum * mu;
      rv[c] = (1.0 - momentum) * rv[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean.values()[c];
      invstd[c] = 1.0 / std::sqrt(running_var.values()[c] + eps);
    }
  }
  Buffer xhat(x.numel());
  Buffer out(x.numel());
  const auto gv = gamma.values();
  const auto bv = beta.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t r = 0; r < inner; ++r) {
        const double h = (xv[base + r] - mean[c]) * invstd[c];
        xhat[base + r] = h;
        out[base + r] = gv[c] * h + bv[c];
      }
    }
  auto ix = x.impl();
  auto ig = gamma.impl();
  auto ib = beta.impl();
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [ix, ig, ib, xhat = std::move(xhat), invstd = std::move(invstd), batch, channels, inner,
       count, training](Impl& self) {
        const auto& dy = self.grad;
        Buffer sum_dy(channels, 0.0), sum_dy_xhat(channels, 0.0);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t r = 0; r < inner; ++r) {
              sum_dy[c] += dy[base + r];
              sum_dy_xhat[c] += dy[base + r] * xhat[base + r];
            }
          }
        if (wants_grad(ig)) {
          auto& g = ig->ensure_grad();
          for (std::size_t c = 0; c < channels; ++c) g[c] += sum_dy_xhat[c];
        }
        if (wants_grad(ib)) {
          auto& g = ib->ensure_grad();
          for (std::size_t c = 0; c < channels; ++c) g[c] += sum_dy[c];
        }
        if (!wants_grad(ix)) return;
        auto& gx = ix->ensure_grad();
        const double m = static_cast<double>(count);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            const double gamma_c = ig->value[c];
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t r = 0; r < inner; ++r) {
              if (training) {
                gx[base + r] += gamma_c * invstd[c] / m *
                                (m * dy[base + r] - sum_dy[c] - xhat[base + r] * sum_dy_xhat[c]);
              } else {
                gx[base + r] += gamma_c * invstd[c] * dy[base + r];
              }
            }
          }
      });
}

Tensor mean_over(const Tensor& x, std::span<const std::size_t> axes) {
  const Shape out_shape = reduced_shape(x.shape(), axes);
  const auto layout = broadcast_layout(x.shape(), out_shape);
  const double count = static_cast<double>(x.numel()) / static_cast<double>(shape_numel(out_shape));
  Buffer out(shape_numel(out_shape), 0.0);
  const auto xv = x.values();
  for_each_broadcast(layout, [&](std::size_t i, std::size_t j) { out[j] += xv[i]; });
  for (auto& v : out) v /= count;
  auto ix = x.impl();
  return make_result(out_shape, std::move(out), {&x}, [ix, layout, count](Impl& self) {
    auto& g = ix->ensure_grad();
    for_each_broadcast(layout, [&](std::size_t i, std::size_t j) { g[i] += self.grad[j] / count; });
  });
}

Tensor max_over(const Tensor& x, std::span<const std::size_t> axes) {
  const Shape out_shape = reduced_shape(x.shape(), axes);
  const auto layout = broadcast_layout(x.shape(), out_shape);
  Buffer out(shape_numel(out_shape), -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> argmax(out.size(), 0);
  const auto xv = x.values();
  for_each_broadcast(layout, [&](std::size_t i, std::size_t j) {
    if (xv[i] > out[j]) {
      out[j] = xv[i];
      argmax[j] = i;
    }
  });
  auto ix = x.impl();
  return make_result(out_shape, std::move(out), {&x},
                     [ix, argmax = std::move(argmax)](Impl& self) {
                       auto& g = ix->ensure_grad();
                       for (std::size_t j = 0; j < argmax.size(); ++j) g[argmax[j]] += self.grad[j];
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ValidationError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw ValidationError("concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.dim(d) != first[d]) {
        throw ValidationError("concat: shape mismatch " + shape_string(p.shape()) + " vs " +
                              shape_string(first));
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Buffer out(shape_numel(out_shape));
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t row = p.dim(axis) * inner;
    const auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * row), row,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + off));
    }
    off += row;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<std::shared_ptr<Impl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result(out_shape, std::move(out), inputs,
                     [impls, offsets, outer, out_row](Impl& self) {
                       for (std::size_t k = 0; k < impls.size(); ++k) {
                         if (!wants_grad(impls[k])) continue;
                         auto& g = impls[k]->ensure_grad();
                         const std::size_t row = g.size() / outer;
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t r = 0; r < row; ++r)
                             g[o * row + r] += self.grad[o * out_row + offsets[k] + r];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
    throw ValidationError("slice: invalid range [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") on " + shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t in_row = x.dim(axis) * inner;
  const std::size_t out_row = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Buffer out(shape_numel(out_shape));
  const auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < out_row; ++r) out[o * out_row + r] = xv[o * in_row + off + r];
  auto ix = x.impl();
  return make_result(out_shape, std::move(out), {&x},
                     [ix, outer, in_row, out_row, off](Impl& self) {
                       auto& g = ix->ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t r = 0; r < out_row; ++r)
                           g[o * in_row + off + r] += self.grad[o * out_row + r];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ValidationError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  Buffer out(x.values().begin(), x.values().end());
  auto ix = x.impl();
  return make_result(std::move(shape), std::move(out), {&x}, [ix](Impl& self) {
    auto& g = ix->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ValidationError("dropout: p must be < 1");
  const double keep_scale = 1.0 / (1.0 - p);
  Buffer mask(x.numel());
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u >= p ? keep_scale : 0.0;
  }
  Buffer out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {&x}, [ix, mask = std::move(mask)](Impl& self) {
    auto& g = ix->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto ix = x.impl();
  return make_result({1}, {s}, {&x}, [ix](Impl& self) {
    auto& g = ix->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

}  // namespace moodval::ops
