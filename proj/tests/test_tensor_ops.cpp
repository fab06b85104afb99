#include <doctest.h>
#include <omp.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "moodval/kernels.hpp"
#include "moodval/ops.hpp"
#include "support.hpp"

using namespace moodval;
using testing::check_gradients;
using testing::probe_loss;
using testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

kernels::ConvShape random_conv_shape(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  kernels::ConvShape s;
  s.batch = pick(1, 3);
  s.in_channels = pick(1, 4);
  s.out_channels = pick(1, 5);
  for (int a = 0; a < 3; ++a) {
    s.kernel[a] = pick(1, 3);
    s.padding[a] = pick(0, s.kernel[a] / 2);
    s.stride[a] = pick(1, 2);
    s.in_size[a] = pick(s.kernel[a], 7);
  }
  return s;
}

}  // namespace

TEST_CASE("conv3d kernels: parallel matches reference") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const auto s = random_conv_shape(rng);
    const auto out = s.out_size();
    const std::size_t out_n = s.batch * s.out_channels * out[0] * out[1] * out[2];
    const auto x = testing::random_vector(rng, s.batch * s.in_channels * s.in_plane());
    const auto w = testing::random_vector(rng, s.out_channels * s.patch());
    const auto b = testing::random_vector(rng, s.out_channels);
    const auto go = testing::random_vector(rng, out_n);

    std::vector<double> y_ref(out_n), y_par(out_n);
    kernels::reference::conv3d_forward(s, x, w, b, y_ref);
    kernels::parallel::conv3d_forward(s, x, w, b, y_par);
    for (std::size_t i = 0; i < out_n; ++i) REQUIRE(y_par[i] == doctest::Approx(y_ref[i]).epsilon(1e-12));

    std::vector<double> gx_ref(x.size()), gw_ref(w.size()), gb_ref(b.size());
    std::vector<double> gx_par(x.size()), gw_par(w.size()), gb_par(b.size());
    kernels::reference::conv3d_backward(s, x, w, go, gx_ref, gw_ref, gb_ref);
    kernels::parallel::conv3d_backward(s, x, w, go, gx_par, gw_par, gb_par);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(gx_par[i] == doctest::Approx(gx_ref[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < w.size(); ++i) REQUIRE(gw_par[i] == doctest::Approx(gw_ref[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(gb_par[i] == doctest::Approx(gb_ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("linear kernels: parallel matches reference") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    kernels::LinearShape s{1 + rng() % 7, 1 + rng() % 9, 1 + rng() % 6};
    const auto x = testing::random_vector(rng, s.batch * s.in_features);
    const auto w = testing::random_vector(rng, s.out_features * s.in_features);
    const auto b = testing::random_vector(rng, s.out_features);
    const auto go = testing::random_vector(rng, s.batch * s.out_features);
    std::vector<double> y_ref(go.size()), y_par(go.size());
    kernels::reference::linear_forward(s, x, w, b, y_ref);
    kernels::parallel::linear_forward(s, x, w, b, y_par);
    for (std::size_t i = 0; i < y_ref.size(); ++i) CHECK(y_par[i] == doctest::Approx(y_ref[i]).epsilon(1e-12));

    std::vector<double> gx_ref(x.size()), gw_ref(w.size()), gb_ref(b.size());
    std::vector<double> gx_par(x.size()), gw_par(w.size()), gb_par(b.size());
    kernels::reference::linear_backward(s, x, w, go, gx_ref, gw_ref, gb_ref);
    kernels::parallel::linear_backward(s, x, w, go, gx_par, gw_par, gb_par);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(gx_par[i] == doctest::Approx(gx_ref[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(gw_par[i] == doctest::Approx(gw_ref[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(gb_par[i] == doctest::Approx(gb_ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("parallel conv3d results do not depend on the thread count") {
  std::mt19937_64 rng(3);
  kernels::ConvShape s;
  s.batch = 5;
  s.in_channels = 3;
  s.out_channels = 4;
  s.in_size = {3, 9, 9};
  s.kernel = {3, 3, 3};
  s.padding = {1, 1, 1};
  const auto x = testing::random_vector(rng, s.batch * s.in_channels * s.in_plane());
  const auto w = testing::random_vector(rng, s.out_channels * s.patch());
  const auto go = testing::random_vector(rng, s.batch * s.out_channels * s.out_plane());

  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<double> gw(w.size());
    kernels::parallel::conv3d_backward(s, x, w, go, {}, gw, {});
    return gw;
  };
  const int saved = omp_get_max_threads();
  const auto one = run(1);
  const auto four = run(4);
  omp_set_num_threads(saved);
  CHECK(one == four);
}

TEST_CASE("conv3d shape validation") {
  kernels::ConvShape s;
  s.in_size = {1, 2, 2};
  s.kernel = {1, 3, 3};
  CHECK_THROWS(s.validate());
  s.padding = {0, 1, 1};
  CHECK_NOTHROW(s.validate());
  CHECK(s.out_size() == std::array<std::size_t, 3>{1, 2, 2});
}

TEST_CASE("op gradients match central differences") {
  std::mt19937_64 rng(4);

  SUBCASE("add, scale, sigmoid") {
    auto a = random_tensor(rng, {2, 3}, true);
    auto b = random_tensor(rng, {2, 3}, true);
    auto loss = [&] { return probe_loss(ops::sigmoid(ops::scale(ops::add(a, b), 1.7))); };
    CHECK(check_gradients(loss, {a, b}).worst_relative < kGradTol);
  }
  SUBCASE("relu away from the kink") {
    auto a = random_tensor(rng, {4, 5}, true);
    for (auto& v : a.values()) v += v >= 0 ? 0.1 : -0.1;
    auto loss = [&] { return probe_loss(ops::relu(a)); };
    CHECK(check_gradients(loss, {a}).worst_relative < kGradTol);
  }
  SUBCASE("clamp away from the bounds") {
    auto a = random_tensor(rng, {3, 4}, true, -2, 2);
    for (auto& v : a.values()) {
      if (std::abs(std::abs(v) - 1.0) < 0.05) v *= 0.9;
    }
    auto loss = [&] { return probe_loss(ops::clamp(a, -1.0, 1.0)); };
    CHECK(check_gradients(loss, {a}).worst_relative < kGradTol);
  }
  SUBCASE("mul_broadcast") {
    auto x = random_tensor(rng, {2, 3, 4}, true);
    auto g = random_tensor(rng, {2, 1, 4}, true);
    auto loss = [&] { return probe_loss(ops::mul_broadcast(x, g)); };
    CHECK(check_gradients(loss, {x, g}).worst_relative < kGradTol);
  }
  SUBCASE("linear") {
    auto x = random_tensor(rng, {3, 4}, true);
    auto w = random_tensor(rng, {2, 4}, true);
    auto b = random_tensor(rng, {2}, true);
    auto loss = [&] { return probe_loss(ops::linear(x, w, b)); };
    CHECK(check_gradients(loss, {x, w, b}).worst_relative < kGradTol);
  }
  SUBCASE("conv3d with stride and padding, both backends") {
    for (auto backend : {kernels::Backend::parallel, kernels::Backend::reference}) {
      kernels::BackendScope scope(backend);
      auto x = random_tensor(rng, {2, 2, 3, 5, 5}, true);
      auto w = random_tensor(rng, {3, 2, 3, 3, 3}, true);
      auto b = random_tensor(rng, {3}, true);
      ops::Conv3dOptions opt{{1, 2, 2}, {1, 1, 1}};
      auto loss = [&] { return probe_loss(ops::conv3d(x, w, b, opt)); };
      CHECK(check_gradients(loss, {x, w, b}).worst_relative < kGradTol);
    }
  }
  SUBCASE("batch_norm in training mode") {
    auto x = random_tensor(rng, {4, 3, 2, 2}, true);
    auto gamma = random_tensor(rng, {3}, true, 0.5, 1.5);
    auto beta = random_tensor(rng, {3}, true);
    auto rm = Tensor::filled({3}, 0.0);
    auto rv = Tensor::filled({3}, 1.0);
    auto loss = [&] { return probe_loss(ops::batch_norm(x, gamma, beta, rm, rv, true)); };
    CHECK(check_gradients(loss, {x, gamma, beta}).worst_relative < kGradTol);
  }
  SUBCASE("mean_over and max_over") {
    auto x = random_tensor(rng, {2, 3, 4}, true);
    const std::array<std::size_t, 2> axes{1, 2};
    auto loss = [&] {
      return ops::add(probe_loss(ops::mean_over(x, axes), 5), probe_loss(ops::max_over(x, axes), 6));
    };
    CHECK(check_gradients(loss, {x}).worst_relative < kGradTol);
  }
  SUBCASE("concat, slice, reshape") {
    auto a = random_tensor(rng, {2, 3}, true);
    auto b = random_tensor(rng, {2, 2}, true);
    auto loss = [&] {
      const std::array<Tensor, 2> parts{a, b};
      auto c = ops::concat(parts, 1);
      return probe_loss(ops::reshape(ops::slice(c, 1, 1, 4), {3, 2}));
    };
    CHECK(check_gradients(loss, {a, b}).worst_relative < kGradTol);
  }
}

TEST_CASE("batch_norm updates running statistics only in training mode") {
  std::mt19937_64 rng(5);
  auto x = random_tensor(rng, {8, 2}, false, 1.0, 3.0);
  auto gamma = Tensor::filled({2}, 1.0);
  auto beta = Tensor::filled({2}, 0.0);
  auto rm = Tensor::filled({2}, 0.0);
  auto rv = Tensor::filled({2}, 1.0);
  ops::batch_norm(x, gamma, beta, rm, rv, false);
  CHECK(rm.values()[0] == 0.0);
  ops::batch_norm(x, gamma, beta, rm, rv, true);
  double mean0 = 0;
  for (std::size_t i = 0; i < 8; ++i) mean0 += x.values()[i * 2];
  mean0 /= 8;
  CHECK(rm.values()[0] == doctest::Approx(0.1 * mean0));
}

TEST_CASE("no-grad guard stops graph recording") {
  auto a = Tensor({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    auto b = ops::scale(a, 2.0);
    CHECK_FALSE(b.requires_grad());
  }
  CHECK(ops::scale(a, 2.0).requires_grad());
}

TEST_CASE("dropout is the identity outside training") {
  std::mt19937_64 rng(6);
  auto x = random_tensor(rng, {3, 4});
  auto y = ops::dropout(x, 0.5, rng, false);
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) ==
        std::vector<double>(x.values().begin(), x.values().end()));
  auto z = ops::dropout(x, 0.5, rng, true);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK((z.values()[i] == 0.0 || z.values()[i] == doctest::Approx(2 * x.values()[i])));
  }
}

TEST_CASE("shape errors raise") {
  auto a = Tensor::filled({2, 3}, 1.0);
  auto b = Tensor::filled({3, 2}, 1.0);
  CHECK_THROWS(ops::add(a, b));
  CHECK_THROWS(ops::reshape(a, {4}));
  CHECK_THROWS(ops::linear(a, Tensor::filled({2, 2}, 1.0), Tensor()));
}
