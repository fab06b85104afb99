#include <doctest.h>

#include <cmath>
#include <random>

#include "moodval/error.hpp"
#include "moodval/losses.hpp"
#include "moodval/ops.hpp"
#include "support.hpp"

using namespace moodval;

TEST_CASE("dynamic_weights fixtures") {
  auto w = dynamic_weights(0, 45, 1.0, 2);
  CHECK(w.f == 0.0);
  CHECK(w.g == 1.0);
  w = dynamic_weights(45, 45, 1.0, 2);
  CHECK(w.f == 1.0);
  CHECK(w.g == 0.0);
  w = dynamic_weights(5, 10, 1.0, 2);
  CHECK(w.f == 0.25);
  CHECK(w.g == 0.75);
  w = dynamic_weights(5, 10, 3.0, 1);
  CHECK(w.f == 1.5);
  CHECK(w.g == 0.5);
  CHECK_THROWS_AS(dynamic_weights(0, 0, 1.0, 2), ValidationError);
  CHECK_THROWS_AS(dynamic_weights(11, 10, 1.0, 2), ValidationError);
  CHECK_THROWS_AS(dynamic_weights(1, 10, 0.0, 2), ConfigError);
  CHECK_THROWS_AS(dynamic_weights(1, 10, 1.0, 0), ConfigError);
}

TEST_CASE("dynamic weights sum to one and move monotonically") {
  for (unsigned k = 1; k <= 4; ++k) {
    for (std::size_t m : {1u, 7u, 45u}) {
      DynamicWeights prev = dynamic_weights(0, m, 1.0, k);
      for (std::size_t i = 0; i <= m; ++i) {
        const auto w = dynamic_weights(i, m, 1.0, k);
        CHECK(w.f + w.g == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(w.f >= prev.f);
        CHECK(w.g <= prev.g);
        prev = w;
      }
    }
  }
}

TEST_CASE("valence_loss fixtures") {
  const std::vector<double> y{-1, 0, 1};
  CHECK(valence_loss(y, y, 0.3, 0.7) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(valence_loss(std::vector<double>{0, 0}, std::vector<double>{1, 1}, 1.0, 0.0) == 1.0);
  CHECK(valence_loss(y, std::vector<double>{-0.5, 0, 0.5}, 0.0, 1.0) ==
        doctest::Approx(0.2).epsilon(1e-12));
  const auto parts = valence_loss_parts(y, std::vector<double>{-0.5, 0, 0.5}, 0.5, 0.5);
  CHECK(parts.mse == doctest::Approx(1.0 / 6.0));
  CHECK(parts.one_minus_ccc == doctest::Approx(0.2));
  CHECK(parts.weighted == doctest::Approx(0.5 / 6.0 + 0.1));
  CHECK_THROWS_AS(valence_loss(std::vector<double>{}, std::vector<double>{}, 1, 1), ValidationError);
  CHECK_THROWS_AS(valence_loss(y, std::vector<double>{1, 2}, 1, 1), ValidationError);
}

TEST_CASE("valence_loss is non-negative and zero only at the targets") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> w(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    const auto y = testing::random_vector(rng, n);
    const auto p = testing::random_vector(rng, n);
    const double f = 0.05 + w(rng), g = 0.05 + w(rng);
    CHECK(valence_loss(y, p, f, g) > 0.0);
    CHECK(valence_loss(y, y, f, g) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("valence_loss gradient matches central differences") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 31;
    const auto y = testing::random_vector(rng, n);
    auto p = testing::random_vector(rng, n);
    const double f = w(rng), g = w(rng);
    const auto analytic = valence_loss_gradient(y, p, f, g);

    auto t = Tensor({n}, p, true);
    auto loss = [&] { return valence_loss(t, y, f, g); };
    CHECK(testing::check_gradients(loss, {t}).worst_relative < 1e-4);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = 1e-6;
      auto up = p, down = p;
      up[i] += h;
      down[i] -= h;
      const double numeric = (valence_loss(y, up, f, g) - valence_loss(y, down, f, g)) / (2 * h);
      const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      CHECK(std::abs(numeric - analytic[i]) / scale < 1e-4);
    }
  }
}

TEST_CASE("branch_cross_entropy") {
  const std::vector<double> uniform{0.3, 0.3, 0.3};
  for (std::size_t label = 0; label < 3; ++label) {
    const std::vector<std::size_t> l{label};
    CHECK(branch_cross_entropy(uniform, l) == doctest::Approx(std::log(3.0)));
  }
  const std::vector<std::size_t> zero{0};
  CHECK(branch_cross_entropy(std::vector<double>{2, 0, 0}, zero) ==
        doctest::Approx(-std::log(std::exp(2.0) / (std::exp(2.0) + 2.0))));
  CHECK(std::abs(branch_cross_entropy(std::vector<double>{2, 0, 0}, zero) - 0.2395) < 1e-4);
  CHECK(branch_cross_entropy(std::vector<double>{60, 0, 0}, zero) < 1e-20);
  CHECK_THROWS_AS(branch_cross_entropy(uniform, std::vector<std::size_t>{3}), ValidationError);

  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const auto logits = testing::random_vector(rng, 12, -5, 5);
    std::vector<std::size_t> labels{rng() % 3, rng() % 3, rng() % 3, rng() % 3};
    CHECK(branch_cross_entropy(logits, labels) >= 0.0);
  }

  auto t = testing::random_tensor(rng, {4, 3}, true);
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  auto loss = [&] { return cross_entropy(t, labels); };
  CHECK(loss().item() == doctest::Approx(branch_cross_entropy(t.values(), labels)));
  CHECK(testing::check_gradients(loss, {t}).worst_relative < 1e-4);
}

TEST_CASE("total_loss sums the active branches") {
  CHECK(total_loss(ModelKind::valnet, BranchLosses{0.3, {}, {}}) == 0.3);
  CHECK(total_loss(ModelKind::m_valnet, BranchLosses{0.3, 0.5, {}}) == doctest::Approx(0.8));
  CHECK(total_loss(ModelKind::mdelta_valnet, BranchLosses{1.0, 1.0, 1.0}) == 3.0);
  CHECK_THROWS_AS(total_loss(ModelKind::m_valnet, BranchLosses{0.3, {}, {}}), ValidationError);
  CHECK_THROWS_AS(total_loss(ModelKind::valnet, BranchLosses{0.3, 0.1, {}}), ValidationError);
  CHECK_THROWS_AS(total_loss(ModelKind::mdelta_valnet, BranchLosses{{}, 1.0, 1.0}), ValidationError);

  BranchLossTensors t{Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(4.0)};
  CHECK(total_loss(ModelKind::mdelta_valnet, t).item() == 7.0);
  t.delta = Tensor();
  CHECK_THROWS_AS(total_loss(ModelKind::mdelta_valnet, t), ValidationError);
}
