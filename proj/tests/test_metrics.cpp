#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "moodval/error.hpp"
#include "moodval/metrics.hpp"
#include "support.hpp"

using namespace moodval;
using testing::ccc_oracle;

TEST_CASE("ccc and pcc fixtures") {
  const std::vector<double> y{-1, 0, 1};
  CHECK(ccc(y, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ccc(y, std::vector<double>{-0.5, 0, 0.5}) == doctest::Approx(0.8).epsilon(1e-9));
  const std::vector<double> shifted{-0.5, 0.5, 1.5};
  CHECK(ccc(y, shifted) == doctest::Approx(16.0 / 19.0).epsilon(1e-9));
  CHECK(std::abs(ccc(y, shifted) - 0.8421) < 1e-4);
  CHECK(pcc(y, shifted) == doctest::Approx(1.0));

  CHECK(pcc(y, std::vector<double>{1, 0, -1}) == doctest::Approx(-1.0));
  CHECK(pcc(y, std::vector<double>{0.3, 0.3, 0.3}) == 0.0);
  CHECK(ccc(y, std::vector<double>{0.3, 0.3, 0.3}) == 0.0);
  CHECK_THROWS_AS(ccc(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
  CHECK_THROWS_AS(pcc(y, std::vector<double>{1, 2}), ValidationError);
}

TEST_CASE("ccc matches the moment oracle on random vectors") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    const auto y = testing::random_vector(rng, n);
    const auto p = testing::random_vector(rng, n);
    REQUIRE(ccc(y, p) == doctest::Approx(ccc_oracle(y, p)).epsilon(1e-9));
  }
}

TEST_CASE("ccc and pcc properties on random vectors") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng() % 50;
    const auto y = testing::random_vector(rng, n);
    auto p = testing::random_vector(rng, n);
    // Correlate half the samples so positive pcc is common.
    if (trial % 2 == 0) {
      for (std::size_t i = 0; i < n; ++i) p[i] = 0.7 * y[i] + 0.3 * p[i];
    }
    const double c = ccc(y, p);
    const double r = pcc(y, p);

    // Bounded by |pcc|.
    CHECK(c <= std::abs(r) + 1e-12);
    // Symmetric.
    CHECK(c == doctest::Approx(ccc(p, y)).epsilon(1e-12));
    // Joint permutation invariance.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> yp(n), pp(n);
    for (std::size_t i = 0; i < n; ++i) {
      yp[i] = y[order[i]];
      pp[i] = p[order[i]];
    }
    CHECK(ccc(yp, pp) == doctest::Approx(c).epsilon(1e-12));

    // Mean shift: moving the prediction mean away from the target mean
    // lowers ccc when pcc > 0.
    if (r > 0) {
      const auto m = pair_moments(y, p);
      double shift = u(rng);
      if (shift == 0.0) shift = 0.5;
      if (shift * (m.mean_p - m.mean_y) < 0) shift = -shift;
      auto moved = p;
      for (auto& v : moved) v += shift;
      CHECK(ccc(y, moved) < c);
    }

    // pcc is invariant under a*p + b with a > 0; ccc is not, unless identity.
    const double a = 0.2 + std::abs(u(rng));
    const double b = u(rng);
    auto affine = p;
    for (auto& v : affine) v = a * v + b;
    CHECK(pcc(y, affine) == doctest::Approx(r).epsilon(1e-9));
    if (std::abs(r) > 1e-6 && (std::abs(a - 1) > 1e-3 || std::abs(b) > 1e-3)) {
      CHECK(ccc(y, affine) != doctest::Approx(c).epsilon(1e-9));
    }
  }
}

TEST_CASE("a mean shift toward the targets can raise ccc") {
  // The unconditional "any shift lowers ccc" reading fails here.
  const std::vector<double> y{-1, 0, 1};
  const std::vector<double> p{0, 1, 2};
  CHECK(pcc(y, p) == doctest::Approx(1.0));
  std::vector<double> back{-0.5, 0.5, 1.5};
  CHECK(ccc(y, back) > ccc(y, p));
}

TEST_CASE("evaluate aggregates per video and globally") {
  std::map<std::string, PredictionSeries> one;
  one["a"] = PredictionSeries{{-1, 0, 1}, {-1, 0, 1}};
  auto r = evaluate(one);
  CHECK(r.ccc == doctest::Approx(1.0));
  CHECK(r.n_frames == 3);

  std::map<std::string, PredictionSeries> twins;
  twins["a"] = PredictionSeries{{-1, 0, 1}, {-0.5, 0, 0.5}};
  twins["b"] = twins["a"];
  r = evaluate(twins);
  CHECK(r.ccc == doctest::Approx(r.per_video.at("a")).epsilon(1e-12));
  CHECK(r.mean_video_ccc == doctest::Approx(0.8));

  std::mt19937_64 rng(33);
  std::map<std::string, PredictionSeries> mixed;
  std::vector<double> all_y, all_p;
  for (const char* id : {"x", "y", "z"}) {
    const std::size_t n = 5 + rng() % 20;
    auto& s = mixed[id];
    s.ground_truth = testing::random_vector(rng, n);
    s.prediction = testing::random_vector(rng, n);
  }
  for (const auto& [id, s] : mixed) {
    all_y.insert(all_y.end(), s.ground_truth.begin(), s.ground_truth.end());
    all_p.insert(all_p.end(), s.prediction.begin(), s.prediction.end());
  }
  r = evaluate(mixed);
  CHECK(r.ccc == doctest::Approx(ccc_oracle(all_y, all_p)).epsilon(1e-12));
  CHECK(r.per_video.size() == 3);
  CHECK(r.ccc >= -1.0);
  CHECK(r.ccc <= 1.0);

  CHECK_THROWS_AS(evaluate({}), ValidationError);
  std::map<std::string, PredictionSeries> empty;
  empty["a"] = {};
  CHECK_THROWS_AS(evaluate(empty), ValidationError);
}
