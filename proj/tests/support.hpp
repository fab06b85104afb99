#pragma once

// Shared test helpers: independent oracles, finite-difference checks and
// scratch directories. Used by both the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "moodval/annotations.hpp"
#include "moodval/ops.hpp"
#include "moodval/synthdata.hpp"
#include "moodval/tensor.hpp"

namespace testing {

/// Removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("moodval-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Mood oracle: list every maximal run of equal bands, keep the longest,
// first one on ties. Band thresholds are restated here, not shared.
inline int band_oracle(double v) {
  if (v > 0.3) return 1;
  if (v < -0.3) return -1;
  return 0;
}

inline int mood_oracle(const std::vector<double>& valence) {
  struct Run {
    int band;
    std::size_t start, length;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < valence.size(); ++i) {
    const int b = band_oracle(valence[i]);
    if (runs.empty() || runs.back().band != b) {
      runs.push_back({b, i, 1});
    } else {
      ++runs.back().length;
    }
  }
  const Run* best = &runs.front();
  for (const auto& r : runs) {
    if (r.length > best->length) best = &r;
  }
  return best->band;
}

inline moodval::ValenceTimeline timeline_of(const std::vector<double>& valence,
                                            const std::string& id = "t") {
  std::vector<moodval::FrameRecord> frames;
  for (std::size_t i = 0; i < valence.size(); ++i) frames.push_back({i, valence[i], 1.0});
  return moodval::ValenceTimeline(id, std::move(frames));
}

// Concordance straight from population moments, two-pass.
inline double ccc_oracle(const std::vector<double>& y, const std::vector<double>& p) {
  const double n = static_cast<double>(y.size());
  double my = 0, mp = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my += y[i];
    mp += p[i];
  }
  my /= n;
  mp /= n;
  double vy = 0, vp = 0, c = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    vy += (y[i] - my) * (y[i] - my);
    vp += (p[i] - mp) * (p[i] - mp);
    c += (y[i] - my) * (p[i] - mp);
  }
  vy /= n;
  vp /= n;
  c /= n;
  if (vy == 0 || vp == 0) return 0.0;
  return 2 * c / (vy + vp + (my - mp) * (my - mp));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = u(rng);
  return out;
}

inline moodval::Tensor random_tensor(std::mt19937_64& rng, moodval::Shape shape,
                                     bool requires_grad = false, double lo = -1.0,
                                     double hi = 1.0) {
  const std::size_t n = moodval::shape_numel(shape);
  return moodval::Tensor(std::move(shape), random_vector(rng, n, lo, hi), requires_grad);
}

struct GradCheck {
  double worst_relative = 0.0;  ///< max over entries of |a - n| / max(|a|, |n|, floor)
  std::size_t checked = 0;
};

/// Compares autograd gradients of `loss()` with central differences for
/// every entry of every tensor in `inputs`. `loss` must rebuild the graph
/// from the current input values each call.
inline GradCheck check_gradients(const std::function<moodval::Tensor()>& loss,
                                 std::vector<moodval::Tensor> inputs, double step = 1e-5,
                                 double floor = 1e-4, std::size_t max_entries = 0) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  GradCheck result;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.values();
    const std::size_t stride =
        max_entries == 0 ? 1 : std::max<std::size_t>(1, values.size() / max_entries);
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const double saved = values[i];
      values[i] = saved + step;
      double up, down;
      {
        moodval::NoGradGuard guard;
        up = loss().item();
      }
      values[i] = saved - step;
      {
        moodval::NoGradGuard guard;
        down = loss().item();
      }
      values[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      result.worst_relative =
          std::max(result.worst_relative, std::abs(analytic[i] - numeric) / scale);
      ++result.checked;
    }
  }
  return result;
}

/// Weighted sum of all entries with fixed pseudo-random weights, so the
/// gradient reaching `x` is not uniform.
inline moodval::Tensor probe_loss(const moodval::Tensor& x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const moodval::Tensor w = random_tensor(rng, x.shape());
  return moodval::ops::sum(moodval::ops::mul_broadcast(x, w));
}

/// A benchmark small enough to train on inside a unit test.
inline moodval::SynthConfig tiny_synth(std::uint64_t seed = 3) {
  moodval::SynthConfig c;
  c.num_videos = 10;
  c.frames_per_video = 60;
  c.height = 8;
  c.width = 8;
  c.tau = 10.0;
  c.drift_window = 10;
  c.square_size = 4;
  c.seed = seed;
  c.sampler = {20, 5, 3};
  return c;
}

}  // namespace testing
