#pragma once

// Pearson and concordance correlation coefficients (population statistics)
// and per-video aggregation into evaluation reports.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace moodval {

struct PredictionSeries {
  std::vector<double> ground_truth;
  std::vector<double> prediction;

  std::size_t size() const { return ground_truth.size(); }
  void push(double y, double y_hat) {
    ground_truth.push_back(y);
    prediction.push_back(y_hat);
  }
};

/// Population moments of a paired sample.
struct PairMoments {
  double mean_y = 0.0;
  double mean_p = 0.0;
  double var_y = 0.0;
  double var_p = 0.0;
  double cov = 0.0;
  bool constant_y = false;
  bool constant_p = false;
};

PairMoments pair_moments(std::span<const double> y, std::span<const double> y_hat);

/// Zero when either series is constant. Requires length >= 2.
double pcc(std::span<const double> y, std::span<const double> y_hat);
double ccc(std::span<const double> y, std::span<const double> y_hat);
inline double pcc(const PredictionSeries& s) { return pcc(s.ground_truth, s.prediction); }
inline double ccc(const PredictionSeries& s) { return ccc(s.ground_truth, s.prediction); }

struct MetricReport {
  double ccc = 0.0;  ///< over the concatenation of all videos
  double pcc = 0.0;
  double mean_video_ccc = 0.0;  ///< unweighted mean of per-video CCCs
  std::map<std::string, double> per_video;
  std::size_t n_frames = 0;
};

/// Videos with fewer than two predictions are excluded from `per_video`.
/// Throws when fewer than two predictions exist overall.
MetricReport evaluate(const std::map<std::string, PredictionSeries>& predictions);

}  // namespace moodval
