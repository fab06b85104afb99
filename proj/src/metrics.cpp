#include "moodval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "moodval/error.hpp"

namespace moodval {

PairMoments pair_moments(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) {
    throw ValidationError("series lengths differ: " + std::to_string(y.size()) + " vs " +
                          std::to_string(y_hat.size()));
  }
  if (y.size() < 2) throw ValidationError("metric needs at least 2 samples");
  const double n = static_cast<double>(y.size());
  PairMoments m;
  for (std::size_t i = 0; i < y.size(); ++i) {
    m.mean_y += y[i];
    m.mean_p += y_hat[i];
  }
  m.mean_y /= n;
  m.mean_p /= n;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dy = y[i] - m.mean_y;
    const double dp = y_hat[i] - m.mean_p;
    m.var_y += dy * dy;
    m.var_p += dp * dp;
    m.cov += dy * dp;
  }
  m.var_y /= n;
  m.var_p /= n;
  m.cov /= n;
  // Exact constancy; rounding in the mean would otherwise leave a tiny variance.
  auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  auto [pmin, pmax] = std::minmax_element(y_hat.begin(), y_hat.end());
  m.constant_y = *ymin == *ymax;
  m.constant_p = *pmin == *pmax;
  return m;
}

double pcc(std::span<const double> y, std::span<const double> y_hat) {
  const auto m = pair_moments(y, y_hat);
  if (m.constant_y || m.constant_p) return 0.0;
  const double r = m.cov / std::sqrt(m.var_y * m.var_p);
  return std::clamp(r, -1.0, 1.0);
}

double ccc(std::span<const double> y, std::span<const double> y_hat) {
  const auto m = pair_moments(y, y_hat);
  if (m.constant_y || m.constant_p) return 0.0;
  const double dmu = m.mean_y - m.mean_p;
  // 2 sigma_y sigma_p PCC == 2 cov
  return std::clamp(2.0 * m.cov / (m.var_y + m.var_p + dmu * dmu), -1.0, 1.0);
}

MetricReport evaluate(const std::map<std::string, PredictionSeries>& predictions) {
  PredictionSeries all;
  MetricReport report;
  double video_sum = 0.0;
  for (const auto& [video, series] : predictions) {
    if (series.ground_truth.size() != series.prediction.size()) {
      throw ValidationError("video '" + video + "': series lengths differ");
    }
    all.ground_truth.insert(all.ground_truth.end(), series.ground_truth.begin(),
                            series.ground_truth.end());
    all.prediction.insert(all.prediction.end(), series.prediction.begin(),
                          series.prediction.end());
    if (series.size() >= 2) {
      const double c = ccc(series);
      report.per_video[video] = c;
      video_sum += c;
    }
  }
  if (all.size() < 2) throw ValidationError("evaluation needs at least 2 predictions");
  report.n_frames = all.size();
  report.ccc = ccc(all);
  report.pcc = pcc(all);
  report.mean_video_ccc =
      report.per_video.empty() ? 0.0 : video_sum / static_cast<double>(report.per_video.size());
  return report;
}

}  // namespace moodval
