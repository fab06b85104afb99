#pragma once

// Evaluation artifacts (report JSON, prediction files, per-video SVG traces)
// and comparison tables built from training histories.

#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "moodval/metrics.hpp"
#include "moodval/trainer.hpp"

namespace moodval {

nlohmann::json to_json(const MetricReport& report);

/// JSON Lines {"video_id", "frame", "y", "y_hat"}.
void write_predictions(const std::vector<Prediction>& predictions, const std::filesystem::path& path);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

/// Ground truth and prediction against frame index, one SVG per video.
std::string valence_trace_svg(const std::string& video_id, std::span<const Prediction> series);

/// report.json, predictions.jsonl and plots/<video>.svg under `dir`.
void write_eval_artifacts(const EvalResult& result, const std::filesystem::path& dir);

struct ReportRow {
  std::string model;
  std::string attention;
  std::string placement;
  std::size_t frames_per_clip = 0;
  std::size_t runs = 0;
  std::vector<std::uint64_t> seeds;
  double ccc = 0.0;      ///< mean over runs of the best validation CCC
  double ccc_std = 0.0;  ///< population std over runs
  double pcc = 0.0;      ///< mean PCC at the best epoch
};

/// One row per history, or per (model, attention, placement, n) when
/// `group_seeds` is set. Sorted by CCC, highest first.
std::vector<ReportRow> build_report(const std::vector<TrainHistory>& histories, bool group_seeds);

enum class TableFormat { markdown, csv };
std::string render_table(const std::vector<ReportRow>& rows, TableFormat format);

}  // namespace moodval
