#pragma once

// Optimisation loop (Adam, step-decayed learning rate, epoch-scheduled loss
// weights), checkpointing and evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moodval/frames.hpp"
#include "moodval/losses.hpp"
#include "moodval/metrics.hpp"
#include "moodval/models.hpp"
#include "moodval/sampler.hpp"

namespace moodval {

struct TrainConfig {
  std::size_t epochs = 45;
  std::size_t batch_size = 210;
  double base_lr = 1e-3;
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 10;
  LossConfig loss;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;            ///< global-norm clip; 0 disables
  std::size_t clips_per_epoch = 0;   ///< random subset per epoch; 0 uses every clip
  bool eval_train = false;           ///< also score the training clips each epoch
  double target_train_ccc = 0.0;     ///< stop once the train score reaches this; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

/// base_lr * lr_decay^floor(epoch / lr_decay_every).
double lr_at(std::size_t epoch, const TrainConfig& config);

struct Batch {
  Tensor clips;    ///< (B, C, n, H, W); undefined when not requested
  Tensor frames;   ///< (B, C, H, W), the frame at each clip's end
  std::vector<double> targets;
  std::vector<std::size_t> mood;
  std::vector<std::size_t> delta;
};

Batch make_batch(FrameStore& store, std::span<const ClipSpec* const> clips,
                 const ModelConfig& model, bool with_clips);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  DynamicWeights weights;
  LossBreakdown train;  ///< batch means
  std::optional<double> train_ccc;
  double val_ccc = 0.0;
  double val_pcc = 0.0;
  double val_mean_video_ccc = 0.0;
};

struct HistoryHeader {
  std::string model;
  std::string attention = "none";
  std::string placement = "none";
  std::size_t frames_per_clip = 0;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  HistoryHeader header;
  std::vector<EpochRecord> epochs;
};

nlohmann::json to_json(const EpochRecord& r);
nlohmann::json to_json(const HistoryHeader& h);
void write_history(std::ostream& out, const TrainHistory& history);
void write_history(const TrainHistory& history, const std::filesystem::path& path);
TrainHistory read_history(const std::filesystem::path& path);

struct Prediction {
  std::string video_id;
  std::size_t frame = 0;
  double y = 0.0;
  double y_hat = 0.0;
};

struct EvalResult {
  MetricReport report;
  std::vector<Prediction> predictions;  ///< sorted by (video_id, frame)
};

/// Eval-mode predictions for every clip's target frame. Clip order does not
/// affect the result.
EvalResult run_eval(ValenceModel& model, FrameStore& store, std::span<const ClipSpec> clips,
                    std::size_t batch_size = 256);

/// Groups predictions by video, ordered by frame, and scores them.
MetricReport score_predictions(std::span<const Prediction> predictions);

struct TrainResult {
  TrainHistory history;
  std::size_t best_epoch = 0;
  double best_val_ccc = 0.0;
};

struct TrainOutputs {
  std::filesystem::path dir;  ///< best.ckpt, last.ckpt, history.jsonl; empty = keep in memory
  nlohmann::json config_snapshot = nlohmann::json::object();
  HistoryHeader header;
  /// Called after each epoch's record is complete.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Runs the optimisation. Throws NonFiniteLossError when a batch loss turns
/// non-finite.
TrainResult train(ValenceModel& model, FrameStore& store, std::span<const ClipSpec> train_clips,
                  std::span<const ClipSpec> val_clips, const TrainConfig& config,
                  const TrainOutputs& outputs = {});

}  // namespace moodval
