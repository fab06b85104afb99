#pragma once

// Experiment configuration: one JSON document with sampler, attention, loss,
// trainer, model, dataset, output and synth sections. Documents are checked
// against the published schema before any work starts.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "moodval/attention.hpp"
#include "moodval/losses.hpp"
#include "moodval/models.hpp"
#include "moodval/sampler.hpp"
#include "moodval/synthdata.hpp"
#include "moodval/trainer.hpp"

namespace moodval {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "MOODVAL_OUTPUT_ROOT";

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path dataset_path = "data/synth";
  std::string train_manifest = "manifests/train.jsonl";
  std::string val_manifest = "manifests/val.jsonl";
  std::filesystem::path output_dir = "runs/default";

  ModelKind model_kind = ModelKind::mdelta_valnet;
  std::vector<std::size_t> frame_widths{8, 16, 16, 32};
  std::vector<std::size_t> clip_widths{8, 8, 16, 16};
  std::vector<std::size_t> head_widths{256, 128, 128};
  double dropout = 0.5;
  bool freeze_frame_encoder = false;
  std::optional<AttentionConfig> attention;

  SamplerConfig sampler{40, 3, 5};
  double confidence_threshold = kDefaultConfidenceThreshold;
  double delta_deadzone = 0.0;

  LossConfig loss;
  TrainConfig trainer;
  std::size_t eval_batch_size = 256;
  SynthConfig synth;

  /// Model settings for frames of the given geometry.
  ModelConfig model_config(std::size_t channels, std::size_t height, std::size_t width) const;
  /// Trainer settings with the shared seed and loss section folded in.
  TrainConfig train_config() const;
  HistoryHeader history_header() const;
};

/// The JSON schema (draft-07 subset) every config document must satisfy.
const nlohmann::json& config_schema();

/// Schema violations as "<json-pointer>: message", empty when valid.
std::vector<std::string> schema_violations(const nlohmann::json& document,
                                           const nlohmann::json& schema);

nlohmann::json to_json(const ExperimentConfig& config);

/// Validates against the schema, then converts. Throws ConfigError listing
/// every violation.
ExperimentConfig config_from_json(const nlohmann::json& document);

/// Defaults, overlaid by `file` (if given), overlaid by `overrides`
/// (JSON pointer -> value), validated.
ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::vector<std::pair<std::string, nlohmann::json>>& overrides);

/// Output directory with the output-root environment variable applied to
/// relative paths.
std::filesystem::path resolved_output_dir(const ExperimentConfig& config);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace moodval
