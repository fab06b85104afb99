#pragma once

// Frame and clip encoders, the fully connected projection head, and the three
// model variants assembled from them:
//   valnet         frame -> head(256, 128, 128, 1)
//   m_valnet       clip, frame -> [u | v] (512) -> head(..., 4)
//   mdelta_valnet  clip, frame -> [P_m(u) | P_d(v) | w] (768) -> head(..., 7)

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "moodval/attention.hpp"
#include "moodval/model_kind.hpp"
#include "moodval/nn.hpp"

namespace moodval {

inline constexpr std::size_t kFeatureDim = 256;
inline constexpr std::size_t kMoodClasses = 3;
inline constexpr std::size_t kDeltaClasses = 3;

struct ModelConfig {
  ModelKind kind = ModelKind::mdelta_valnet;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t frames_per_clip = 5;
  std::vector<std::size_t> frame_widths{8, 16, 16, 32};
  std::vector<std::size_t> clip_widths{8, 8, 16, 16};
  std::vector<std::size_t> head_widths{256, 128, 128};
  double dropout = 0.5;
  bool freeze_frame_encoder = false;
  std::optional<AttentionConfig> attention;

  void validate() const;
};

/// Small 2-D CNN: stages of conv(3x3, stride 2) -> BN -> [attention] -> ReLU,
/// then global average pooling and fc -> 256 with ReLU.
/// Input (B, C, H, W); each stage is an attention hook.
class FrameEncoder : public Backbone {
 public:
  FrameEncoder(std::size_t channels, const std::vector<std::size_t>& widths, Rng& rng);
  Tensor forward(const Tensor& x) override;
  std::size_t output_dim() const override { return kFeatureDim; }
  Geometry input_geometry() const override { return {channels_, 0}; }
  std::size_t block_count() const override { return stages_.size(); }
  Geometry block_geometry(std::size_t block) const override;
  void attach_block_attention(std::size_t block, std::shared_ptr<AttentionSequence> attn) override;
  std::vector<std::shared_ptr<AttentionSequence>> attention_hooks() const override;

 private:
  struct Stage {
    std::shared_ptr<nn::Conv3d> conv;
    std::shared_ptr<nn::BatchNorm> bn;
    std::shared_ptr<AttentionSequence> attn;
    std::size_t width = 0;
  };
  std::size_t channels_;
  std::vector<Stage> stages_;
  std::shared_ptr<nn::Linear> fc_;
};

/// conv3 -> BN -> ReLU -> conv3 -> BN -> [attention] -> + shortcut -> ReLU.
/// The first conv strides (1, s, s); the shortcut is a 1x1x1 conv + BN when
/// the shape changes.
class ResidualBlock3d : public nn::Module {
 public:
  ResidualBlock3d(std::size_t in_channels, std::size_t out_channels, std::size_t spatial_stride,
                  Rng& rng);
  Tensor forward(const Tensor& x);
  void set_attention(std::shared_ptr<AttentionSequence> attn);
  const std::shared_ptr<AttentionSequence>& attention() const { return attn_; }
  std::size_t out_channels() const { return out_channels_; }

 private:
  std::size_t out_channels_;
  std::shared_ptr<nn::Conv3d> conv1_, conv2_, shortcut_;
  std::shared_ptr<nn::BatchNorm> bn1_, bn2_, shortcut_bn_;
  std::shared_ptr<AttentionSequence> attn_;
};

/// 3-D residual network: stem conv -> residual blocks -> global average
/// pooling -> fc 256 with ReLU. Input (B, C, T, H, W); T is preserved.
class ClipEncoder : public Backbone {
 public:
  ClipEncoder(std::size_t channels, std::size_t time_steps, const std::vector<std::size_t>& widths,
              Rng& rng);
  Tensor forward(const Tensor& x) override;
  std::size_t output_dim() const override { return kFeatureDim; }
  Geometry input_geometry() const override { return {channels_, time_steps_}; }
  std::size_t block_count() const override { return blocks_.size(); }
  Geometry block_geometry(std::size_t block) const override;
  void attach_block_attention(std::size_t block, std::shared_ptr<AttentionSequence> attn) override;
  std::vector<std::shared_ptr<AttentionSequence>> attention_hooks() const override;

 private:
  std::size_t channels_, time_steps_;
  std::shared_ptr<nn::Conv3d> stem_;
  std::shared_ptr<nn::BatchNorm> stem_bn_;
  std::vector<std::shared_ptr<ResidualBlock3d>> blocks_;
  std::shared_ptr<nn::Linear> fc_;
};

/// [BN -> fc -> ReLU -> dropout] per hidden width, then a bare fc.
class ProjectionHead : public nn::Module {
 public:
  ProjectionHead(std::size_t in_features, const std::vector<std::size_t>& hidden,
                 std::size_t out_features, double dropout, Rng& rng);
  Tensor forward(const Tensor& x, std::mt19937_64& dropout_rng);
  std::vector<std::size_t> widths() const;
  std::size_t in_features() const { return in_features_; }

 private:
  struct Layer {
    std::shared_ptr<nn::BatchNorm> bn;
    std::shared_ptr<nn::Linear> fc;
  };
  std::size_t in_features_;
  std::vector<Layer> hidden_;
  std::shared_ptr<nn::Linear> out_;
  double dropout_;
};

struct ModelOutput {
  Tensor mood_logits;   ///< (B, 3) when the model has a mood branch
  Tensor delta_logits;  ///< (B, 3) when the model has a delta branch
  Tensor valence;       ///< (B); clamped to [-1, 1] in eval mode
  Tensor fused;         ///< head input, (B, 256 | 512 | 768)
};

struct ForwardOptions {
  /// Replace every clip-branch feature vector by zeros (gradient-path probe).
  bool zero_clip_features = false;
};

class ValenceModel : public nn::Module {
 public:
  ValenceModel(const ModelConfig& config, std::uint64_t seed);

  /// clip (B, C, n, H, W), ignored (may be undefined) for valnet;
  /// frame (B, C, H, W) is the clip's last frame.
  ModelOutput forward(const Tensor& clip, const Tensor& frame, ForwardOptions options = {});

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }
  std::size_t encoder_count() const;
  std::size_t fused_dim() const;
  std::size_t head_outputs() const;

  Backbone& frame_encoder() { return *frame_encoder_; }
  Backbone* mood_encoder() { return mood_encoder_.get(); }
  Backbone* delta_encoder() { return delta_encoder_.get(); }
  ProjectionHead& head() { return *head_; }

  std::vector<std::shared_ptr<AttentionSequence>> attention_hooks() const;
  /// Drives every attention gate to exactly 1.
  void saturate_attention();

 private:
  ModelConfig config_;
  std::shared_ptr<Backbone> frame_encoder_;
  std::shared_ptr<Backbone> mood_encoder_;
  std::shared_ptr<Backbone> delta_encoder_;
  std::shared_ptr<nn::Linear> mood_projection_;
  std::shared_ptr<nn::Linear> delta_projection_;
  std::shared_ptr<ProjectionHead> head_;
  std::mt19937_64 dropout_rng_;
};

std::unique_ptr<ValenceModel> build_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace moodval
