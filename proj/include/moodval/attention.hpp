#pragma once

// Multiplicative sigmoid gates over spatial locations, channels or timesteps,
// their sequential composition, and placement on a backbone (inside every
// residual block, or once on the raw input).
//
// Feature maps carry a leading batch axis: (B, C, H, W) or (B, C, T, H, W).

#include <atomic>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "moodval/nn.hpp"

namespace moodval {

enum class AttentionKind { spatial, channel, temporal };
enum class Placement { within_block, outside_backbone };

std::string to_string(AttentionKind kind);
std::string to_string(Placement placement);
AttentionKind attention_kind_from_string(const std::string& name);
Placement placement_from_string(const std::string& name);

struct AttentionConfig {
  std::vector<AttentionKind> kinds;
  Placement placement = Placement::within_block;
  std::size_t spatial_kernel = 7;
  std::size_t reduction = 16;
  /// Also instrument the single-frame encoder (spatial/channel kinds only).
  bool frame_branch = false;

  /// kinds non-empty and duplicate-free, odd kernel, reduction >= 1.
  void validate() const;
  bool has(AttentionKind k) const;
  /// "spatial-channel", "temporal", ...
  std::string label() const;
};

class AttentionModule : public nn::Module {
 public:
  virtual Tensor forward(const Tensor& x) = 0;
  virtual AttentionKind kind() const = 0;
  /// Drives the gate into exact saturation (value 1.0) so the module
  /// becomes the identity.
  virtual void saturate() = 0;
  /// The most recent gate values, for inspection.
  const Tensor& last_gate() const { return last_gate_; }

 protected:
  Tensor last_gate_;
};

/// Channel-wise mean and max -> 2-channel map -> k x k conv (shared over
/// time) -> sigmoid gate per location.
class SpatialAttention : public AttentionModule {
 public:
  SpatialAttention(std::size_t kernel, Rng& rng);
  Tensor forward(const Tensor& x) override;
  AttentionKind kind() const override { return AttentionKind::spatial; }
  void saturate() override;
  nn::Conv3d& conv() { return *conv_; }

 private:
  std::shared_ptr<nn::Conv3d> conv_;
  std::size_t kernel_;
};

/// Global mean and max over non-channel axes -> shared MLP (C -> C/r -> C)
/// -> sum -> sigmoid gate per channel.
class ChannelAttention : public AttentionModule {
 public:
  ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng);
  Tensor forward(const Tensor& x) override;
  AttentionKind kind() const override { return AttentionKind::channel; }
  void saturate() override;

 private:
  std::size_t channels_;
  std::shared_ptr<nn::Linear> fc1_, fc2_;
};

/// Mean and max over channel and spatial axes per timestep -> shared MLP
/// (T -> T/r -> T) -> sum -> sigmoid gate per timestep. Needs a time axis.
class TemporalAttention : public AttentionModule {
 public:
  TemporalAttention(std::size_t time_steps, std::size_t reduction, Rng& rng);
  Tensor forward(const Tensor& x) override;
  AttentionKind kind() const override { return AttentionKind::temporal; }
  void saturate() override;

 private:
  std::size_t time_steps_;
  std::shared_ptr<nn::Linear> fc1_, fc2_;
};

/// Modules applied in order, each consuming the previous output.
class AttentionSequence : public nn::Module {
 public:
  void append(std::shared_ptr<AttentionModule> module);
  Tensor forward(const Tensor& x);
  void saturate();
  std::size_t size() const { return modules_.size(); }
  AttentionModule& at(std::size_t i) { return *modules_.at(i); }
  /// Number of forward passes through this sequence.
  std::size_t applications() const { return applications_.load(); }

 private:
  std::vector<std::shared_ptr<AttentionModule>> modules_;
  std::atomic<std::size_t> applications_{0};
};

/// Builds the sequence for feature maps with `channels` channels and
/// `time_steps` timesteps (0 when the maps have no time axis).
std::shared_ptr<AttentionSequence> make_attention(const std::vector<AttentionKind>& kinds,
                                                  std::size_t spatial_kernel,
                                                  std::size_t reduction, std::size_t channels,
                                                  std::size_t time_steps, Rng& rng);

/// Encoder contract used for attention placement.
class Backbone : public nn::Module {
 public:
  struct Geometry {
    std::size_t channels = 0;
    std::size_t time_steps = 0;  ///< 0 for frame (rank-4) features
  };

  virtual Tensor forward(const Tensor& x) = 0;
  virtual std::size_t output_dim() const = 0;
  virtual Geometry input_geometry() const = 0;

  /// Blocks that accept an attention hook; 0 means no hooks.
  virtual std::size_t block_count() const { return 0; }
  virtual Geometry block_geometry(std::size_t block) const;
  virtual void attach_block_attention(std::size_t block, std::shared_ptr<AttentionSequence> attn);
  virtual std::vector<std::shared_ptr<AttentionSequence>> attention_hooks() const { return {}; }
};

/// Backbone whose input passes through one attention sequence first.
class InputAttentionBackbone : public Backbone {
 public:
  InputAttentionBackbone(std::shared_ptr<Backbone> inner, std::shared_ptr<AttentionSequence> attn);
  Tensor forward(const Tensor& x) override;
  std::size_t output_dim() const override { return inner_->output_dim(); }
  Geometry input_geometry() const override { return inner_->input_geometry(); }
  std::vector<std::shared_ptr<AttentionSequence>> attention_hooks() const override { return {attn_}; }
  Backbone& inner() { return *inner_; }

 private:
  std::shared_ptr<Backbone> inner_;
  std::shared_ptr<AttentionSequence> attn_;
};

/// Instruments `backbone` per `config`. within_block attaches one sequence
/// per residual block (after the block's last convolution, before the
/// shortcut addition); outside_backbone wraps the backbone.
std::shared_ptr<Backbone> place(std::shared_ptr<Backbone> backbone, const AttentionConfig& config,
                                Rng& rng);

}  // namespace moodval
