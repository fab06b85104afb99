#pragma once

// Synthetic affect videos with a known latent valence stream.
//
// Latent: v(t) = clamp(bias + x(t), -1, 1) where x is a stationary
// Ornstein-Uhlenbeck process (amplitude A, correlation time tau) and the bias
// cycles over the mood bias set by video index. Sequences whose longest-run
// band disagrees with the bias's band are resampled.
//
// Render: background luminance (v + 1) / 2 plus one observation-noise offset
// per frame and independent pixel noise; a dark square whose vertical
// position encodes the valence drift over the last `drift_window` frames.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "moodval/annotations.hpp"
#include "moodval/frames.hpp"
#include "moodval/sampler.hpp"

namespace moodval {

struct SynthConfig {
  std::size_t num_videos = 60;
  std::size_t frames_per_video = 400;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<double> mood_biases{-0.5, 0.0, 0.5};
  double tau = 40.0;                  ///< latent correlation time, frames
  double latent_amplitude = 0.25;     ///< stationary std of x
  double observation_noise = 0.25;    ///< per-frame luminance offset std
  double pixel_noise = 0.3;           ///< per-pixel std
  std::size_t drift_window = 60;
  double drift_scale = 0.5;           ///< drift mapped to the full square travel
  std::size_t square_size = 8;
  std::size_t val_every = 5;          ///< video i is validation when i % val_every == val_every - 1
  std::uint64_t seed = 7;
  SamplerConfig sampler{40, 3, 5};

  void validate() const;
  MoodLabel intended_mood(std::size_t video_index) const;
  double bias(std::size_t video_index) const;
  std::string video_id(std::size_t video_index) const;
};

/// Latent valence of one video (rejection-sampled for mood agreement).
std::vector<double> generate_latent(const SynthConfig& config, std::size_t video_index);

/// Pixels for a latent stream; deterministic given (config.seed, video_index).
VideoFrames render(const std::vector<double>& valence, const SynthConfig& config,
                   std::size_t video_index);

struct SynthVideo {
  VideoFrames frames;
  ValenceTimeline timeline;
  MoodLabel mood;
};

SynthVideo make_video(const SynthConfig& config, std::size_t video_index);

/// Writes dataset.json, annotations, frames and train/val clip manifests
/// under `root`. Videos are generated in parallel.
void build_benchmark(const SynthConfig& config, const std::filesystem::path& root);

}  // namespace moodval
