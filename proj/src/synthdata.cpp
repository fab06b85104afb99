#include "moodval/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "moodval/dataset.hpp"
#include "moodval/error.hpp"
#include "moodval/rng.hpp"

namespace moodval {

namespace {
constexpr std::uint64_t kLatentStream = 0x1a7e;
constexpr std::uint64_t kRenderStream = 0x4e4d;
constexpr int kMaxAttempts = 100;
}  // namespace

void SynthConfig::validate() const {
  if (num_videos == 0 || frames_per_video == 0) throw ConfigError("synth sizes must be positive");
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("synth image shape must be positive");
  if (mood_biases.empty()) throw ConfigError("synth.mood_biases must not be empty");
  for (double b : mood_biases) {
    if (!(b > -1.0 && b < 1.0)) throw ConfigError("synth.mood_biases must lie in (-1, 1)");
  }
  if (!(tau > 0.0)) throw ConfigError("synth.tau must be > 0");
  if (latent_amplitude < 0.0 || observation_noise < 0.0 || pixel_noise < 0.0) {
    throw ConfigError("synth noise levels must be >= 0");
  }
  if (drift_window == 0 || !(drift_scale > 0.0)) throw ConfigError("synth drift settings must be positive");
  if (square_size == 0 || square_size > height || square_size > width) {
    throw ConfigError("synth.square_size must fit inside the frame");
  }
  if (val_every < 2) throw ConfigError("synth.val_every must be >= 2");
  sampler.validate();
  if (frames_per_video <= sampler.initial_length) {
    throw ConfigError("synth.frames_per_video must exceed sampler.initial_length");
  }
}

double SynthConfig::bias(std::size_t video_index) const {
  return mood_biases[video_index % mood_biases.size()];
}

MoodLabel SynthConfig::intended_mood(std::size_t video_index) const {
  return static_cast<MoodLabel>(static_cast<int>(band_of(bias(video_index))));
}

std::string SynthConfig::video_id(std::size_t video_index) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%03zu", video_index);
  return buf;
}

std::vector<double> generate_latent(const SynthConfig& config, std::size_t video_index) {
  config.validate();
  const double b = config.bias(video_index);
  const MoodLabel want = config.intended_mood(video_index);
  const double rho = std::exp(-1.0 / config.tau);
  const double innovation = config.latent_amplitude * std::sqrt(1.0 - rho * rho);
  const std::uint64_t base = mix_seed(mix_seed(config.seed, kLatentStream), video_index);
  std::vector<double> v(config.frames_per_video);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(mix_seed(base, static_cast<std::uint64_t>(attempt)));
    double x = config.latent_amplitude * rng.normal();
    std::vector<FrameRecord> records(v.size());
    for (std::size_t t = 0; t < v.size(); ++t) {
      v[t] = std::clamp(b + x, -1.0, 1.0);
      records[t] = {t, v[t], 1.0};
      x = rho * x + innovation * rng.normal();
    }
    if (derive_mood(ValenceTimeline(config.video_id(video_index), std::move(records))) == want) {
      return v;
    }
  }
  throw ConfigError("video " + std::to_string(video_index) + ": no latent sequence with mood " +
                    std::to_string(static_cast<int>(want)) + " after " +
                    std::to_string(kMaxAttempts) + " attempts (bias too weak for the noise)");
}

VideoFrames render(const std::vector<double>& valence, const SynthConfig& config,
                   std::size_t video_index) {
  VideoFrames out;
  out.video_id = config.video_id(video_index);
  out.count = valence.size();
  out.channels = config.channels;
  out.height = config.height;
  out.width = config.width;
  out.pixels.resize(out.count * out.frame_size());

  Rng rng(mix_seed(mix_seed(config.seed, kRenderStream), video_index));
  const std::size_t s = config.square_size;
  const std::size_t col0 = (config.width - s) / 2;
  const std::size_t plane = config.height * config.width;
  for (std::size_t t = 0; t < valence.size(); ++t) {
    const double lum = (valence[t] + 1.0) / 2.0 + config.observation_noise * rng.normal();
    const std::size_t back = t >= config.drift_window ? t - config.drift_window : 0;
    const double drift = std::clamp((valence[t] - valence[back]) / config.drift_scale, -1.0, 1.0);
    // Rising valence moves the square up.
    const auto row0 = static_cast<std::size_t>(
        std::lround((0.5 - 0.5 * drift) * static_cast<double>(config.height - s)));
    float* frame = out.pixels.data() + t * out.frame_size();
    for (std::size_t c = 0; c < config.channels; ++c) {
      for (std::size_t r = 0; r < config.height; ++r) {
        const bool in_rows = r >= row0 && r < row0 + s;
        for (std::size_t q = 0; q < config.width; ++q) {
          const bool in_square = in_rows && q >= col0 && q < col0 + s;
          double p = in_square ? 0.0 : lum;
          if (config.pixel_noise > 0.0) p += config.pixel_noise * rng.normal();
          frame[c * plane + r * config.width + q] = static_cast<float>(std::clamp(p, 0.0, 1.0));
        }
      }
    }
  }
  return out;
}

SynthVideo make_video(const SynthConfig& config, std::size_t video_index) {
  auto latent = generate_latent(config, video_index);
  std::vector<FrameRecord> records(latent.size());
  for (std::size_t t = 0; t < latent.size(); ++t) records[t] = {t, latent[t], 1.0};
  return {render(latent, config, video_index),
          ValenceTimeline(config.video_id(video_index), std::move(records)),
          config.intended_mood(video_index)};
}

void build_benchmark(const SynthConfig& config, const std::filesystem::path& root) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(layout::annotations(root));
  fs::create_directories(layout::frames(root));
  fs::create_directories(layout::manifests(root));

  const auto n = static_cast<std::ptrdiff_t>(config.num_videos);
  std::vector<std::vector<ClipSpec>> clips(config.num_videos);
  std::vector<std::string> errors(config.num_videos);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      const SynthVideo video = make_video(config, idx);
      const auto id = config.video_id(idx);
      save_timeline(video.timeline, layout::annotations(root) / (id + ".jsonl"));
      save_video_frames(video.frames, layout::frames(root) / (id + ".bin"));
      clips[idx] = make_labelled_clips(filter_confidence(video.timeline),
                                       derive_mood(video.timeline), config.sampler);
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw ConfigError("synth video " + std::to_string(i) + ": " + errors[i]);
  }

  DatasetInfo info{config.channels, config.height, config.width, {}};
  std::vector<ClipSpec> train, val;
  for (std::size_t i = 0; i < config.num_videos; ++i) {
    const bool is_val = i % config.val_every == config.val_every - 1;
    info.videos.push_back({config.video_id(i), is_val ? "val" : "train"});
    auto& dst = is_val ? val : train;
    dst.insert(dst.end(), clips[i].begin(), clips[i].end());
  }
  write_dataset_info(info, root);
  write_manifest(train, layout::manifests(root) / "train.jsonl");
  write_manifest(val, layout::manifests(root) / "val.jsonl");
}

}  // namespace moodval
