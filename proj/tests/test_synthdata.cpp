#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>

#include "moodval/dataset.hpp"
#include "moodval/error.hpp"
#include "moodval/synthdata.hpp"
#include "support.hpp"

using namespace moodval;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthConfig noiseless() {
  auto c = testing::tiny_synth(11);
  c.observation_noise = 0.0;
  c.pixel_noise = 0.0;
  return c;
}

double pixel(const VideoFrames& v, std::size_t t, std::size_t c, std::size_t r, std::size_t q) {
  return v.pixels[t * v.frame_size() + (c * v.height + r) * v.width + q];
}

// Topmost row of the dark square, found by scanning its centre column.
std::size_t square_row(const VideoFrames& v, std::size_t t) {
  const std::size_t q = v.width / 2;
  for (std::size_t r = 0; r < v.height; ++r) {
    if (pixel(v, t, 0, r, q) == 0.0f && pixel(v, t, 0, r, 0) != 0.0f) return r;
  }
  FAIL("no square in frame " << t);
  return 0;
}

}  // namespace

TEST_CASE("synth config validation") {
  auto c = testing::tiny_synth();
  CHECK_NOTHROW(c.validate());
  c.tau = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = testing::tiny_synth();
  c.mood_biases = {1.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = testing::tiny_synth();
  c.square_size = 9;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = testing::tiny_synth();
  c.frames_per_video = 20;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = testing::tiny_synth();
  c.val_every = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero amplitude gives a constant latent at the bias") {
  auto c = testing::tiny_synth();
  c.latent_amplitude = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    const auto v = generate_latent(c, i);
    REQUIRE(v.size() == c.frames_per_video);
    CHECK(std::all_of(v.begin(), v.end(), [&](double x) { return x == c.bias(i); }));
  }
}

TEST_CASE("latent streams agree with the intended mood and stay bounded") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto c = testing::tiny_synth(seed);
    c.frames_per_video = 120;
    c.latent_amplitude = 0.4;
    for (std::size_t i = 0; i < 12; ++i) {
      const auto video = make_video(c, i);
      CHECK(derive_mood(video.timeline) == c.intended_mood(i));
      CHECK(video.mood == c.intended_mood(i));
      for (const auto& r : video.timeline.frames()) {
        CHECK(r.valence >= -1.0);
        CHECK(r.valence <= 1.0);
      }
      CHECK(std::all_of(video.frames.pixels.begin(), video.frames.pixels.end(),
                        [](float p) { return p >= 0.0f && p <= 1.0f; }));
    }
  }
}

TEST_CASE("biases cycle by video index") {
  const auto c = testing::tiny_synth();
  CHECK(c.bias(0) == -0.5);
  CHECK(c.bias(4) == 0.0);
  CHECK(c.bias(8) == 0.5);
  CHECK(c.intended_mood(0) == MoodLabel::negative);
  CHECK(c.intended_mood(1) == MoodLabel::neutral);
  CHECK(c.intended_mood(2) == MoodLabel::positive);
  CHECK(c.video_id(7) == "v007");
}

TEST_CASE("noiseless background is affine in valence") {
  const auto c = noiseless();
  const auto latent = generate_latent(c, 2);
  const auto frames = render(latent, c, 2);
  // Least squares of the corner pixel on valence.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const double n = static_cast<double>(latent.size());
  for (std::size_t t = 0; t < latent.size(); ++t) {
    const double x = latent[t], y = pixel(frames, t, 1, 0, 0);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double cov = sxy / n - sx * sy / (n * n);
  const double r2 = cov * cov / ((sxx / n - sx * sx / (n * n)) * (syy / n - sy * sy / (n * n)));
  CHECK(r2 > 0.999);
  const double slope = cov / (sxx / n - sx * sx / (n * n));
  CHECK(slope == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("square position follows the recent drift") {
  auto c = noiseless();
  c.frames_per_video = 200;
  c.latent_amplitude = 0.4;
  const auto latent = generate_latent(c, 1);
  const auto frames = render(latent, c, 1);
  const std::size_t middle = (c.height - c.square_size) / 2;
  std::size_t rising = 0, falling = 0;
  for (std::size_t t = c.drift_window; t < latent.size(); ++t) {
    const double drift = latent[t] - latent[t - c.drift_window];
    const std::size_t row = square_row(frames, t);
    if (drift > 0.15) {
      CHECK(row < middle);
      ++rising;
    } else if (drift < -0.15) {
      CHECK(row > middle);
      ++falling;
    }
  }
  CHECK(rising > 0);
  CHECK(falling > 0);
}

TEST_CASE("generation is deterministic in the seed") {
  const auto c = testing::tiny_synth(21);
  const auto a = make_video(c, 4);
  const auto b = make_video(c, 4);
  CHECK(a.frames.pixels == b.frames.pixels);
  CHECK(a.timeline == b.timeline);
  CHECK(generate_latent(c, 4) == generate_latent(c, 4));
  CHECK(generate_latent(c, 4) != generate_latent(c, 7));
  CHECK(generate_latent(c, 4) != generate_latent(testing::tiny_synth(22), 4));
}

TEST_CASE("unreachable moods are reported") {
  auto c = testing::tiny_synth();
  c.mood_biases = {0.0};
  c.latent_amplitude = 5.0;
  c.tau = 0.01;
  CHECK_THROWS_AS(generate_latent(c, 0), ConfigError);
  testing::ScratchDir dir("unreachable");
  CHECK_THROWS_AS(build_benchmark(c, dir.path()), ConfigError);
}

TEST_CASE("benchmark layout, split and referential integrity") {
  const auto c = testing::tiny_synth();
  testing::ScratchDir dir("bench");
  build_benchmark(c, dir.path());

  const auto info = read_dataset_info(dir.path());
  CHECK(info.channels == c.channels);
  CHECK(info.height == c.height);
  const auto train_ids = info.split("train");
  const auto val_ids = info.split("val");
  CHECK(val_ids == std::vector<std::string>{"v004", "v009"});
  CHECK(train_ids.size() + val_ids.size() == c.num_videos);

  const std::set<std::string> train_set(train_ids.begin(), train_ids.end());
  const std::set<std::string> val_set(val_ids.begin(), val_ids.end());
  const auto train = read_manifest(layout::manifests(dir.path()) / "train.jsonl");
  const auto val = read_manifest(layout::manifests(dir.path()) / "val.jsonl");
  REQUIRE_FALSE(train.empty());
  REQUIRE_FALSE(val.empty());
  for (const auto& clip : train) CHECK(train_set.count(clip.video_id) == 1);
  for (const auto& clip : val) CHECK(val_set.count(clip.video_id) == 1);

  FrameStore store(layout::frames(dir.path()));
  for (const auto* split : {&train, &val}) {
    for (const auto& clip : *split) {
      CHECK_NOTHROW(clip.validate());
      const auto& frames = store.video(clip.video_id);
      CHECK(clip.clip_end < frames.count);
      const auto timeline = load_timeline(layout::annotations(dir.path()) / (clip.video_id + ".jsonl"));
      CHECK(timeline.video_id() == clip.video_id);
    }
  }

  testing::ScratchDir again("bench2");
  build_benchmark(c, again.path());
  for (const char* f : {"dataset.json", "manifests/train.jsonl", "manifests/val.jsonl",
                        "frames/v003.bin", "annotations/v003.jsonl"}) {
    CHECK(slurp(dir.path() / f) == slurp(again.path() / f));
  }
}

TEST_CASE("a linear probe on clip luminance recovers noiseless valence") {
  auto c = noiseless();
  c.num_videos = 15;
  testing::ScratchDir dir("probe");
  build_benchmark(c, dir.path());
  FrameStore store(layout::frames(dir.path()));
  auto feature = [&](const ClipSpec& clip) {
    double sum = 0;
    std::size_t count = 0;
    for (auto idx : clip.sampled_indices) {
      for (float p : store.frame(clip.video_id, idx)) {
        sum += p;
        ++count;
      }
    }
    return sum / static_cast<double>(count);
  };
  const auto train = read_manifest(layout::manifests(dir.path()) / "train.jsonl");
  const auto val = read_manifest(layout::manifests(dir.path()) / "val.jsonl");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& clip : train) {
    const double x = feature(clip);
    sx += x;
    sy += clip.target_valence;
    sxx += x * x;
    sxy += x * clip.target_valence;
  }
  const double n = static_cast<double>(train.size());
  const double slope = (sxy - sx * sy / n) / (sxx - sx * sx / n);
  const double intercept = (sy - slope * sx) / n;

  std::vector<double> y, y_hat;
  for (const auto& clip : val) {
    y.push_back(clip.target_valence);
    y_hat.push_back(intercept + slope * feature(clip));
  }
  CHECK(testing::ccc_oracle(y, y_hat) >= 0.8);
}
