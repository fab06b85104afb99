#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "moodval/checkpoint.hpp"
#include "moodval/dataset.hpp"
#include "moodval/error.hpp"
#include "moodval/frames.hpp"
#include "moodval/models.hpp"
#include "support.hpp"

using namespace moodval;

namespace {

VideoFrames random_video(const std::string& id, std::size_t count, std::mt19937_64& gen) {
  VideoFrames v{id, count, 2, 3, 4, {}};
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  v.pixels.resize(v.count * v.frame_size());
  for (auto& p : v.pixels) p = u(gen);
  return v;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("float32 frames round trip exactly") {
  std::mt19937_64 gen(71);
  testing::ScratchDir dir("frames");
  const auto v = random_video("a", 5, gen);
  save_video_frames(v, dir.path() / "a.bin", PixelType::float32);
  const auto back = load_video_frames(dir.path() / "a.bin");
  CHECK(back.video_id == "a");
  CHECK(back.count == 5);
  CHECK(back.pixels == v.pixels);
  const auto f = back.frame(3);
  CHECK(f.size() == 24);
  CHECK(f[0] == v.pixels[3 * 24]);
  CHECK_THROWS_AS(back.frame(5), ValidationError);
}

TEST_CASE("uint8 frames quantise to the nearest level") {
  std::mt19937_64 gen(72);
  testing::ScratchDir dir("frames8");
  const auto v = random_video("b", 3, gen);
  save_video_frames(v, dir.path() / "b.bin");
  const auto back = load_video_frames(dir.path() / "b.bin");
  REQUIRE(back.pixels.size() == v.pixels.size());
  for (std::size_t i = 0; i < v.pixels.size(); ++i) {
    CHECK(std::abs(back.pixels[i] - v.pixels[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  CHECK(std::filesystem::file_size(dir.path() / "b.bin") == v.pixels.size());
}

TEST_CASE("frame store caches and validates") {
  std::mt19937_64 gen(73);
  testing::ScratchDir dir("store");
  save_video_frames(random_video("c", 2, gen), dir.path() / "c.bin");
  save_video_frames(random_video("other", 2, gen), dir.path() / "d.bin");
  FrameStore store(dir.path());
  const auto& first = store.video("c");
  CHECK(&store.video("c") == &first);
  CHECK(store.frame("c", 1).size() == 24);
  CHECK_THROWS_AS(store.video("d"), ValidationError);
  CHECK_THROWS_AS(store.video("missing"), IoError);

  std::ofstream(dir.path() / "e.json") << R"({"video_id": "e", "shape": [1, 1, 1], "dtype": "uint8"})";
  std::ofstream(dir.path() / "e.bin") << "x";
  CHECK_THROWS_AS(store.video("e"), ValidationError);
  std::ofstream(dir.path() / "f.json") << R"({"video_id": "f", "shape": [4, 1, 2, 2], "dtype": "uint8"})";
  std::ofstream(dir.path() / "f.bin") << "xy";
  CHECK_THROWS_AS(store.video("f"), IoError);
}

TEST_CASE("dataset info round trip") {
  testing::ScratchDir dir("info");
  DatasetInfo info{3, 16, 24, {{"a", "train"}, {"b", "val"}, {"c", "train"}}};
  write_dataset_info(info, dir.path());
  const auto back = read_dataset_info(dir.path());
  CHECK(back.channels == 3);
  CHECK(back.height == 16);
  CHECK(back.width == 24);
  CHECK(back.split("train") == std::vector<std::string>{"a", "c"});
  CHECK(back.split("val") == std::vector<std::string>{"b"});
}

TEST_CASE("checkpoint reload is bit-exact") {
  ModelConfig c;
  c.kind = ModelKind::mdelta_valnet;
  c.height = c.width = 8;
  c.frames_per_clip = 3;
  c.attention = AttentionConfig{{AttentionKind::spatial, AttentionKind::channel}, Placement::within_block, 3, 4, false};
  ValenceModel a(c, 1);
  // Move the batch-norm buffers away from their initial values.
  std::mt19937_64 gen(74);
  a.forward(testing::random_tensor(gen, {4, 3, 3, 8, 8}), testing::random_tensor(gen, {4, 3, 8, 8}));

  testing::ScratchDir dir("ckpt");
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(path, a, {{"epoch", 3}, {"note", "x"}});
  const auto ck = read_checkpoint(path);
  CHECK(ck.meta.at("epoch") == 3);

  ValenceModel b(c, 2);
  load_state(b, ck);
  const auto sa = state_of(a);
  const auto sb = state_of(b);
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].first == sb[i].first);
    CHECK(bit_equal(sa[i].second, sb[i].second));
  }
  CHECK_FALSE(std::filesystem::exists(dir.path() / "m.ckpt.tmp"));

  c.kind = ModelKind::m_valnet;
  ValenceModel other(c, 1);
  CHECK_THROWS_AS(load_state(other, ck), ValidationError);

  std::ofstream(dir.path() / "bad.ckpt") << "NOTACKPT";
  CHECK_THROWS(read_checkpoint(dir.path() / "bad.ckpt"));
}
