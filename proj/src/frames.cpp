#include "moodval/frames.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "moodval/error.hpp"

namespace moodval {

std::span<const float> VideoFrames::frame(std::size_t index) const {
  if (index >= count) {
    throw ValidationError("video '" + video_id + "' has no frame " + std::to_string(index) +
                          " (" + std::to_string(count) + " stored)");
  }
  return std::span<const float>(pixels).subspan(index * frame_size(), frame_size());
}

namespace {

std::filesystem::path sidecar_of(const std::filesystem::path& bin) {
  auto p = bin;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void save_video_frames(const VideoFrames& video, const std::filesystem::path& bin_path,
                       PixelType type) {
  if (video.pixels.size() != video.count * video.frame_size()) {
    throw ValidationError("video '" + video.video_id + "': pixel buffer does not match shape");
  }
  if (bin_path.has_parent_path()) std::filesystem::create_directories(bin_path.parent_path());
  std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + bin_path.string());
  if (type == PixelType::float32) {
    out.write(reinterpret_cast<const char*>(video.pixels.data()),
              static_cast<std::streamsize>(video.pixels.size() * sizeof(float)));
  } else {
    std::vector<unsigned char> bytes(video.pixels.size());
    std::transform(video.pixels.begin(), video.pixels.end(), bytes.begin(), [](float v) {
      return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    });
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out.flush()) throw IoError("failed writing " + bin_path.string());

  const nlohmann::json meta = {
      {"video_id", video.video_id},
      {"shape", {video.count, video.channels, video.height, video.width}},
      {"dtype", type == PixelType::float32 ? "float32" : "uint8"},
      {"layout", "NCHW"}};
  std::ofstream side(sidecar_of(bin_path), std::ios::trunc);
  if (!side) throw IoError("cannot write " + sidecar_of(bin_path).string());
  side << meta.dump(2) << "\n";
}

VideoFrames load_video_frames(const std::filesystem::path& bin_path) {
  const auto side_path = sidecar_of(bin_path);
  std::ifstream side(side_path);
  if (!side) throw IoError("cannot open " + side_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(side_path.string() + ": " + e.what());
  }
  VideoFrames v;
  std::string dtype;
  try {
    v.video_id = meta.at("video_id").get<std::string>();
    const auto shape = meta.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 4) throw ValidationError(side_path.string() + ": shape must have 4 dims");
    v.count = shape[0];
    v.channels = shape[1];
    v.height = shape[2];
    v.width = shape[3];
    dtype = meta.at("dtype").get<std::string>();
    if (meta.value("layout", "NCHW") != "NCHW") {
      throw ValidationError(side_path.string() + ": only NCHW layout is supported");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(side_path.string() + ": " + e.what());
  }
  const std::size_t n = v.count * v.frame_size();
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + bin_path.string());
  v.pixels.resize(n);
  if (dtype == "float32") {
    in.read(reinterpret_cast<char*>(v.pixels.data()), static_cast<std::streamsize>(n * sizeof(float)));
  } else if (dtype == "uint8") {
    std::vector<unsigned char> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    std::transform(bytes.begin(), bytes.end(), v.pixels.begin(),
                   [](unsigned char b) { return static_cast<float>(b) / 255.0f; });
  } else {
    throw ValidationError(side_path.string() + ": unsupported dtype '" + dtype + "'");
  }
  if (!in) throw IoError(bin_path.string() + ": file shorter than its declared shape");
  return v;
}

const VideoFrames& FrameStore::video(const std::string& video_id) {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(video_id);
  if (it == cache_.end()) {
    auto v = std::make_unique<VideoFrames>(load_video_frames(dir_ / (video_id + ".bin")));
    if (v->video_id != video_id) {
      throw ValidationError("frame file for '" + video_id + "' declares video_id '" +
                            v->video_id + "'");
    }
    it = cache_.emplace(video_id, std::move(v)).first;
  }
  return *it->second;
}

std::span<const float> FrameStore::frame(const std::string& video_id, std::size_t frame_index) {
  return video(video_id).frame(frame_index);
}

}  // namespace moodval
