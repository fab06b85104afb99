#pragma once

// Pixel storage. Each video is one binary tensor file (N, C, H, W) in row
// order with a JSON sidecar {"video_id", "shape", "dtype", "layout"}. Row i
// holds frame index i. Supported dtypes: "float32" and "uint8" (value / 255).

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace moodval {

struct VideoFrames {
  std::string video_id;
  std::size_t count = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  ///< (count, channels, height, width), values in [0, 1]

  std::size_t frame_size() const { return channels * height * width; }
  std::span<const float> frame(std::size_t index) const;
};

enum class PixelType { float32, uint8 };

/// Writes `<stem>.bin` and `<stem>.json` next to each other.
void save_video_frames(const VideoFrames& video, const std::filesystem::path& bin_path,
                       PixelType type = PixelType::uint8);
VideoFrames load_video_frames(const std::filesystem::path& bin_path);

/// Lazily loading, thread-safe cache over a directory of `<video_id>.bin`.
class FrameStore {
 public:
  explicit FrameStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
  const VideoFrames& video(const std::string& video_id);
  std::span<const float> frame(const std::string& video_id, std::size_t frame_index);

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<VideoFrames>> cache_;
};

}  // namespace moodval
