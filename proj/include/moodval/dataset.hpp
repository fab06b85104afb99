#pragma once

// On-disk dataset layout:
//   dataset.json            {"schema_version", "image": {channels, height, width},
//                            "videos": [{"video_id", "split"}]}
//   annotations/<id>.jsonl  per-video valence timeline
//   frames/<id>.bin/.json   per-video pixels
//   manifests/train.jsonl, manifests/val.jsonl

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace moodval {

struct DatasetVideo {
  std::string video_id;
  std::string split;  ///< "train" or "val"
};

struct DatasetInfo {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<DatasetVideo> videos;

  std::vector<std::string> split(const std::string& name) const;
};

namespace layout {
inline std::filesystem::path info(const std::filesystem::path& root) { return root / "dataset.json"; }
inline std::filesystem::path annotations(const std::filesystem::path& root) { return root / "annotations"; }
inline std::filesystem::path frames(const std::filesystem::path& root) { return root / "frames"; }
inline std::filesystem::path manifests(const std::filesystem::path& root) { return root / "manifests"; }
}  // namespace layout

void write_dataset_info(const DatasetInfo& info, const std::filesystem::path& root);
DatasetInfo read_dataset_info(const std::filesystem::path& root);

}  // namespace moodval
