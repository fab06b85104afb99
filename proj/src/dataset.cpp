#include "moodval/dataset.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "moodval/error.hpp"

namespace moodval {

std::vector<std::string> DatasetInfo::split(const std::string& name) const {
  std::vector<std::string> ids;
  for (const auto& v : videos) {
    if (v.split == name) ids.push_back(v.video_id);
  }
  return ids;
}

void write_dataset_info(const DatasetInfo& info, const std::filesystem::path& root) {
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : info.videos) videos.push_back({{"video_id", v.video_id}, {"split", v.split}});
  const nlohmann::json j = {
      {"schema_version", 1},
      {"image", {{"channels", info.channels}, {"height", info.height}, {"width", info.width}}},
      {"videos", videos}};
  std::filesystem::create_directories(root);
  std::ofstream out(layout::info(root), std::ios::trunc);
  if (!out) throw IoError("cannot write " + layout::info(root).string());
  out << j.dump(2) << "\n";
}

DatasetInfo read_dataset_info(const std::filesystem::path& root) {
  const auto path = layout::info(root);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " (not a dataset directory?)");
  DatasetInfo info;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("schema_version").get<int>() != 1) {
      throw ValidationError(path.string() + ": unsupported schema_version");
    }
    const auto& img = j.at("image");
    info.channels = img.at("channels").get<std::size_t>();
    info.height = img.at("height").get<std::size_t>();
    info.width = img.at("width").get<std::size_t>();
    std::set<std::string> seen;
    for (const auto& v : j.at("videos")) {
      DatasetVideo dv{v.at("video_id").get<std::string>(), v.at("split").get<std::string>()};
      if (dv.split != "train" && dv.split != "val") {
        throw ValidationError(path.string() + ": video '" + dv.video_id + "' has split '" +
                              dv.split + "'");
      }
      if (!seen.insert(dv.video_id).second) {
        throw ValidationError(path.string() + ": duplicate video '" + dv.video_id + "'");
      }
      info.videos.push_back(std::move(dv));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return info;
}

}  // namespace moodval
