#include "moodval/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

#include "moodval/error.hpp"

namespace moodval {

using nlohmann::json;

void SamplerConfig::validate() const {
  if (frames_per_clip < 2) throw ConfigError("frames_per_clip must be >= 2");
  if (initial_length <= frames_per_clip) {
    throw ConfigError("initial_length must exceed frames_per_clip");
  }
  if (stride < 1) throw ConfigError("stride must be >= 1");
}

void ClipSpec::validate() const {
  if (sampled_indices.size() < 2) throw ValidationError("clip needs at least 2 sampled frames");
  for (std::size_t i = 1; i < sampled_indices.size(); ++i) {
    if (sampled_indices[i] <= sampled_indices[i - 1]) {
      throw ValidationError("sampled indices must be strictly increasing");
    }
  }
  if (sampled_indices.front() != clip_start || sampled_indices.back() != clip_end) {
    throw ValidationError("sampled indices must start at clip_start and end at clip_end");
  }
  if (target_index <= clip_end) throw ValidationError("target_index must follow clip_end");
  if (!(target_valence >= -1.0 && target_valence <= 1.0)) {
    throw ValidationError("target_valence outside [-1, 1]");
  }
}

std::vector<std::size_t> subsample_positions(std::size_t length, std::size_t n) {
  if (n < 2) throw ValidationError("need at least 2 sampled frames");
  if (length < n) {
    throw ValidationError("cannot sample " + std::to_string(n) + " frames from " +
                          std::to_string(length));
  }
  std::vector<std::size_t> out(n);
  const std::size_t span = length - 1;
  const std::size_t denom = n - 1;
  // round_half_up(j * span / denom) in exact integer arithmetic.
  for (std::size_t j = 0; j < n; ++j) out[j] = (2 * j * span + denom) / (2 * denom);
  return out;
}

std::vector<std::size_t> subsample_indices(const ValenceTimeline& timeline,
                                           std::size_t start_position, std::size_t end_position,
                                           std::size_t n) {
  if (end_position < start_position || end_position >= timeline.size()) {
    throw ValidationError("clip positions out of range");
  }
  auto positions = subsample_positions(end_position - start_position + 1, n);
  std::vector<std::size_t> indices;
  indices.reserve(n);
  for (auto p : positions) indices.push_back(timeline[start_position + p].frame_index);
  return indices;
}

std::vector<ClipSpec> generate_clips(const ValenceTimeline& timeline, const SamplerConfig& config) {
  config.validate();
  const std::size_t usable = timeline.size();
  if (usable < config.initial_length + 1) {
    throw InsufficientFramesError("video '" + timeline.video_id() + "' has " +
                                  std::to_string(usable) + " usable frames; need at least " +
                                  std::to_string(config.initial_length + 1));
  }
  std::vector<ClipSpec> clips;
  for (std::size_t end = config.initial_length - 1; end + 1 < usable; end += config.stride) {
    ClipSpec c;
    c.video_id = timeline.video_id();
    c.clip_start = timeline[0].frame_index;
    c.clip_end = timeline[end].frame_index;
    c.sampled_indices = subsample_indices(timeline, 0, end, config.frames_per_clip);
    c.target_index = timeline[end + 1].frame_index;
    clips.push_back(std::move(c));
  }
  return clips;
}

ClipSpec attach_labels(ClipSpec clip, const ValenceTimeline& timeline, MoodLabel mood,
                       double delta_deadzone) {
  const auto target = timeline.position_of(clip.target_index);
  if (!target) {
    throw ValidationError("target frame " + std::to_string(clip.target_index) +
                          " missing from timeline '" + timeline.video_id() + "'");
  }
  clip.mood = mood;
  clip.delta = derive_delta(timeline.at_frame(clip.clip_start).valence,
                            timeline.at_frame(clip.clip_end).valence, delta_deadzone);
  clip.target_valence = timeline[*target].valence;
  return clip;
}

std::vector<ClipSpec> make_labelled_clips(const ValenceTimeline& usable, MoodLabel mood,
                                          const SamplerConfig& config, double delta_deadzone) {
  auto clips = generate_clips(usable, config);
  for (auto& c : clips) c = attach_labels(std::move(c), usable, mood, delta_deadzone);
  return clips;
}

namespace {

json clip_to_json(const ClipSpec& c) {
  return json{{"video_id", c.video_id},
              {"clip_start", c.clip_start},
              {"clip_end", c.clip_end},
              {"sampled_indices", c.sampled_indices},
              {"target_index", c.target_index},
              {"mood", static_cast<int>(c.mood)},
              {"delta", static_cast<int>(c.delta)},
              {"target_valence", c.target_valence}};
}

std::size_t get_index(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 0) {
    throw ValidationError(std::string("\"") + key + "\" must be a non-negative integer");
  }
  return j[key].get<std::size_t>();
}

int get_label(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    throw ValidationError(std::string("\"") + key + "\" must be an integer");
  }
  const int v = j[key].get<int>();
  if (v < -1 || v > 1) throw ValidationError(std::string("\"") + key + "\" must be -1, 0 or 1");
  return v;
}

ClipSpec clip_from_json(const json& j) {
  static const char* kKeys[] = {"video_id", "clip_start", "clip_end", "sampled_indices",
                                "target_index", "mood", "delta", "target_valence"};
  for (auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      throw ValidationError("unknown field \"" + key + "\"");
    }
  }
  ClipSpec c;
  if (!j.contains("video_id") || !j["video_id"].is_string()) {
    throw ValidationError("\"video_id\" must be a string");
  }
  c.video_id = j["video_id"].get<std::string>();
  c.clip_start = get_index(j, "clip_start");
  c.clip_end = get_index(j, "clip_end");
  c.target_index = get_index(j, "target_index");
  if (!j.contains("sampled_indices") || !j["sampled_indices"].is_array()) {
    throw ValidationError("\"sampled_indices\" must be an array");
  }
  for (const auto& v : j["sampled_indices"]) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ValidationError("sampled index must be a non-negative integer");
    }
    c.sampled_indices.push_back(v.get<std::size_t>());
  }
  c.mood = static_cast<MoodLabel>(get_label(j, "mood"));
  c.delta = static_cast<DeltaLabel>(get_label(j, "delta"));
  if (!j.contains("target_valence") || !j["target_valence"].is_number()) {
    throw ValidationError("\"target_valence\" must be a number");
  }
  c.target_valence = j["target_valence"].get<double>();
  c.validate();
  return c;
}

}  // namespace

void write_manifest(std::ostream& out, const std::vector<ClipSpec>& clips) {
  for (const auto& c : clips) out << clip_to_json(c).dump() << '\n';
}

std::vector<ClipSpec> parse_manifest(std::istream& in, const std::string& source) {
  std::vector<ClipSpec> clips;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw ValidationError("record is not a JSON object");
      clips.push_back(clip_from_json(j));
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return clips;
}

void write_manifest(const std::vector<ClipSpec>& clips, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  write_manifest(out, clips);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ClipSpec> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in, path.string());
}

}  // namespace moodval
