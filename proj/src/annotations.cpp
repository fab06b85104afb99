#include "moodval/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "moodval/error.hpp"

namespace moodval {

using nlohmann::json;

namespace {

bool valence_in_range(double v) { return std::isfinite(v) && v >= -1.0 && v <= 1.0; }

void check_valence(double v, const char* what) {
  if (!valence_in_range(v)) {
    throw ValidationError(std::string(what) + " " + std::to_string(v) + " outside [-1, 1]");
  }
}

}  // namespace

MoodLabel mood_from_int(int value) {
  if (value < -1 || value > 1) throw ValidationError("mood label must be -1, 0 or 1");
  return static_cast<MoodLabel>(value);
}

DeltaLabel delta_from_int(int value) {
  if (value < -1 || value > 1) throw ValidationError("delta label must be -1, 0 or 1");
  return static_cast<DeltaLabel>(value);
}

const char* to_string(ValenceBand band) {
  switch (band) {
    case ValenceBand::negative: return "negative";
    case ValenceBand::neutral: return "neutral";
    case ValenceBand::positive: return "positive";
  }
  return "?";
}

ValenceTimeline::ValenceTimeline(std::string video_id, std::vector<FrameRecord> frames,
                                 std::optional<MoodLabel> annotated_mood)
    : video_id_(std::move(video_id)),
      frames_(std::move(frames)),
      annotated_mood_(annotated_mood) {
  if (frames_.empty()) throw ValidationError("timeline '" + video_id_ + "' has no frames");
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    const auto& f = frames_[i];
    if (i > 0 && f.frame_index <= frames_[i - 1].frame_index) {
      throw ValidationError("timeline '" + video_id_ + "': frame indices not strictly increasing at " +
                            std::to_string(f.frame_index));
    }
    check_valence(f.valence, "valence");
    if (!std::isfinite(f.confidence) || f.confidence < 0.0 || f.confidence > 1.0) {
      throw ValidationError("confidence " + std::to_string(f.confidence) + " outside [0, 1]");
    }
  }
}

std::optional<std::size_t> ValenceTimeline::position_of(std::size_t frame_index) const {
  auto it = std::lower_bound(frames_.begin(), frames_.end(), frame_index,
                             [](const FrameRecord& r, std::size_t idx) { return r.frame_index < idx; });
  if (it == frames_.end() || it->frame_index != frame_index) return std::nullopt;
  return static_cast<std::size_t>(it - frames_.begin());
}

const FrameRecord& ValenceTimeline::at_frame(std::size_t frame_index) const {
  auto pos = position_of(frame_index);
  if (!pos) {
    throw ValidationError("frame " + std::to_string(frame_index) + " not in timeline '" +
                          video_id_ + "'");
  }
  return frames_[*pos];
}

ValenceBand band_of(double valence) {
  check_valence(valence, "valence");
  if (valence > 0.3) return ValenceBand::positive;
  if (valence < -0.3) return ValenceBand::negative;
  return ValenceBand::neutral;
}

MoodLabel derive_mood(const ValenceTimeline& timeline) {
  const auto& frames = timeline.frames();
  ValenceBand best_band = band_of(frames.front().valence);
  std::size_t best_len = 0;
  ValenceBand run_band = best_band;
  std::size_t run_len = 0;
  for (const auto& f : frames) {
    const ValenceBand b = band_of(f.valence);
    if (run_len > 0 && b == run_band) {
      ++run_len;
    } else {
      run_band = b;
      run_len = 1;
    }
    // Strict comparison keeps the earliest of equally long runs.
    if (run_len > best_len) {
      best_len = run_len;
      best_band = run_band;
    }
  }
  return static_cast<MoodLabel>(static_cast<int>(best_band));
}

MoodLabel resolve_mood(const ValenceTimeline& timeline) {
  if (timeline.annotated_mood()) return *timeline.annotated_mood();
  return derive_mood(timeline);
}

DeltaLabel derive_delta(double valence_first, double valence_last, double deadzone) {
  check_valence(valence_first, "first valence");
  check_valence(valence_last, "last valence");
  if (deadzone < 0.0) throw ValidationError("delta deadzone must be non-negative");
  const double d = valence_last - valence_first;
  if (std::abs(d) <= deadzone) return DeltaLabel::neutral;
  return d > 0.0 ? DeltaLabel::positive : DeltaLabel::negative;
}

ValenceTimeline filter_confidence(const ValenceTimeline& timeline, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValidationError("confidence threshold must lie in [0, 1]");
  }
  std::vector<FrameRecord> kept;
  kept.reserve(timeline.size());
  for (const auto& f : timeline.frames()) {
    if (f.confidence >= threshold) kept.push_back(f);
  }
  if (kept.empty()) {
    throw NoUsableFramesError("no usable frames in '" + timeline.video_id() +
                              "' at confidence threshold " + std::to_string(threshold));
  }
  return ValenceTimeline(timeline.video_id(), std::move(kept), timeline.annotated_mood());
}

ValenceTimeline parse_timeline(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::string> video_id;
  std::optional<MoodLabel> mood;
  std::vector<FrameRecord> frames;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(source, line_no, "record is not a JSON object");
    if (!video_id) {
      if (!j.contains("video_id") || !j["video_id"].is_string()) {
        throw ParseError(source, line_no, "first line must be a header with a string \"video_id\"");
      }
      for (auto& [key, value] : j.items()) {
        if (key != "video_id" && key != "mood") {
          throw ParseError(source, line_no, "unknown header field \"" + key + "\"");
        }
      }
      video_id = j["video_id"].get<std::string>();
      if (j.contains("mood") && !j["mood"].is_null()) {
        if (!j["mood"].is_number_integer()) throw ParseError(source, line_no, "mood must be an integer");
        const int m = j["mood"].get<int>();
        if (m < -1 || m > 1) throw ParseError(source, line_no, "mood must be -1, 0 or 1");
        mood = static_cast<MoodLabel>(m);
      }
      continue;
    }
    for (auto& [key, value] : j.items()) {
      if (key != "frame" && key != "valence" && key != "confidence") {
        throw ParseError(source, line_no, "unknown record field \"" + key + "\"");
      }
    }
    if (!j.contains("frame") || !j["frame"].is_number_integer() || j["frame"].get<long long>() < 0) {
      throw ParseError(source, line_no, "\"frame\" must be a non-negative integer");
    }
    if (!j.contains("valence") || !j["valence"].is_number()) {
      throw ParseError(source, line_no, "\"valence\" must be a number");
    }
    if (!j.contains("confidence") || !j["confidence"].is_number()) {
      throw ParseError(source, line_no, "\"confidence\" must be a number");
    }
    FrameRecord r{j["frame"].get<std::size_t>(), j["valence"].get<double>(),
                  j["confidence"].get<double>()};
    if (!valence_in_range(r.valence)) {
      throw ParseError(source, line_no, "valence " + std::to_string(r.valence) + " outside [-1, 1]");
    }
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw ParseError(source, line_no,
                       "confidence " + std::to_string(r.confidence) + " outside [0, 1]");
    }
    if (!frames.empty() && r.frame_index <= frames.back().frame_index) {
      throw ParseError(source, line_no,
                       "frame index " + std::to_string(r.frame_index) +
                           " is not greater than the previous index " +
                           std::to_string(frames.back().frame_index));
    }
    frames.push_back(r);
  }
  if (!video_id) throw ParseError(source, line_no, "missing header line");
  if (frames.empty()) throw ParseError(source, line_no, "no frame records");
  return ValenceTimeline(*video_id, std::move(frames), mood);
}

void write_timeline(std::ostream& out, const ValenceTimeline& timeline) {
  json header{{"video_id", timeline.video_id()}};
  header["mood"] = timeline.annotated_mood()
                       ? json(static_cast<int>(*timeline.annotated_mood()))
                       : json(nullptr);
  out << header.dump() << '\n';
  for (const auto& f : timeline.frames()) {
    json r{{"frame", f.frame_index}, {"valence", f.valence}, {"confidence", f.confidence}};
    out << r.dump() << '\n';
  }
}

ValenceTimeline load_timeline(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open annotation file " + path.string());
  return parse_timeline(in, path.string());
}

void save_timeline(const ValenceTimeline& timeline, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write annotation file " + path.string());
  write_timeline(out, timeline);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace moodval
