#pragma once

// Per-video valence annotations and the mood / emotion-change labels derived
// from them.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace moodval {

enum class MoodLabel : int { negative = -1, neutral = 0, positive = 1 };
enum class DeltaLabel : int { negative = -1, neutral = 0, positive = 1 };
enum class ValenceBand : int { negative = -1, neutral = 0, positive = 1 };

/// Class index in {0, 1, 2} used by the classification heads (value + 1).
inline std::size_t class_index(MoodLabel m) { return static_cast<std::size_t>(static_cast<int>(m) + 1); }
inline std::size_t class_index(DeltaLabel d) { return static_cast<std::size_t>(static_cast<int>(d) + 1); }

MoodLabel mood_from_int(int value);
DeltaLabel delta_from_int(int value);
const char* to_string(ValenceBand band);

struct FrameRecord {
  std::size_t frame_index = 0;
  double valence = 0.0;
  double confidence = 1.0;

  bool operator==(const FrameRecord&) const = default;
};

/// Ordered frame records of one video. Construction validates: non-empty,
/// strictly increasing frame indices, valence in [-1, 1], confidence in [0, 1].
class ValenceTimeline {
 public:
  ValenceTimeline(std::string video_id, std::vector<FrameRecord> frames,
                  std::optional<MoodLabel> annotated_mood = std::nullopt);

  const std::string& video_id() const { return video_id_; }
  const std::vector<FrameRecord>& frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }
  const FrameRecord& operator[](std::size_t position) const { return frames_[position]; }

  /// Ground-truth mood from the file header, when the dataset provides one.
  const std::optional<MoodLabel>& annotated_mood() const { return annotated_mood_; }
  void set_annotated_mood(std::optional<MoodLabel> mood) { annotated_mood_ = mood; }

  /// Position of `frame_index` in the sequence, if present.
  std::optional<std::size_t> position_of(std::size_t frame_index) const;
  const FrameRecord& at_frame(std::size_t frame_index) const;

  bool operator==(const ValenceTimeline&) const = default;

 private:
  std::string video_id_;
  std::vector<FrameRecord> frames_;
  std::optional<MoodLabel> annotated_mood_;
};

/// (0.3, 1] -> positive, [-0.3, 0.3] -> neutral, [-1, -0.3) -> negative.
ValenceBand band_of(double valence);

/// Band of the longest run of consecutive frames sharing one band; the
/// earliest run wins ties.
MoodLabel derive_mood(const ValenceTimeline& timeline);

/// Header mood when annotated, otherwise derive_mood on the given timeline.
MoodLabel resolve_mood(const ValenceTimeline& timeline);

/// Sign of (last - first); differences with |d| <= deadzone map to neutral.
DeltaLabel derive_delta(double valence_first, double valence_last, double deadzone = 0.0);

inline constexpr double kDefaultConfidenceThreshold = 0.85;

/// Keeps frames with confidence >= threshold, preserving frame indices.
/// Throws NoUsableFramesError when nothing survives.
ValenceTimeline filter_confidence(const ValenceTimeline& timeline,
                                  double threshold = kDefaultConfidenceThreshold);

/// JSON Lines: header {"video_id": str, "mood": int|null} then one
/// {"frame", "valence", "confidence"} record per line.
ValenceTimeline parse_timeline(std::istream& in, const std::string& source = "<stream>");
void write_timeline(std::ostream& out, const ValenceTimeline& timeline);
ValenceTimeline load_timeline(const std::filesystem::path& path);
void save_timeline(const ValenceTimeline& timeline, const std::filesystem::path& path);

}  // namespace moodval
