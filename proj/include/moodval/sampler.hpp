#pragma once

// Clip generation: incrementally growing clips anchored at the first usable
// frame, each represented by n equally spaced frames and labelled with the
// parent video's mood, the clip's emotion change and the next frame's valence.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "moodval/annotations.hpp"

namespace moodval {

struct SamplerConfig {
  std::size_t initial_length = 200;
  std::size_t stride = 3;
  std::size_t frames_per_clip = 5;

  /// n >= 2, initial_length > n, stride >= 1.
  void validate() const;
};

struct ClipSpec {
  std::string video_id;
  std::size_t clip_start = 0;
  std::size_t clip_end = 0;
  std::vector<std::size_t> sampled_indices;
  std::size_t target_index = 0;
  MoodLabel mood = MoodLabel::neutral;
  DeltaLabel delta = DeltaLabel::neutral;
  double target_valence = 0.0;

  bool operator==(const ClipSpec&) const = default;
  /// Structural invariants that do not need the timeline.
  void validate() const;
};

/// Positions j = 0..n-1 mapped to round_half_up(j * (L - 1) / (n - 1)).
std::vector<std::size_t> subsample_positions(std::size_t length, std::size_t n);

/// Frame indices of n equally spaced usable frames between the usable
/// positions `start_position` and `end_position` (inclusive).
std::vector<std::size_t> subsample_indices(const ValenceTimeline& timeline,
                                           std::size_t start_position,
                                           std::size_t end_position, std::size_t n);

/// Unlabelled clips (mood/delta/target valence left default). `timeline`
/// should already be confidence-filtered; lengths count usable frames.
std::vector<ClipSpec> generate_clips(const ValenceTimeline& timeline, const SamplerConfig& config);

ClipSpec attach_labels(ClipSpec clip, const ValenceTimeline& timeline, MoodLabel mood,
                       double delta_deadzone = 0.0);

/// generate_clips followed by attach_labels for every clip.
std::vector<ClipSpec> make_labelled_clips(const ValenceTimeline& usable, MoodLabel mood,
                                          const SamplerConfig& config,
                                          double delta_deadzone = 0.0);

void write_manifest(std::ostream& out, const std::vector<ClipSpec>& clips);
std::vector<ClipSpec> parse_manifest(std::istream& in, const std::string& source = "<stream>");
void write_manifest(const std::vector<ClipSpec>& clips, const std::filesystem::path& path);
std::vector<ClipSpec> read_manifest(const std::filesystem::path& path);

}  // namespace moodval
