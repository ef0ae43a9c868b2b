#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidchap/corpus.hpp"

namespace vidchap {

// Skip sliding window geometry. The stride defaults to the largest value that
// still guarantees every boundary lands within `offset_s` of some window
// midpoint, which is twice the allowed offset.
struct WindowingConfig {
  int window_s = 16;  // window length k, even so the midpoint is integral
  int offset_s = 2;   // allowed localization offset o
  int stride_s = 4;   // sliding step u, in [1, 2o]

  static WindowingConfig with_offset(int window_s, int offset_s) {
    return WindowingConfig{window_s, offset_s, 2 * offset_s};
  }
};

void validate(const WindowingConfig& cfg);

// One clip window covering seconds [t_a, t_a + k).
struct ClipWindow {
  std::string video_id;
  int t_a = 0;
  int k = 0;

  int midpoint() const { return t_a + k / 2; }
};

struct LabeledClip {
  ClipWindow window;
  int label = 0;  // 1 iff a chapter begins within offset_s of the midpoint
};

struct ClipPrediction {
  ClipWindow window;
  double p = 0.0;
};

struct BoundaryPrediction {
  std::string video_id;
  int begin_s = 0;
  double confidence = 0.0;
};

// Window starts 0, u, 2u, ... plus a tail window at duration-k so the final
// seconds are observable. Errors when the video is shorter than one window.
std::vector<ClipWindow> enumerate_windows(int duration_s, const WindowingConfig& cfg,
                                          const std::string& video_id = "");

// label = 1 iff some ground-truth begin lies within offset_s of the window
// midpoint.
std::vector<LabeledClip> label_clips(const std::vector<ClipWindow>& windows,
                                     const std::vector<Chapter>& chapters,
                                     const WindowingConfig& cfg);

// Thresholds predictions, groups runs of kept windows whose consecutive
// midpoints are at most 2o apart, and emits one boundary per group at the
// midpoint of its highest-probability window (ties to the earliest).
std::vector<BoundaryPrediction> localize(const std::vector<ClipPrediction>& predictions,
                                         const WindowingConfig& cfg,
                                         double threshold = 0.5);

// Index sequence for one epoch: every negative once plus positives drawn with
// replacement until the expected positive fraction reaches the target;
// shuffled deterministically.
std::vector<size_t> oversample(const std::vector<LabeledClip>& clips,
                               double target_pos_fraction, uint64_t seed);

}  // namespace vidchap
