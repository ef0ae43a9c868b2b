#include "vidchap/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vidchap/rng.hpp"

namespace vidchap {

void validate(const WindowingConfig& cfg) {
  if (cfg.window_s < 2 || cfg.window_s % 2 != 0)
    throw std::invalid_argument("windowing: window length must be even and >= 2");
  if (cfg.offset_s < 1) throw std::invalid_argument("windowing: offset must be >= 1");
  if (cfg.stride_s < 1 || cfg.stride_s > 2 * cfg.offset_s)
    throw std::invalid_argument("windowing: stride must be in [1, 2*offset]");
}

std::vector<ClipWindow> enumerate_windows(int duration_s, const WindowingConfig& cfg,
                                          const std::string& video_id) {
  validate(cfg);
  if (duration_s < cfg.window_s)
    throw std::invalid_argument("enumerate_windows: video shorter than one window");
  std::vector<ClipWindow> out;
  const int last = duration_s - cfg.window_s;
  for (int t_a = 0; t_a <= last; t_a += cfg.stride_s)
    out.push_back(ClipWindow{video_id, t_a, cfg.window_s});
  if (out.back().t_a != last) out.push_back(ClipWindow{video_id, last, cfg.window_s});
  return out;
}

std::vector<LabeledClip> label_clips(const std::vector<ClipWindow>& windows,
                                     const std::vector<Chapter>& chapters,
                                     const WindowingConfig& cfg) {
  validate(cfg);
  std::vector<LabeledClip> out;
  out.reserve(windows.size());
  for (const ClipWindow& w : windows) {
    const int mid = w.midpoint();
    int label = 0;
    for (const Chapter& ch : chapters) {
      if (std::abs(ch.begin_s - mid) <= cfg.offset_s) {
        label = 1;
        break;
      }
      if (ch.begin_s > mid + cfg.offset_s) break;  // chapters sorted
    }
    out.push_back(LabeledClip{w, label});
  }
  return out;
}

std::vector<BoundaryPrediction> localize(const std::vector<ClipPrediction>& predictions,
                                         const WindowingConfig& cfg,
                                         double threshold) {
  validate(cfg);
  for (size_t i = 0; i < predictions.size(); ++i) {
    const ClipPrediction& cp = predictions[i];
    if (cp.p < 0.0 || cp.p > 1.0)
      throw std::invalid_argument("localize: probability out of [0,1]");
    if (cp.window.k != cfg.window_s)
      throw std::invalid_argument("localize: window length does not match config");
    if (i > 0 && cp.window.t_a <= predictions[i - 1].window.t_a)
      throw std::invalid_argument("localize: predictions must be sorted by start");
  }

  std::vector<BoundaryPrediction> out;
  const ClipPrediction* best = nullptr;
  int prev_mid = 0;
  auto flush = [&] {
    if (best)
      out.push_back(BoundaryPrediction{best->window.video_id, best->window.midpoint(),
                                       best->p});
    best = nullptr;
  };
  for (const ClipPrediction& cp : predictions) {
    if (cp.p < threshold) continue;
    const int mid = cp.window.midpoint();
    if (best && mid - prev_mid > 2 * cfg.offset_s) flush();
    if (!best || cp.p > best->p) best = &cp;
    prev_mid = mid;
  }
  flush();
  return out;
}

std::vector<size_t> oversample(const std::vector<LabeledClip>& clips,
                               double target_pos_fraction, uint64_t seed) {
  if (target_pos_fraction <= 0.0 || target_pos_fraction >= 1.0)
    throw std::invalid_argument("oversample: target fraction must be in (0,1)");
  std::vector<size_t> positives, negatives;
  for (size_t i = 0; i < clips.size(); ++i)
    (clips[i].label ? positives : negatives).push_back(i);
  if (positives.empty() || negatives.empty())
    throw std::invalid_argument("oversample: need at least one positive and one negative");

  const int64_t epoch_len = std::llround(
      static_cast<double>(negatives.size()) / (1.0 - target_pos_fraction));
  const int64_t n_pos_draws = epoch_len - static_cast<int64_t>(negatives.size());

  std::vector<size_t> epoch = negatives;
  Rng rng(fold_seed(seed, "oversample"));
  for (int64_t i = 0; i < n_pos_draws; ++i)
    epoch.push_back(positives[rng.next_below(positives.size())]);
  rng.shuffle(epoch);
  return epoch;
}

}  // namespace vidchap
