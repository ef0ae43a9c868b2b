#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidchap/autodiff.hpp"

namespace vidchap {

struct Video;  // corpus.hpp

// One second of visual features after 1 fps downsampling.
struct FrameFeature {
  int time_s = 0;
  std::vector<double> values;  // dimension d_v, f32-valued at rest
};

enum class ProviderKind { synthetic, hashed_text, external_file };

std::string to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(const std::string& s);

// Recipe for lazily materializing a video's frame features. `synthetic`
// regenerates the corpus generator's features bit-exactly from the recipe;
// `hashed_text` derives features from narration token hashes; `external_file`
// reads a binary sidecar.
struct FeatureProviderSpec {
  ProviderKind kind = ProviderKind::synthetic;
  int d_v = 8;
  uint64_t seed = 0;
  double signal = 0.0;          // synthetic: boundary signal strength
  bool modality_split = false;  // synthetic: alternate visual/text boundary evidence
  std::string path;             // external_file: sidecar path

  bool operator==(const FeatureProviderSpec&) const = default;
};

// Low-level synthetic feature stream: piecewise-constant per-chapter means of
// magnitude `signal` plus unit Gaussian noise, quantized to f32. With
// modality_split, only odd-numbered chapter transitions move the mean (even
// ones are left as text-only evidence). Draw order is part of the contract:
// per chapter the d_v mean coordinates, then per second the d_v noise values.
std::vector<FrameFeature> synth_features(uint64_t seed, int duration_s, int d_v,
                                         double signal, bool modality_split,
                                         const std::vector<int>& chapter_begins);

// TSM-style shift over a TxC sequence: first floor(C*f) channels take their
// value from t-1, the next floor(C*f) from t+1, the rest pass through;
// vacated boundary slots are zero.
Tensor temporal_shift(const Tensor& seq, double shift_fraction = 1.0 / 8.0);

// Pools the frames of one chapter span into an m x d_v embedding matrix:
// m contiguous near-equal segments averaged per segment; if there are fewer
// frames than segments, trailing rows replicate the last available mean.
Tensor pool_chapter_visual(const std::vector<FrameFeature>& frames, int m = 10);

// Materializes per-second features for a video according to the spec.
std::vector<FrameFeature> provide(const FeatureProviderSpec& spec, const Video& video);

// Binary feature sidecar ("VFS1"): u32 magic, u32 d_v, u32 video count, then
// per video {u32 id length, id bytes, u32 frame count} and f32 payloads in
// manifest order (frame times are 0..count-1).
void save_feature_sidecar(const std::string& path,
                          const std::vector<std::pair<std::string, std::vector<FrameFeature>>>& videos,
                          int d_v);
std::vector<std::pair<std::string, std::vector<FrameFeature>>> load_feature_sidecar(
    const std::string& path, int expect_d_v = -1);

}  // namespace vidchap
