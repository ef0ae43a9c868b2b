#include "vidchap/features.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "vidchap/corpus.hpp"
#include "vidchap/kernels.hpp"
#include "vidchap/rng.hpp"

namespace vidchap {

std::string to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::synthetic: return "synthetic";
    case ProviderKind::hashed_text: return "hashed-text";
    case ProviderKind::external_file: return "external-file";
  }
  throw std::logic_error("bad provider kind");
}

ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "synthetic") return ProviderKind::synthetic;
  if (s == "hashed-text") return ProviderKind::hashed_text;
  if (s == "external-file") return ProviderKind::external_file;
  throw std::invalid_argument("unknown feature provider: " + s);
}

std::vector<FrameFeature> synth_features(uint64_t seed, int duration_s, int d_v,
                                         double signal, bool modality_split,
                                         const std::vector<int>& chapter_begins) {
  if (duration_s < 1) throw std::invalid_argument("synth_features: empty duration");
  if (d_v < 4) throw std::invalid_argument("synth_features: d_v must be >= 4");
  Rng rng(seed);
  const int n_ch = std::max<int>(1, static_cast<int>(chapter_begins.size()));
  std::vector<std::vector<double>> mu(static_cast<size_t>(n_ch));
  double sign = 1.0;
  for (int i = 0; i < n_ch; ++i) {
    // with modality_split only odd transitions move the mean; even ones keep
    // it so their evidence is text-only
    if (i > 0 && modality_split && i % 2 == 0) {
      mu[i] = mu[i - 1];
      continue;
    }
    // channel 0 flips sign at every mean change: its window average crosses
    // zero exactly when a transition sits at the window center, so pooled
    // features stay informative about boundary position
    if (i > 0) sign = -sign;
    mu[i].resize(static_cast<size_t>(d_v));
    mu[i][0] = signal * sign;
    for (int j = 1; j < d_v; ++j)
      mu[i][static_cast<size_t>(j)] = signal * rng.next_normal();
  }
  std::vector<FrameFeature> frames(static_cast<size_t>(duration_s));
  int chapter_idx = 0;
  for (int t = 0; t < duration_s; ++t) {
    while (chapter_idx + 1 < n_ch &&
           chapter_begins[static_cast<size_t>(chapter_idx) + 1] <= t)
      ++chapter_idx;
    FrameFeature& f = frames[static_cast<size_t>(t)];
    f.time_s = t;
    f.values.resize(static_cast<size_t>(d_v));
    for (int j = 0; j < d_v; ++j)
      f.values[static_cast<size_t>(j)] = static_cast<double>(
          static_cast<float>(mu[static_cast<size_t>(chapter_idx)][static_cast<size_t>(j)] +
                             rng.next_normal()));
  }
  return frames;
}

Tensor temporal_shift(const Tensor& seq, double shift_fraction) {
  if (shift_fraction < 0.0 || shift_fraction > 0.5)
    throw std::invalid_argument("temporal_shift: fraction must be in [0, 1/2]");
  if (!seq.all_finite()) throw std::invalid_argument("temporal_shift: non-finite input");
  if (seq.n_rows < 1) throw std::invalid_argument("temporal_shift: empty sequence");
  const int n_shift = static_cast<int>(std::floor(seq.n_cols * shift_fraction));
  Tensor out(seq.n_rows, seq.n_cols);
  kernels::temporal_shift(seq.data.data(), out.data.data(), seq.n_rows, seq.n_cols,
                          n_shift, false);
  return out;
}

Tensor pool_chapter_visual(const std::vector<FrameFeature>& frames, int m) {
  if (frames.empty()) throw std::invalid_argument("pool_chapter_visual: empty span");
  if (m < 1) throw std::invalid_argument("pool_chapter_visual: m must be >= 1");
  const int n = static_cast<int>(frames.size());
  const int d = static_cast<int>(frames[0].values.size());
  for (const FrameFeature& f : frames)
    if (static_cast<int>(f.values.size()) != d)
      throw std::invalid_argument("pool_chapter_visual: inconsistent dimension");
  Tensor out(m, d);
  if (n >= m) {
    for (int i = 0; i < m; ++i) {
      const int start = static_cast<int>(static_cast<int64_t>(i) * n / m);
      const int end = static_cast<int>(static_cast<int64_t>(i + 1) * n / m);
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int r = start; r < end; ++r) s += frames[static_cast<size_t>(r)].values[static_cast<size_t>(j)];
        out.at(i, j) = s / (end - start);
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      const int src = std::min(i, n - 1);  // trailing rows replicate the last mean
      for (int j = 0; j < d; ++j)
        out.at(i, j) = frames[static_cast<size_t>(src)].values[static_cast<size_t>(j)];
    }
  }
  return out;
}

namespace {

std::vector<FrameFeature> hashed_text_features(const FeatureProviderSpec& spec,
                                               const Video& video) {
  std::map<std::string, std::vector<double>> cache;
  auto token_vector = [&](const std::string& word) -> const std::vector<double>& {
    auto it = cache.find(word);
    if (it == cache.end()) {
      Rng rng(fold_seed(spec.seed, word));
      std::vector<double> vec(static_cast<size_t>(spec.d_v));
      for (double& x : vec) x = rng.next_normal();
      it = cache.emplace(word, std::move(vec)).first;
    }
    return it->second;
  };

  std::vector<FrameFeature> frames(static_cast<size_t>(video.duration_s));
  std::vector<int> counts(static_cast<size_t>(video.duration_s), 0);
  for (size_t t = 0; t < frames.size(); ++t) {
    frames[t].time_s = static_cast<int>(t);
    frames[t].values.assign(static_cast<size_t>(spec.d_v), 0.0);
  }
  for (const NarrationToken& tok : video.narration) {
    const std::vector<double>& vec = token_vector(tok.word);
    FrameFeature& f = frames[static_cast<size_t>(tok.time_s)];
    for (int j = 0; j < spec.d_v; ++j) f.values[static_cast<size_t>(j)] += vec[static_cast<size_t>(j)];
    ++counts[static_cast<size_t>(tok.time_s)];
  }
  for (size_t t = 0; t < frames.size(); ++t) {
    if (counts[t] == 0) continue;  // seconds without tokens stay zero
    for (double& x : frames[t].values)
      x = static_cast<double>(static_cast<float>(x / counts[t]));
  }
  return frames;
}

}  // namespace

std::vector<FrameFeature> provide(const FeatureProviderSpec& spec, const Video& video) {
  if (spec.d_v < 4) throw std::invalid_argument("provide: d_v must be >= 4");
  switch (spec.kind) {
    case ProviderKind::synthetic: {
      std::vector<int> begins;
      for (const Chapter& ch : video.chapters) begins.push_back(ch.begin_s);
      return synth_features(spec.seed, video.duration_s, spec.d_v, spec.signal,
                            spec.modality_split, begins);
    }
    case ProviderKind::hashed_text:
      return hashed_text_features(spec, video);
    case ProviderKind::external_file: {
      auto all = load_feature_sidecar(spec.path, spec.d_v);
      for (auto& [id, frames] : all)
        if (id == video.id) return std::move(frames);
      throw std::runtime_error("provide: sidecar has no video " + video.id);
    }
  }
  throw std::logic_error("bad provider kind");
}

namespace {

constexpr uint32_t kSidecarMagic = 0x31534656;  // "VFS1"

void put_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("feature sidecar: truncated");
  return v;
}

}  // namespace

void save_feature_sidecar(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<FrameFeature>>>& videos,
    int d_v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("feature sidecar: cannot open for write: " + path);
  put_u32(out, kSidecarMagic);
  put_u32(out, static_cast<uint32_t>(d_v));
  put_u32(out, static_cast<uint32_t>(videos.size()));
  for (const auto& [id, frames] : videos) {
    put_u32(out, static_cast<uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    put_u32(out, static_cast<uint32_t>(frames.size()));
  }
  for (const auto& [id, frames] : videos) {
    for (size_t t = 0; t < frames.size(); ++t) {
      if (frames[t].time_s != static_cast<int>(t) ||
          static_cast<int>(frames[t].values.size()) != d_v)
        throw std::invalid_argument("feature sidecar: frames must be dense 0..n-1 at d_v");
      for (double v : frames[t].values) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
      }
    }
  }
  if (!out) throw std::runtime_error("feature sidecar: write failed: " + path);
}

std::vector<std::pair<std::string, std::vector<FrameFeature>>> load_feature_sidecar(
    const std::string& path, int expect_d_v) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("feature sidecar: cannot open: " + path);
  if (get_u32(in) != kSidecarMagic) throw std::runtime_error("feature sidecar: bad magic");
  const int d_v = static_cast<int>(get_u32(in));
  if (expect_d_v >= 0 && d_v != expect_d_v)
    throw std::runtime_error("feature sidecar: dimension mismatch");
  const uint32_t count = get_u32(in);
  std::vector<std::pair<std::string, std::vector<FrameFeature>>> out;
  std::vector<uint32_t> frame_counts;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = get_u32(in);
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw std::runtime_error("feature sidecar: truncated manifest");
    frame_counts.push_back(get_u32(in));
    out.emplace_back(std::move(id), std::vector<FrameFeature>{});
  }
  for (uint32_t i = 0; i < count; ++i) {
    auto& frames = out[i].second;
    frames.resize(frame_counts[i]);
    for (uint32_t t = 0; t < frame_counts[i]; ++t) {
      frames[t].time_s = static_cast<int>(t);
      frames[t].values.resize(static_cast<size_t>(d_v));
      for (double& v : frames[t].values) {
        float f = 0.0f;
        in.read(reinterpret_cast<char*>(&f), 4);
        if (!in) throw std::runtime_error("feature sidecar: truncated payload");
        v = static_cast<double>(f);
      }
    }
  }
  return out;
}

}  // namespace vidchap
