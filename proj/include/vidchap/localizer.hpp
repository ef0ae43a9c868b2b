#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidchap/autodiff.hpp"
#include "vidchap/corpus.hpp"
#include "vidchap/windowing.hpp"

namespace vidchap {

enum class Modality { visual, text, visual_text };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct LocalizerConfig {
  Modality modality = Modality::visual_text;
  int d_v = 8;
  int vocab_size = 512;  // hash buckets for narration tokens
  int d_t = 16;          // token embedding dim
  int hidden = 32;
  bool use_tsm = true;
  int window_s = 16;
  double dropout = 0.0;
  double shift_fraction = 1.0 / 8.0;
};

void validate(const LocalizerConfig& cfg);

// Two-stream window classifier. Visual: optional temporal shift, per-frame
// linear + relu, mean over time. Text: embedding mean, linear + relu. Head:
// concat of the active streams through a two-layer MLP to a sigmoid. The
// final layer starts at zero so the initial output is exactly 0.5.
struct LocalizerModel {
  LocalizerConfig config;
  ParamStore params;
};

LocalizerModel init_localizer(const LocalizerConfig& cfg, uint64_t seed);

// Stable hash bucket for a narration token, in [4, vocab_size).
int token_bucket(const std::string& word, int vocab_size);

// One window's inputs: visual rows for seconds [t_a, t_a+k) (zero rows where
// the video has no frame) and the bucket ids of narration tokens inside the
// window.
struct ClipInputs {
  Tensor visual;            // k x d_v
  std::vector<int> tokens;  // bucket ids
};

ClipInputs gather_clip(const Video& video, const std::vector<FrameFeature>& frames,
                       int t_a, const LocalizerConfig& cfg);

// Parameter leaves bound onto a tape, in ParamStore order.
struct BoundParams {
  std::vector<Tape::NodeId> ids;
  const ParamStore* store = nullptr;

  Tape::NodeId at(const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParamStore& params);

// Differentiable forward; returns the 1x1 probability node. dropout_rng
// enables train-time dropout when the config rate is positive.
Tape::NodeId localizer_forward_graph(Tape& tape, const BoundParams& bound,
                                     const LocalizerConfig& cfg, const ClipInputs& clip,
                                     Rng* dropout_rng = nullptr);

// Tape-free forward used for inference; bit-identical to the graph forward
// without dropout.
double forward_probability(const LocalizerModel& model, const ClipInputs& clip);

struct LocalizerTrainConfig {
  int batch_size = 64;
  double base_lr = 1e-3;
  double weight_decay = 0.01;
  double warmup_frac = 0.05;
  int epochs = 10;
  double target_pos_fraction = 0.5;
  uint64_t seed = 1;
  double early_stop_val_ap = 2.0;  // stop once validation AP reaches this; >1 disables
};

struct LocalizerEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_ap = 0.0;  // NaN when there is no validation split
};

struct LocalizerTrainResult {
  std::vector<LocalizerEpochStats> curve;
  int best_epoch = -1;     // epoch whose parameters the model keeps
  double best_val_ap = 0;  // NaN when there is no validation split
};

// Minimizes the binary logistic loss over oversampled windows with AdamW and
// a warmup+cosine schedule; keeps the parameters of the best validation-AP
// epoch (the last epoch when no validation split exists). Deterministic under
// the config seed; a non-finite loss aborts with a diagnostic.
LocalizerTrainResult train_localizer(LocalizerModel& model, const Corpus& corpus,
                                     const std::map<std::string, Split>& split,
                                     const WindowingConfig& wcfg,
                                     const LocalizerTrainConfig& tcfg);

struct InferResult {
  std::vector<BoundaryPrediction> boundaries;
  std::vector<ClipPrediction> clips;
  bool too_short = false;        // video shorter than one window
  int64_t frames_processed = 0;  // n_windows * k
  double elapsed_s = 0.0;        // wallclock; keep out of deterministic outputs
};

// enumerate_windows -> forward per window (parallel across windows) ->
// localize.
InferResult infer_video(const LocalizerModel& model, const Video& video,
                        const WindowingConfig& wcfg, double threshold = 0.5);

}  // namespace vidchap
