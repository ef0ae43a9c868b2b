#include "vidchap/localizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "vidchap/features.hpp"
#include "vidchap/kernels.hpp"
#include "vidchap/metrics.hpp"
#include "vidchap/rng.hpp"

namespace vidchap {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::text: return "text";
    case Modality::visual_text: return "visual+text";
  }
  throw std::logic_error("bad modality");
}

Modality modality_from_string(const std::string& s) {
  if (s == "visual") return Modality::visual;
  if (s == "text") return Modality::text;
  if (s == "visual+text") return Modality::visual_text;
  throw std::invalid_argument("unknown modality: " + s);
}

void validate(const LocalizerConfig& cfg) {
  if (cfg.d_v < 1 || cfg.d_t < 1 || cfg.hidden < 1)
    throw std::invalid_argument("localizer: dims must be >= 1");
  if (cfg.vocab_size < 5)
    throw std::invalid_argument("localizer: vocab must exceed the 4 reserved ids");
  if (cfg.window_s < 2 || cfg.window_s % 2 != 0)
    throw std::invalid_argument("localizer: window length must be even and >= 2");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw std::invalid_argument("localizer: dropout must be in [0,1)");
  if (cfg.shift_fraction < 0.0 || cfg.shift_fraction > 0.5)
    throw std::invalid_argument("localizer: shift fraction must be in [0,1/2]");
}

namespace {

bool has_visual(const LocalizerConfig& cfg) { return cfg.modality != Modality::text; }
bool has_text(const LocalizerConfig& cfg) { return cfg.modality != Modality::visual; }

size_t find_param(const ParamStore& store, const std::string& name) {
  for (size_t i = 0; i < store.count(); ++i)
    if (store.at(i).name == name) return i;
  throw std::logic_error("localizer: missing parameter " + name);
}

}  // namespace

Tape::NodeId BoundParams::at(const std::string& name) const {
  return ids[find_param(*store, name)];
}

LocalizerModel init_localizer(const LocalizerConfig& cfg, uint64_t seed) {
  validate(cfg);
  LocalizerModel model;
  model.config = cfg;
  Rng rng(fold_seed(seed, "localizer-init"));
  int head_in = 0;
  if (has_visual(cfg)) {
    model.params.add("visual.proj.w", xavier_uniform(cfg.d_v, cfg.hidden, rng));
    model.params.add("visual.proj.b", Tensor(1, cfg.hidden));
    head_in += cfg.hidden;
  }
  if (has_text(cfg)) {
    model.params.add("text.embed", xavier_uniform(cfg.vocab_size, cfg.d_t, rng));
    model.params.add("text.proj.w", xavier_uniform(cfg.d_t, cfg.hidden, rng));
    model.params.add("text.proj.b", Tensor(1, cfg.hidden));
    head_in += cfg.hidden;
  }
  model.params.add("head.l1.w", xavier_uniform(head_in, cfg.hidden, rng));
  model.params.add("head.l1.b", Tensor(1, cfg.hidden));
  // zero final layer: the untrained model outputs exactly 0.5
  model.params.add("head.l2.w", Tensor(cfg.hidden, 1));
  model.params.add("head.l2.b", Tensor(1, 1));
  return model;
}

int token_bucket(const std::string& word, int vocab_size) {
  if (vocab_size < 5) throw std::invalid_argument("token_bucket: vocab too small");
  return 4 + static_cast<int>(fnv1a(word) % static_cast<uint64_t>(vocab_size - 4));
}

ClipInputs gather_clip(const Video& video, const std::vector<FrameFeature>& frames,
                       int t_a, const LocalizerConfig& cfg) {
  if (t_a < 0 || t_a + cfg.window_s > video.duration_s)
    throw std::invalid_argument("gather_clip: window outside video");
  ClipInputs clip;
  clip.visual = Tensor(cfg.window_s, cfg.d_v);
  if (has_visual(cfg)) {
    std::vector<const FrameFeature*> by_time(static_cast<size_t>(video.duration_s), nullptr);
    for (const FrameFeature& f : frames) {
      if (f.time_s < 0 || f.time_s >= video.duration_s)
        throw std::invalid_argument("gather_clip: frame time out of range");
      by_time[static_cast<size_t>(f.time_s)] = &f;
    }
    for (int r = 0; r < cfg.window_s; ++r) {
      const FrameFeature* f = by_time[static_cast<size_t>(t_a + r)];
      if (!f) continue;  // missing seconds stay zero
      if (static_cast<int>(f->values.size()) != cfg.d_v)
        throw std::invalid_argument("gather_clip: frame dimension mismatch");
      for (int c = 0; c < cfg.d_v; ++c) clip.visual.at(r, c) = f->values[static_cast<size_t>(c)];
    }
  }
  if (has_text(cfg)) {
    for (const NarrationToken& tok : video.narration)
      if (tok.time_s >= t_a && tok.time_s < t_a + cfg.window_s)
        clip.tokens.push_back(token_bucket(tok.word, cfg.vocab_size));
  }
  return clip;
}

BoundParams bind_params(Tape& tape, const ParamStore& params) {
  BoundParams bound;
  bound.store = &params;
  for (size_t i = 0; i < params.count(); ++i)
    bound.ids.push_back(tape.leaf(params.at(i).value, true));
  return bound;
}

namespace {

Tape::NodeId maybe_dropout(Tape& tape, Tape::NodeId a, double rate, Rng* rng) {
  if (!rng || rate <= 0.0) return a;
  std::vector<uint8_t> mask(static_cast<size_t>(tape.value(a).size()));
  for (auto& m : mask) m = rng->next_double() < rate ? 1 : 0;
  return tape.scale(tape.masked_fill(a, std::move(mask), 0.0), 1.0 / (1.0 - rate));
}

}  // namespace

Tape::NodeId localizer_forward_graph(Tape& tape, const BoundParams& bound,
                                     const LocalizerConfig& cfg, const ClipInputs& clip,
                                     Rng* dropout_rng) {
  std::vector<Tape::NodeId> streams;
  if (has_visual(cfg)) {
    if (clip.visual.n_rows != cfg.window_s || clip.visual.n_cols != cfg.d_v)
      throw std::invalid_argument("localizer forward: clip visual shape mismatch");
    Tape::NodeId x = tape.constant(clip.visual);
    if (cfg.use_tsm) x = tape.temporal_shift(x, cfg.shift_fraction);
    x = tape.relu(tape.add(tape.matmul(x, bound.at("visual.proj.w")),
                           bound.at("visual.proj.b")));
    x = maybe_dropout(tape, x, cfg.dropout, dropout_rng);
    streams.push_back(tape.mean(x, 0));
  }
  if (has_text(cfg)) {
    Tape::NodeId pooled;
    if (clip.tokens.empty()) {
      pooled = tape.constant(Tensor(1, cfg.d_t));
    } else {
      for (int id : clip.tokens)
        if (id < 0 || id >= cfg.vocab_size)
          throw std::invalid_argument("localizer forward: token id out of range");
      pooled = tape.mean(tape.embedding_gather(bound.at("text.embed"), clip.tokens), 0);
    }
    Tape::NodeId x = tape.relu(
        tape.add(tape.matmul(pooled, bound.at("text.proj.w")), bound.at("text.proj.b")));
    x = maybe_dropout(tape, x, cfg.dropout, dropout_rng);
    streams.push_back(x);
  }
  Tape::NodeId h = streams.size() == 2 ? tape.concat(streams[0], streams[1], 1)
                                       : streams[0];
  h = tape.relu(tape.add(tape.matmul(h, bound.at("head.l1.w")), bound.at("head.l1.b")));
  h = maybe_dropout(tape, h, cfg.dropout, dropout_rng);
  const Tape::NodeId logit =
      tape.add(tape.matmul(h, bound.at("head.l2.w")), bound.at("head.l2.b"));
  return tape.sigmoid(logit);
}

namespace {

// value = relu(x * w + b) with the same kernel and loop order as the tape ops
Tensor linear_relu(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out(x.n_rows, w.n_cols);
  kernels::matmul(x.data.data(), w.data.data(), out.data.data(), x.n_rows, x.n_cols,
                  w.n_cols, false, false);
  for (int r = 0; r < out.n_rows; ++r)
    for (int c = 0; c < out.n_cols; ++c)
      out.at(r, c) = std::max(out.at(r, c) + b.at(0, c), 0.0);
  return out;
}

Tensor mean_rows(const Tensor& x) {
  Tensor out(1, x.n_cols);
  for (int c = 0; c < x.n_cols; ++c) {
    double s = 0.0;
    for (int r = 0; r < x.n_rows; ++r) s += x.at(r, c);
    out.at(0, c) = s / x.n_rows;
  }
  return out;
}

}  // namespace

double forward_probability(const LocalizerModel& model, const ClipInputs& clip) {
  const LocalizerConfig& cfg = model.config;
  const ParamStore& ps = model.params;
  auto P = [&](const char* name) -> const Tensor& {
    return ps.at(find_param(ps, name)).value;
  };

  std::vector<Tensor> streams;
  if (has_visual(cfg)) {
    if (clip.visual.n_rows != cfg.window_s || clip.visual.n_cols != cfg.d_v)
      throw std::invalid_argument("localizer forward: clip visual shape mismatch");
    Tensor x = clip.visual;
    if (cfg.use_tsm) {
      Tensor shifted(x.n_rows, x.n_cols);
      const int n_shift = static_cast<int>(std::floor(x.n_cols * cfg.shift_fraction));
      kernels::temporal_shift(x.data.data(), shifted.data.data(), x.n_rows, x.n_cols,
                              n_shift, false);
      x = std::move(shifted);
    }
    streams.push_back(mean_rows(linear_relu(x, P("visual.proj.w"), P("visual.proj.b"))));
  }
  if (has_text(cfg)) {
    Tensor pooled(1, cfg.d_t);
    if (!clip.tokens.empty()) {
      const Tensor& embed = P("text.embed");
      for (int c = 0; c < cfg.d_t; ++c) {
        double s = 0.0;
        for (int id : clip.tokens) {
          if (id < 0 || id >= cfg.vocab_size)
            throw std::invalid_argument("localizer forward: token id out of range");
          s += embed.at(id, c);
        }
        pooled.at(0, c) = s / static_cast<double>(clip.tokens.size());
      }
    }
    streams.push_back(linear_relu(pooled, P("text.proj.w"), P("text.proj.b")));
  }

  Tensor h;
  if (streams.size() == 2) {
    h = Tensor(1, streams[0].n_cols + streams[1].n_cols);
    for (int c = 0; c < streams[0].n_cols; ++c) h.at(0, c) = streams[0].at(0, c);
    for (int c = 0; c < streams[1].n_cols; ++c)
      h.at(0, streams[0].n_cols + c) = streams[1].at(0, c);
  } else {
    h = streams[0];
  }
  h = linear_relu(h, P("head.l1.w"), P("head.l1.b"));
  Tensor logit(1, 1);
  kernels::matmul(h.data.data(), P("head.l2.w").data.data(), logit.data.data(), 1,
                  h.n_cols, 1, false, false);
  const double z = logit.at(0, 0) + P("head.l2.b").at(0, 0);
  return 1.0 / (1.0 + std::exp(-z));
}

namespace {

struct Sample {
  ClipInputs clip;
  int label = 0;
};

void collect_samples(const LocalizerModel& model, const Corpus& corpus,
                     const std::map<std::string, Split>& split,
                     const WindowingConfig& wcfg, std::vector<Sample>& train,
                     std::vector<Sample>& val) {
  for (const Video& v : corpus.videos) {
    const auto it = split.find(v.id);
    if (it == split.end() || it->second == Split::test) continue;
    if (v.duration_s < wcfg.window_s) continue;
    std::vector<FrameFeature> scratch;
    const std::vector<FrameFeature>* frames = &v.frames;
    if (has_visual(model.config) && frames->empty() && v.frames_provider.has_value()) {
      scratch = provide(*v.frames_provider, v);
      frames = &scratch;
    }
    const auto windows = enumerate_windows(v.duration_s, wcfg, v.id);
    const auto labeled = label_clips(windows, v.chapters, wcfg);
    std::vector<Sample>& dst = it->second == Split::train ? train : val;
    for (const LabeledClip& lc : labeled)
      dst.push_back(Sample{gather_clip(v, *frames, lc.window.t_a, model.config), lc.label});
  }
}

}  // namespace

LocalizerTrainResult train_localizer(LocalizerModel& model, const Corpus& corpus,
                                     const std::map<std::string, Split>& split,
                                     const WindowingConfig& wcfg,
                                     const LocalizerTrainConfig& tcfg) {
  validate(model.config);
  validate(wcfg);
  if (wcfg.window_s != model.config.window_s)
    throw std::invalid_argument("train_localizer: windowing and model window lengths differ");
  if (tcfg.batch_size < 1 || tcfg.epochs < 1)
    throw std::invalid_argument("train_localizer: batch size and epochs must be >= 1");
  if (tcfg.base_lr < 0 || tcfg.warmup_frac < 0 || tcfg.warmup_frac >= 1)
    throw std::invalid_argument("train_localizer: bad schedule settings");

  std::vector<Sample> train, val;
  collect_samples(model, corpus, split, wcfg, train, val);
  if (train.empty()) throw std::invalid_argument("train_localizer: no training windows");

  std::vector<LabeledClip> label_proxy(train.size());
  for (size_t i = 0; i < train.size(); ++i) label_proxy[i].label = train[i].label;

  int64_t val_positives = 0;
  for (const Sample& s : val) val_positives += s.label;
  const bool has_val = !val.empty() && val_positives > 0;

  const int64_t epoch_len = static_cast<int64_t>(
      oversample(label_proxy, tcfg.target_pos_fraction, fold_seed(tcfg.seed, "epoch:1"))
          .size());
  const int64_t steps_per_epoch = (epoch_len + tcfg.batch_size - 1) / tcfg.batch_size;
  const int64_t total_steps = steps_per_epoch * tcfg.epochs;
  const int64_t warmup_steps = std::min<int64_t>(
      total_steps - 1, std::llround(tcfg.warmup_frac * static_cast<double>(total_steps)));

  LocalizerTrainResult result;
  result.best_val_ap = std::numeric_limits<double>::quiet_NaN();
  std::vector<Tensor> best_params;

  int64_t global_step = 0;
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const std::vector<size_t> order =
        oversample(label_proxy, tcfg.target_pos_fraction,
                   fold_seed(tcfg.seed, "epoch:" + std::to_string(epoch)));
    Rng dropout_rng(fold_seed(tcfg.seed, "dropout:" + std::to_string(epoch)));
    Rng* drng = model.config.dropout > 0 ? &dropout_rng : nullptr;

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(tcfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(tcfg.batch_size));
      Tape tape;
      BoundParams bound = bind_params(tape, model.params);
      Tape::NodeId pcol = -1;
      Tensor labels(static_cast<int>(end - start), 1);
      for (size_t i = start; i < end; ++i) {
        const Sample& s = train[order[i]];
        const Tape::NodeId p =
            localizer_forward_graph(tape, bound, model.config, s.clip, drng);
        pcol = (i == start) ? p : tape.concat(pcol, p, 0);
        labels.at(static_cast<int>(i - start), 0) = s.label;
      }
      const Tape::NodeId loss = tape.binary_cross_entropy(pcol, tape.constant(labels));
      const double loss_value = tape.value(loss).item();
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train_localizer: diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(global_step + 1));
      loss_sum += loss_value * static_cast<double>(end - start);

      tape.backward(loss);
      ++global_step;
      AdamWHyper hyper;
      hyper.lr = lr_schedule(global_step, warmup_steps, total_steps, tcfg.base_lr);
      hyper.weight_decay = tcfg.weight_decay;
      for (size_t i = 0; i < model.params.count(); ++i) {
        if (!tape.has_grad(bound.ids[i])) continue;
        Parameter& param = model.params.at(i);
        adamw_step(param.value, tape.grad(bound.ids[i]), param.opt, hyper);
      }
    }

    LocalizerEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.val_ap = std::numeric_limits<double>::quiet_NaN();
    if (has_val) {
      std::vector<std::pair<double, int>> scored;
      scored.reserve(val.size());
      for (const Sample& s : val)
        scored.emplace_back(forward_probability(model, s.clip), s.label);
      stats.val_ap = average_precision(scored);
      if (result.best_epoch < 0 || stats.val_ap > result.best_val_ap) {
        result.best_epoch = epoch;
        result.best_val_ap = stats.val_ap;
        best_params.clear();
        for (size_t i = 0; i < model.params.count(); ++i)
          best_params.push_back(model.params.at(i).value);
      }
    }
    result.curve.push_back(stats);
    if (has_val && stats.val_ap >= tcfg.early_stop_val_ap) break;
  }

  if (has_val) {
    for (size_t i = 0; i < model.params.count(); ++i)
      model.params.at(i).value = best_params[i];
  } else {
    result.best_epoch = result.curve.empty() ? -1 : result.curve.back().epoch;
  }
  return result;
}

InferResult infer_video(const LocalizerModel& model, const Video& video,
                        const WindowingConfig& wcfg, double threshold) {
  validate(model.config);
  validate(wcfg);
  if (wcfg.window_s != model.config.window_s)
    throw std::invalid_argument("infer_video: windowing and model window lengths differ");
  InferResult result;
  if (video.duration_s < wcfg.window_s) {
    result.too_short = true;
    return result;
  }
  std::vector<FrameFeature> scratch;
  const std::vector<FrameFeature>* frames = &video.frames;
  if (has_visual(model.config) && frames->empty() && video.frames_provider.has_value()) {
    scratch = provide(*video.frames_provider, video);
    frames = &scratch;
  }

  const auto windows = enumerate_windows(video.duration_s, wcfg, video.id);
  std::vector<double> probs(windows.size(), 0.0);
  const auto t0 = std::chrono::steady_clock::now();
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
  for (int64_t i = 0; i < static_cast<int64_t>(windows.size()); ++i) {
    const ClipInputs clip =
        gather_clip(video, *frames, windows[static_cast<size_t>(i)].t_a, model.config);
    probs[static_cast<size_t>(i)] = forward_probability(model, clip);
  }
  result.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  result.clips.reserve(windows.size());
  for (size_t i = 0; i < windows.size(); ++i)
    result.clips.push_back(ClipPrediction{windows[i], probs[i]});
  result.boundaries = localize(result.clips, wcfg, threshold);
  result.frames_processed = static_cast<int64_t>(windows.size()) * wcfg.window_s;
  return result;
}

}  // namespace vidchap
