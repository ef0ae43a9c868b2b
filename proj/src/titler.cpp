#include "vidchap/titler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vidchap/baselines.hpp"
#include "vidchap/features.hpp"

namespace vidchap {

namespace {

const std::array<const char*, 4> kReserved = {"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

Vocab build_vocab(const std::vector<std::vector<std::string>>& texts, size_t max_size) {
  if (max_size != 0 && max_size < kReserved.size() + 1)
    throw std::invalid_argument("build_vocab: max size leaves no room for real tokens");
  std::map<std::string, int64_t> freq;
  for (const auto& text : texts)
    for (const auto& word : text) {
      if (word.empty()) throw std::invalid_argument("build_vocab: empty token");
      bool reserved = false;
      for (const char* r : kReserved) reserved = reserved || word == r;
      if (!reserved) ++freq[word];
    }
  std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (max_size != 0 && ranked.size() > max_size - kReserved.size())
    ranked.resize(max_size - kReserved.size());

  Vocab vocab;
  for (const char* r : kReserved) vocab.id_to_token.emplace_back(r);
  for (const auto& [word, count] : ranked) {
    (void)count;
    vocab.id_to_token.push_back(word);
  }
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i)
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int>(i);
  return vocab;
}

void validate(const TitlerConfig& cfg) {
  if (cfg.n_ctx < 1 || cfg.m < 1 || cfg.p < 1)
    throw std::invalid_argument("titler: context, visual count and dims must be >= 1");
  if (cfg.q < 4) throw std::invalid_argument("titler: model dim must be >= 4");
  if (cfg.n_heads < 1 || cfg.q % cfg.n_heads != 0)
    throw std::invalid_argument("titler: model dim must divide evenly into heads");
  if (cfg.enc_layers < 1 || cfg.dec_layers < 1 || cfg.ffn_dim < 1)
    throw std::invalid_argument("titler: layer counts and ffn dim must be >= 1");
  if (cfg.max_title_len < 0)
    throw std::invalid_argument("titler: max title length must be >= 0");
  if (cfg.vocab_cap != 0 && cfg.vocab_cap < 5)
    throw std::invalid_argument("titler: vocab cap leaves no room for real tokens");
  if (cfg.fusion != "cross" && cfg.fusion != "concat")
    throw std::invalid_argument("titler: fusion must be cross or concat");
}

namespace {

Tensor ones(int rows, int cols) {
  Tensor t(rows, cols);
  std::fill(t.data.begin(), t.data.end(), 1.0);
  return t;
}

void add_attention_params(ParamStore& ps, const std::string& prefix,
                          const TitlerConfig& cfg, int key_dim, Rng& rng) {
  const int dh = cfg.q / cfg.n_heads;
  for (int j = 0; j < cfg.n_heads; ++j) {
    const std::string head = prefix + ".h" + std::to_string(j);
    ps.add(head + ".wq", xavier_uniform(cfg.q, dh, rng));
    ps.add(head + ".wk", xavier_uniform(key_dim, dh, rng));
    ps.add(head + ".wv", xavier_uniform(key_dim, dh, rng));
  }
  ps.add(prefix + ".wo", xavier_uniform(cfg.q, cfg.q, rng));
  ps.add(prefix + ".bo", Tensor(1, cfg.q));
}

void add_ln_params(ParamStore& ps, const std::string& prefix, int dim) {
  ps.add(prefix + ".g", ones(1, dim));
  ps.add(prefix + ".b", Tensor(1, dim));
}

void add_ffn_params(ParamStore& ps, const std::string& prefix, const TitlerConfig& cfg,
                    Rng& rng) {
  ps.add(prefix + ".w1", xavier_uniform(cfg.q, cfg.ffn_dim, rng));
  ps.add(prefix + ".b1", Tensor(1, cfg.ffn_dim));
  ps.add(prefix + ".w2", xavier_uniform(cfg.ffn_dim, cfg.q, rng));
  ps.add(prefix + ".b2", Tensor(1, cfg.q));
}

}  // namespace

TitlerModel init_titler(const TitlerConfig& cfg, Vocab vocab, uint64_t seed) {
  validate(cfg);
  if (vocab.size() < 5)
    throw std::invalid_argument("init_titler: vocabulary has only reserved tokens");
  TitlerModel model;
  model.config = cfg;
  model.vocab = std::move(vocab);
  Rng rng(fold_seed(seed, "titler-init"));
  ParamStore& ps = model.params;

  ps.add("embed", xavier_uniform(model.vocab.size(), cfg.q, rng));
  for (int i = 0; i < cfg.enc_layers; ++i) {
    const std::string L = "enc" + std::to_string(i);
    add_attention_params(ps, L + ".attn", cfg, cfg.q, rng);
    add_ln_params(ps, L + ".ln1", cfg.q);
    add_ffn_params(ps, L + ".ffn", cfg, rng);
    add_ln_params(ps, L + ".ln2", cfg.q);
  }
  if (cfg.fusion == "cross") {
    ps.add("fuse.wq", xavier_uniform(cfg.q, cfg.q, rng));
    ps.add("fuse.wk", xavier_uniform(cfg.p, cfg.q, rng));
    ps.add("fuse.wv", xavier_uniform(cfg.p, cfg.q, rng));
  } else {
    ps.add("fuse.mlp.w1", xavier_uniform(cfg.q + cfg.p, cfg.q, rng));
    ps.add("fuse.mlp.b1", Tensor(1, cfg.q));
    ps.add("fuse.mlp.w2", xavier_uniform(cfg.q, cfg.q, rng));
    ps.add("fuse.mlp.b2", Tensor(1, cfg.q));
  }
  for (int i = 0; i < cfg.dec_layers; ++i) {
    const std::string L = "dec" + std::to_string(i);
    add_attention_params(ps, L + ".self", cfg, cfg.q, rng);
    add_ln_params(ps, L + ".ln1", cfg.q);
    add_attention_params(ps, L + ".cross", cfg, cfg.q, rng);
    add_ln_params(ps, L + ".ln2", cfg.q);
    add_ffn_params(ps, L + ".ffn", cfg, rng);
    add_ln_params(ps, L + ".ln3", cfg.q);
  }
  ps.add("out.w", xavier_uniform(cfg.q, model.vocab.size(), rng));
  ps.add("out.b", Tensor(1, model.vocab.size()));
  return model;
}

Tensor sinusoidal_positions(int len, int dim) {
  if (len < 1 || dim < 1)
    throw std::invalid_argument("sinusoidal_positions: len and dim must be >= 1");
  Tensor pe(len, dim);
  for (int pos = 0; pos < len; ++pos)
    for (int i = 0; i < dim; ++i) {
      const double angle =
          pos / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / dim);
      pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

Tape::NodeId fuse_graph(Tape& tape, Tape::NodeId u, Tape::NodeId r, Tape::NodeId wq,
                        Tape::NodeId wk, Tape::NodeId wv, bool scaled) {
  const Tape::NodeId q = tape.matmul(u, wq);
  const Tape::NodeId k = tape.matmul(r, wk);
  const Tape::NodeId v = tape.matmul(r, wv);
  Tape::NodeId scores = tape.matmul(q, k, false, true);
  if (scaled)
    scores = tape.scale(scores, 1.0 / std::sqrt(static_cast<double>(tape.value(wq).n_cols)));
  return tape.add(tape.matmul(tape.softmax_rows(scores), v), u);
}

Tape::NodeId fuse_concat_graph(Tape& tape, Tape::NodeId u, Tape::NodeId r,
                               Tape::NodeId w1, Tape::NodeId b1, Tape::NodeId w2,
                               Tape::NodeId b2) {
  const Tensor& uv = tape.value(u);
  const Tape::NodeId pooled = tape.mean(r, 0);
  const Tape::NodeId rep = tape.matmul(tape.constant(ones(uv.n_rows, 1)), pooled);
  const Tape::NodeId joint = tape.concat(u, rep, 1);
  const Tape::NodeId h = tape.relu(tape.add(tape.matmul(joint, w1), b1));
  return tape.add(tape.add(tape.matmul(h, w2), b2), u);
}

Tensor fuse(const Tensor& u, const Tensor& r, const Tensor& wq, const Tensor& wk,
            const Tensor& wv, bool scaled) {
  Tape tape;
  const Tape::NodeId out =
      fuse_graph(tape, tape.constant(u), tape.constant(r), tape.constant(wq),
                 tape.constant(wk), tape.constant(wv), scaled);
  return tape.value(out);
}

namespace {

constexpr double kNegInf = -1e30;

// Standard multi-head attention with per-head projection matrices; heads are
// concatenated and mixed by wo. Causal masking fills strictly-upper entries.
Tape::NodeId attention(Tape& tape, const BoundParams& bound, const TitlerConfig& cfg,
                       const std::string& prefix, Tape::NodeId x, Tape::NodeId memory,
                       bool causal) {
  const int dh = cfg.q / cfg.n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const int x_len = tape.value(x).n_rows;
  const int mem_len = tape.value(memory).n_rows;

  Tape::NodeId heads = -1;
  for (int j = 0; j < cfg.n_heads; ++j) {
    const std::string head = prefix + ".h" + std::to_string(j);
    const Tape::NodeId q = tape.matmul(x, bound.at(head + ".wq"));
    const Tape::NodeId k = tape.matmul(memory, bound.at(head + ".wk"));
    const Tape::NodeId v = tape.matmul(memory, bound.at(head + ".wv"));
    Tape::NodeId scores = tape.scale(tape.matmul(q, k, false, true), inv_sqrt_dh);
    if (causal) {
      std::vector<uint8_t> mask(static_cast<size_t>(x_len) * mem_len, 0);
      for (int r = 0; r < x_len; ++r)
        for (int c = r + 1; c < mem_len; ++c)
          mask[static_cast<size_t>(r) * mem_len + c] = 1;
      scores = tape.masked_fill(scores, std::move(mask), kNegInf);
    }
    const Tape::NodeId out = tape.matmul(tape.softmax_rows(scores), v);
    heads = (j == 0) ? out : tape.concat(heads, out, 1);
  }
  return tape.add(tape.matmul(heads, bound.at(prefix + ".wo")), bound.at(prefix + ".bo"));
}

Tape::NodeId post_ln(Tape& tape, const BoundParams& bound, const std::string& prefix,
                     Tape::NodeId x, Tape::NodeId sublayer) {
  return tape.layer_norm(tape.add(x, sublayer), bound.at(prefix + ".g"),
                         bound.at(prefix + ".b"));
}

Tape::NodeId ffn(Tape& tape, const BoundParams& bound, const std::string& prefix,
                 Tape::NodeId x) {
  const Tape::NodeId h =
      tape.relu(tape.add(tape.matmul(x, bound.at(prefix + ".w1")), bound.at(prefix + ".b1")));
  return tape.add(tape.matmul(h, bound.at(prefix + ".w2")), bound.at(prefix + ".b2"));
}

Tape::NodeId embed_with_positions(Tape& tape, const BoundParams& bound,
                                  const TitlerConfig& cfg, const std::vector<int>& ids) {
  const Tape::NodeId emb = tape.embedding_gather(bound.at("embed"), ids);
  return tape.add(emb, tape.constant(sinusoidal_positions(static_cast<int>(ids.size()),
                                                          cfg.q)));
}

}  // namespace

Tape::NodeId titler_encode_graph(Tape& tape, const BoundParams& bound,
                                 const TitlerConfig& cfg, const std::vector<int>& ctx_ids,
                                 const Tensor& visual) {
  if (ctx_ids.empty()) throw std::invalid_argument("titler encode: empty context");
  if (static_cast<int>(ctx_ids.size()) > cfg.n_ctx)
    throw std::invalid_argument("titler encode: context exceeds n_ctx");
  if (visual.n_rows != cfg.m || visual.n_cols != cfg.p)
    throw std::invalid_argument("titler encode: visual shape mismatch");

  Tape::NodeId x = embed_with_positions(tape, bound, cfg, ctx_ids);
  for (int i = 0; i < cfg.enc_layers; ++i) {
    const std::string L = "enc" + std::to_string(i);
    x = post_ln(tape, bound, L + ".ln1", x, attention(tape, bound, cfg, L + ".attn", x, x, false));
    x = post_ln(tape, bound, L + ".ln2", x, ffn(tape, bound, L + ".ffn", x));
  }
  const Tape::NodeId r = tape.constant(visual);
  if (cfg.fusion == "cross")
    return fuse_graph(tape, x, r, bound.at("fuse.wq"), bound.at("fuse.wk"),
                      bound.at("fuse.wv"), cfg.scaled_fusion);
  return fuse_concat_graph(tape, x, r, bound.at("fuse.mlp.w1"), bound.at("fuse.mlp.b1"),
                           bound.at("fuse.mlp.w2"), bound.at("fuse.mlp.b2"));
}

Tape::NodeId titler_decode_graph(Tape& tape, const BoundParams& bound,
                                 const TitlerConfig& cfg, Tape::NodeId memory,
                                 const std::vector<int>& dec_ids) {
  if (dec_ids.empty()) throw std::invalid_argument("titler decode: empty input");
  Tape::NodeId y = embed_with_positions(tape, bound, cfg, dec_ids);
  for (int i = 0; i < cfg.dec_layers; ++i) {
    const std::string L = "dec" + std::to_string(i);
    y = post_ln(tape, bound, L + ".ln1", y, attention(tape, bound, cfg, L + ".self", y, y, true));
    y = post_ln(tape, bound, L + ".ln2", y,
                attention(tape, bound, cfg, L + ".cross", y, memory, false));
    y = post_ln(tape, bound, L + ".ln3", y, ffn(tape, bound, L + ".ffn", y));
  }
  return tape.add(tape.matmul(y, bound.at("out.w")), bound.at("out.b"));
}

Tape::NodeId titler_logits_graph(Tape& tape, const BoundParams& bound,
                                 const TitlerConfig& cfg, const std::vector<int>& ctx_ids,
                                 const Tensor& visual, const std::vector<int>& dec_ids) {
  return titler_decode_graph(tape, bound, cfg,
                             titler_encode_graph(tape, bound, cfg, ctx_ids, visual),
                             dec_ids);
}

namespace {

std::vector<int> words_to_ctx(const Vocab& vocab, const std::vector<std::string>& words,
                              int n_ctx) {
  std::vector<int> ids;
  for (const std::string& w : words) {
    if (static_cast<int>(ids.size()) >= n_ctx) break;
    ids.push_back(vocab.id_of(w));
  }
  if (ids.empty()) ids.push_back(Vocab::kUnk);  // a chapter may have no narration
  return ids;
}

// frames with begin <= t < end, in time order
std::vector<FrameFeature> span_frames(const std::vector<FrameFeature>& frames,
                                      int begin_s, int end_s) {
  std::vector<FrameFeature> out;
  for (const FrameFeature& f : frames)
    if (f.time_s >= begin_s && f.time_s < end_s) out.push_back(f);
  std::sort(out.begin(), out.end(),
            [](const FrameFeature& a, const FrameFeature& b) { return a.time_s < b.time_s; });
  return out;
}

}  // namespace

std::vector<ChapterSample> build_chapter_samples(
    const TitlerModel& model, const Corpus& corpus,
    const std::map<std::string, Split>& split, Split which, const std::string& source,
    const std::map<std::string, std::vector<BoundaryPrediction>>& boundaries) {
  if (source != "gt" && source != "predicted")
    throw std::invalid_argument("build_chapter_samples: source must be gt or predicted");
  const TitlerConfig& cfg = model.config;

  std::vector<ChapterSample> samples;
  for (const Video& v : corpus.videos) {
    const auto it = split.find(v.id);
    if (it == split.end() || it->second != which) continue;
    if (v.chapters.empty()) continue;  // nothing to learn a title from

    std::vector<int> begins;
    if (source == "gt") {
      for (const Chapter& ch : v.chapters) begins.push_back(ch.begin_s);
    } else {
      const auto bit = boundaries.find(v.id);
      if (bit == boundaries.end() || bit->second.empty()) continue;
      for (const BoundaryPrediction& b : bit->second) begins.push_back(b.begin_s);
      std::sort(begins.begin(), begins.end());
    }

    std::vector<FrameFeature> scratch;
    const std::vector<FrameFeature>* frames = &v.frames;
    if (frames->empty() && v.frames_provider.has_value()) {
      scratch = provide(*v.frames_provider, v);
      frames = &scratch;
    }
    if (!frames->empty() && static_cast<int>(frames->front().values.size()) != cfg.p)
      throw std::invalid_argument("build_chapter_samples: frame dim differs from config p");

    for (size_t i = 0; i < begins.size(); ++i) {
      const int begin = begins[i];
      const int end = (i + 1 < begins.size()) ? begins[i + 1] : v.duration_s;
      ChapterSample s;
      s.video_id = v.id;
      s.begin_s = begin;
      s.ctx = words_to_ctx(model.vocab, narration_span_words(v, begin, end), cfg.n_ctx);

      const std::vector<std::string>* title_words = nullptr;
      if (source == "gt") {
        title_words = &v.chapters[i].title;
      } else {
        // pair the predicted span with the nearest true begin's title
        size_t best = 0;
        int best_dist = std::numeric_limits<int>::max();
        for (size_t c = 0; c < v.chapters.size(); ++c) {
          const int dist = std::abs(v.chapters[c].begin_s - begin);
          if (dist < best_dist) {
            best_dist = dist;
            best = c;
          }
        }
        title_words = &v.chapters[best].title;
      }
      for (const std::string& w : *title_words) {
        if (static_cast<int>(s.title.size()) >= cfg.max_title_len) break;
        s.title.push_back(model.vocab.id_of(w));
        s.title_words.push_back(w);
      }

      const std::vector<FrameFeature> in_span = span_frames(*frames, begin, end);
      s.visual = in_span.empty() ? Tensor(cfg.m, cfg.p)
                                 : pool_chapter_visual(in_span, cfg.m);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

namespace {

double train_set_rouge1(const TitlerModel& model, const std::vector<ChapterSample>& samples) {
  double sum = 0.0;
  int64_t counted = 0;
  for (const ChapterSample& s : samples) {
    if (s.title_words.empty()) continue;
    const std::vector<std::string> got =
        ids_to_words(model.vocab, generate_ids(model, s.ctx, s.visual));
    sum += rouge_n(got, s.title_words, 1).f1;
    ++counted;
  }
  return counted == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : sum / static_cast<double>(counted);
}

}  // namespace

TitlerTrainResult train_titler(TitlerModel& model,
                               const std::vector<ChapterSample>& samples,
                               const TitlerTrainConfig& tcfg) {
  validate(model.config);
  if (model.vocab.size() < 5)
    throw std::invalid_argument("train_titler: vocabulary has only reserved tokens");
  if (samples.empty()) throw std::invalid_argument("train_titler: no training pairs");
  if (tcfg.batch_size < 1 || tcfg.epochs < 1 || tcfg.rouge_check_every < 1)
    throw std::invalid_argument("train_titler: batch, epochs and probe period must be >= 1");
  if (tcfg.base_lr < 0 || tcfg.warmup_frac < 0 || tcfg.warmup_frac >= 1)
    throw std::invalid_argument("train_titler: bad schedule settings");
  const TitlerConfig& cfg = model.config;
  for (const ChapterSample& s : samples) {
    if (s.ctx.empty() || static_cast<int>(s.ctx.size()) > cfg.n_ctx)
      throw std::invalid_argument("train_titler: bad context length in sample");
    for (int id : s.ctx)
      if (id < 0 || id >= model.vocab.size())
        throw std::invalid_argument("train_titler: context id out of range");
    for (int id : s.title)
      if (id < 0 || id >= model.vocab.size())
        throw std::invalid_argument("train_titler: title id out of range");
    if (s.visual.n_rows != cfg.m || s.visual.n_cols != cfg.p)
      throw std::invalid_argument("train_titler: visual shape mismatch in sample");
  }

  const int64_t steps_per_epoch =
      (static_cast<int64_t>(samples.size()) + tcfg.batch_size - 1) / tcfg.batch_size;
  const int64_t total_steps = steps_per_epoch * tcfg.epochs;
  const int64_t warmup_steps = std::min<int64_t>(
      total_steps - 1, std::llround(tcfg.warmup_frac * static_cast<double>(total_steps)));
  const bool probing = tcfg.early_stop_rouge1 <= 1.0;

  TitlerTrainResult result;
  result.final_train_rouge1 = std::numeric_limits<double>::quiet_NaN();

  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int64_t global_step = 0;
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    Rng shuffle_rng(fold_seed(tcfg.seed, "epoch:" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t token_count = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(tcfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(tcfg.batch_size));
      Tape tape;
      BoundParams bound = bind_params(tape, model.params);
      Tape::NodeId logits = -1;
      std::vector<int> targets;
      for (size_t i = start; i < end; ++i) {
        const ChapterSample& s = samples[order[i]];
        std::vector<int> dec_input;
        dec_input.push_back(Vocab::kBos);
        dec_input.insert(dec_input.end(), s.title.begin(), s.title.end());
        const Tape::NodeId sample_logits =
            titler_logits_graph(tape, bound, cfg, s.ctx, s.visual, dec_input);
        logits = (i == start) ? sample_logits : tape.concat(logits, sample_logits, 0);
        targets.insert(targets.end(), s.title.begin(), s.title.end());
        targets.push_back(Vocab::kEos);
      }
      const int64_t batch_tokens = static_cast<int64_t>(targets.size());
      const Tape::NodeId loss = tape.cross_entropy_logits(logits, std::move(targets));
      const double loss_value = tape.value(loss).item();
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train_titler: diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(global_step + 1));
      loss_sum += loss_value * static_cast<double>(batch_tokens);
      token_count += batch_tokens;

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

    TitlerEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(token_count);
    stats.train_rouge1 = std::numeric_limits<double>::quiet_NaN();
    const bool probe_now =
        probing && (epoch % tcfg.rouge_check_every == 0 || epoch == tcfg.epochs);
    if (probe_now) {
      stats.train_rouge1 = train_set_rouge1(model, samples);
      result.final_train_rouge1 = stats.train_rouge1;
    }
    result.curve.push_back(stats);
    if (probe_now && stats.train_rouge1 >= tcfg.early_stop_rouge1) break;
  }
  return result;
}

std::vector<int> generate_ids(const TitlerModel& model, const std::vector<int>& ctx_ids,
                              const Tensor& visual, int max_len) {
  const TitlerConfig& cfg = model.config;
  if (max_len < 0) max_len = cfg.max_title_len;
  std::vector<int> ctx = ctx_ids;
  if (ctx.empty()) ctx.push_back(Vocab::kUnk);
  for (int id : ctx)
    if (id < 0 || id >= model.vocab.size())
      throw std::invalid_argument("generate: context id out of range");

  // encode once, then re-run only the decoder per step
  Tensor memory;
  {
    Tape tape;
    BoundParams bound = bind_params(tape, model.params);
    memory = tape.value(titler_encode_graph(tape, bound, cfg, ctx, visual));
  }

  std::vector<int> out;
  std::vector<int> dec_ids{Vocab::kBos};
  for (int step = 0; step < max_len; ++step) {
    Tape tape;
    BoundParams bound = bind_params(tape, model.params);
    const Tape::NodeId logits =
        titler_decode_graph(tape, bound, cfg, tape.constant(memory), dec_ids);
    const Tensor& lg = tape.value(logits);
    const int last = lg.n_rows - 1;
    int best = -1;
    double best_score = 0.0;
    for (int c = 0; c < lg.n_cols; ++c) {
      if (c == Vocab::kPad || c == Vocab::kBos) continue;  // never emitted
      if (best < 0 || lg.at(last, c) > best_score) {  // ties keep the lowest id
        best = c;
        best_score = lg.at(last, c);
      }
    }
    if (best == Vocab::kEos) break;
    out.push_back(best);
    dec_ids.push_back(best);
  }
  return out;
}

std::vector<std::string> generate(const TitlerModel& model,
                                  const std::vector<std::string>& narration_words,
                                  const Tensor& visual, int max_len) {
  return ids_to_words(model.vocab,
                      generate_ids(model, words_to_ctx(model.vocab, narration_words,
                                                       model.config.n_ctx),
                                   visual, max_len));
}

std::vector<std::string> ids_to_words(const Vocab& vocab, const std::vector<int>& ids) {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= vocab.size())
      throw std::invalid_argument("ids_to_words: id out of range");
    words.push_back(vocab.token_of(id));
  }
  return words;
}

}  // namespace vidchap
