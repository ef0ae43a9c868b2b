#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidchap/autodiff.hpp"
#include "vidchap/corpus.hpp"
#include "vidchap/localizer.hpp"
#include "vidchap/metrics.hpp"

namespace vidchap {

// Whole-word vocabulary with reserved control ids. Construction is
// deterministic: tokens ordered by descending frequency, ties lexicographic.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_token;  // starts with the four reserved tokens
  std::map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id_of(const std::string& word) const {
    const auto it = token_to_id.find(word);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  const std::string& token_of(int id) const { return id_to_token.at(static_cast<size_t>(id)); }
};

// max_size 0 keeps every token; otherwise the most frequent (max_size - 4)
// tokens survive.
Vocab build_vocab(const std::vector<std::vector<std::string>>& texts, size_t max_size = 0);

struct TitlerConfig {
  int n_ctx = 512;       // narration tokens fed to the encoder
  int m = 10;            // visual embeddings per chapter
  int p = 8;             // visual embedding dim
  int q = 32;            // model dim
  int n_heads = 2;
  int enc_layers = 1;
  int dec_layers = 1;
  int ffn_dim = 64;
  int max_title_len = 30;
  int vocab_cap = 0;              // build_vocab limit when training; 0 = unlimited
  bool scaled_fusion = false;     // fusion softmax temperature 1 by default
  std::string fusion = "cross";   // cross | concat
};

void validate(const TitlerConfig& cfg);

struct TitlerModel {
  TitlerConfig config;
  Vocab vocab;
  ParamStore params;
};

TitlerModel init_titler(const TitlerConfig& cfg, Vocab vocab, uint64_t seed);

// Fixed sinusoidal position table, len x dim.
Tensor sinusoidal_positions(int len, int dim);

// Cross-attention fusion: Q = U Wq, K = R Wk, V = R Wv, attention
// softmax(Q K^T / tau) with tau = 1 (or sqrt(q) when scaled), output A V + U.
Tape::NodeId fuse_graph(Tape& tape, Tape::NodeId u, Tape::NodeId r, Tape::NodeId wq,
                        Tape::NodeId wk, Tape::NodeId wv, bool scaled);

// Concat fusion baseline: mean-pool R, append the pooled vector to every text
// row, run a two-layer MLP back to q dims, add U.
Tape::NodeId fuse_concat_graph(Tape& tape, Tape::NodeId u, Tape::NodeId r,
                               Tape::NodeId w1, Tape::NodeId b1, Tape::NodeId w2,
                               Tape::NodeId b2);

// Value-level convenience wrapper over fuse_graph.
Tensor fuse(const Tensor& u, const Tensor& r, const Tensor& wq, const Tensor& wk,
            const Tensor& wv, bool scaled = false);

// Encoder + fusion: narration ids and pooled visuals to the fused memory U'.
Tape::NodeId titler_encode_graph(Tape& tape, const BoundParams& bound,
                                 const TitlerConfig& cfg, const std::vector<int>& ctx_ids,
                                 const Tensor& visual);

// Decoder over the fused memory; returns len x V logits.
Tape::NodeId titler_decode_graph(Tape& tape, const BoundParams& bound,
                                 const TitlerConfig& cfg, Tape::NodeId memory,
                                 const std::vector<int>& dec_ids);

Tape::NodeId titler_logits_graph(Tape& tape, const BoundParams& bound,
                                 const TitlerConfig& cfg, const std::vector<int>& ctx_ids,
                                 const Tensor& visual, const std::vector<int>& dec_ids);

// One teacher-forcing pair: encoder context, pooled visuals, target title.
struct ChapterSample {
  std::string video_id;
  int begin_s = 0;
  std::vector<int> ctx;              // vocab ids, truncated to n_ctx, never empty
  Tensor visual;                     // m x p
  std::vector<int> title;            // vocab ids, truncated to max_title_len
  std::vector<std::string> title_words;
};

// Builds training/eval pairs for one split. source "gt" uses ground-truth
// chapters; "predicted" spans come from the boundary map, each paired with
// the nearest ground-truth begin's title.
std::vector<ChapterSample> build_chapter_samples(
    const TitlerModel& model, const Corpus& corpus,
    const std::map<std::string, Split>& split, Split which, const std::string& source,
    const std::map<std::string, std::vector<BoundaryPrediction>>& boundaries);

struct TitlerTrainConfig {
  int batch_size = 8;
  double base_lr = 3e-3;
  double weight_decay = 0.01;
  double warmup_frac = 0.05;
  int epochs = 50;
  uint64_t seed = 1;
  double early_stop_rouge1 = 2.0;  // stop once train ROUGE-1 F1 reaches this; >1 disables
  int rouge_check_every = 10;      // epochs between train-ROUGE probes
};

struct TitlerEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_rouge1 = 0.0;  // NaN when not probed this epoch
};

struct TitlerTrainResult {
  std::vector<TitlerEpochStats> curve;
  double final_train_rouge1 = 0.0;  // NaN when never probed
};

// Teacher-forced next-token cross-entropy with AdamW and warmup+cosine;
// deterministic under seed, errors on divergence or an all-reserved vocab.
TitlerTrainResult train_titler(TitlerModel& model,
                               const std::vector<ChapterSample>& samples,
                               const TitlerTrainConfig& tcfg);

// Greedy decode: argmax per step (ties to the lowest id), pad/bos never
// emitted, stops at eos or max_len. max_len < 0 uses the config value.
std::vector<int> generate_ids(const TitlerModel& model, const std::vector<int>& ctx_ids,
                              const Tensor& visual, int max_len = -1);
std::vector<std::string> generate(const TitlerModel& model,
                                  const std::vector<std::string>& narration_words,
                                  const Tensor& visual, int max_len = -1);

// Title words for a decoded id sequence; unknown ids render as "<unk>".
std::vector<std::string> ids_to_words(const Vocab& vocab, const std::vector<int>& ids);

}  // namespace vidchap
