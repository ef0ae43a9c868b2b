#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidchap/report.hpp"

namespace vidchap {

// Canonical artifact names inside an output directory; every command reads
// and writes through these so stages chain without extra flags.
struct OutPaths {
  std::string dir;

  explicit OutPaths(std::string d) : dir(std::move(d)) {}
  std::string corpus() const { return dir + "/corpus.jsonl"; }
  std::string rejections() const { return dir + "/rejections.json"; }
  std::string stats() const { return dir + "/stats.json"; }
  std::string splits() const { return dir + "/splits.json"; }
  std::string localizer_prefix() const { return dir + "/localizer"; }
  std::string titler_prefix() const { return dir + "/titler"; }
  std::string boundaries() const { return dir + "/boundaries.jsonl"; }
  std::string clip_scores() const { return dir + "/clip_scores.jsonl"; }
  std::string chapters() const { return dir + "/chapters.jsonl"; }
  std::string eval_json() const { return dir + "/eval.json"; }
  std::string eval_csv() const { return dir + "/eval.csv"; }
  std::string sweep_csv() const { return dir + "/sweep.csv"; }
  std::string gradcheck() const { return dir + "/gradcheck.json"; }
};

void ensure_out_dir(const std::string& dir);

// Synthesizes a corpus from cfg.synth into <out>/corpus.jsonl.
void run_synth(const RunConfig& cfg, const std::string& out_dir);

// Ingests raw descriptions (JSONL: {id, duration_s, description, difficulty?,
// narration?, frames?}), parses chapter lines, applies the quality filters,
// writes the kept corpus plus a rejection report.
struct IngestResult {
  int64_t read = 0;
  int64_t parse_failed = 0;
  int64_t filtered = 0;
  int64_t kept = 0;
};
IngestResult run_ingest(const RunConfig& cfg, const std::string& descriptions_path,
                        const std::string& out_dir);

void run_stats(const RunConfig& cfg, const std::string& corpus_path,
               const std::string& out_dir);

void run_split(const RunConfig& cfg, const std::string& corpus_path,
               const std::string& out_dir);

LocalizerTrainResult run_train_localizer(const RunConfig& cfg, const std::string& corpus_path,
                                         const std::string& splits_path,
                                         const std::string& out_dir);

// Runs inference over every video of one split ("all" for the whole corpus):
// boundary predictions plus labeled per-window scores for clip-level AP.
void run_localize(const RunConfig& cfg, const std::string& corpus_path,
                  const std::string& splits_path, const std::string& localizer_prefix,
                  const std::string& split_name, const std::string& out_dir);

// source "gt" trains on ground-truth spans; "predicted" trains on the spans
// in boundaries_path, each paired with the nearest true chapter's title.
TitlerTrainResult run_train_titler(const RunConfig& cfg, const std::string& corpus_path,
                                   const std::string& splits_path, const std::string& source,
                                   const std::string& boundaries_path,
                                   const std::string& out_dir);

void run_generate(const RunConfig& cfg, const std::string& corpus_path,
                  const std::string& splits_path, const std::string& titler_prefix,
                  const std::string& source, const std::string& boundaries_path,
                  const std::string& split_name, const std::string& out_dir);

// method: random | lead | principal.
void run_baseline(const RunConfig& cfg, const std::string& corpus_path,
                  const std::string& splits_path, const std::string& method,
                  const std::string& source, const std::string& boundaries_path,
                  const std::string& split_name, const std::string& out_dir);

// boundaries_mode "gt" ignores boundaries_path; clip_scores_path may be empty
// (the report then omits AP).
EvalReport run_evaluate(const RunConfig& cfg, const std::string& corpus_path,
                        const std::string& splits_path, const std::string& chapters_path,
                        const std::string& boundaries_path,
                        const std::string& clip_scores_path, const std::string& split_name,
                        const std::string& subset, const std::string& boundaries_mode,
                        const std::string& out_dir);

// Cartesian grid over {window size} x {tsm} x {modality}; trains each cell's
// localizer and writes one CSV row with validation AP and recall.
void run_sweep(const RunConfig& cfg, const std::string& corpus_path,
               const std::string& splits_path, const std::string& out_dir);

struct GradCheckResult {
  std::vector<std::pair<std::string, double>> checks;  // name, max relative error
  double worst = 0.0;
  bool ok = false;
};
GradCheckResult run_gradcheck(const RunConfig& cfg, const std::string& out_dir);

}  // namespace vidchap
