#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidchap/corpus.hpp"
#include "vidchap/localizer.hpp"
#include "vidchap/metrics.hpp"
#include "vidchap/titler.hpp"
#include "vidchap/windowing.hpp"

namespace vidchap {

inline constexpr const char* kArtifactVersion = "0.1.0";

// One structured configuration for every pipeline stage. The global seed fans
// out into the stage configs; the localizer window length mirrors the
// windowing block so there is a single source of truth for k.
struct RunConfig {
  uint64_t seed = 1;
  WindowingConfig windowing;
  LocalizerConfig localizer;
  LocalizerTrainConfig localizer_train;
  TitlerConfig titler;
  TitlerTrainConfig titler_train;
  SplitFractions split;
  SynthSpec synth;
  double eval_threshold = 0.5;
  bool matched_recall = false;
  bool baseline_stride_one = false;
  std::vector<int> sweep_window_sizes{8, 16, 32};
  std::vector<int> sweep_tsm{1, 0};
  std::vector<std::string> sweep_modalities{"visual", "text", "visual+text"};
};

// Parses and validates a config document; unknown keys anywhere are an error.
// Missing keys take the defaults above. The canonical echo round-trips:
// run_config_to_json(run_config_from_json(doc)) parses to the same echo.
RunConfig run_config_from_json(const nlohmann::ordered_json& doc);
RunConfig load_run_config(const std::string& path);

// Canonical echo of the effective configuration, in parser key order.
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

// 16 hex digits over the canonical echo; identical effective configs hash
// identically whether fields were explicit or defaulted.
std::string config_hash(const RunConfig& cfg);

// {artifact_version, seed, config_hash, config} — embedded in every JSON
// output and written as a .meta.json sibling next to JSONL/CSV/binary ones.
nlohmann::ordered_json meta_block(const RunConfig& cfg);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// payload keys follow the meta block at the top level
void write_json_with_meta(const std::string& path, const RunConfig& cfg,
                          const nlohmann::ordered_json& payload);
void write_meta_sibling(const std::string& path, const RunConfig& cfg);

// Predicted boundaries, one line per video ({video_id, boundaries:[...]}) so
// a processed video with zero boundaries stays distinguishable from a missing
// one. Lines are ordered by video id.
void save_boundaries(const std::string& path,
                     const std::map<std::string, std::vector<BoundaryPrediction>>& boundaries);
std::map<std::string, std::vector<BoundaryPrediction>> load_boundaries(const std::string& path);

// Generated or baseline chapter titles, one line per video:
// {video_id, source: gt|predicted, method, chapters:[{begin_s,title:[words]}]}.
struct ChapterFile {
  std::string source;  // which boundaries the spans came from
  std::string method;  // gt | model | random | lead | principal
  std::map<std::string, std::vector<GeneratedChapter>> titles;
};
void save_generated_chapters(const std::string& path, const ChapterFile& file);
ChapterFile load_generated_chapters(const std::string& path);

// Per-window classifier scores with labels, for clip-level AP:
// {video_id, clips:[{t_a,p,label}]}.
using ClipScoreMap = std::map<std::string, std::vector<std::pair<double, int>>>;
void save_clip_scores(const std::string& path, const ClipScoreMap& scores);
ClipScoreMap load_clip_scores(const std::string& path);

void save_split_assignment(const std::string& path, const RunConfig& cfg,
                           const std::map<std::string, Split>& assignment);
std::map<std::string, Split> load_split_assignment(const std::string& path);

// Model artifacts: <prefix>.ckpt holds the parameters, <prefix>.json the
// architecture (and vocabulary for the titler) plus the training curve.
void save_localizer(const std::string& prefix, const RunConfig& cfg,
                    const LocalizerModel& model, const LocalizerTrainResult* result);
LocalizerModel load_localizer(const std::string& prefix);
void save_titler(const std::string& prefix, const RunConfig& cfg, const TitlerModel& model,
                 const TitlerTrainResult* result);
TitlerModel load_titler(const std::string& prefix);

nlohmann::ordered_json stats_to_json(const StatsReport& report);

}  // namespace vidchap
