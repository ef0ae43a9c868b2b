#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vidchap/features.hpp"

namespace vidchap {

struct NarrationToken {
  int time_s = 0;
  std::string word;  // lowercase, no whitespace
};

struct Chapter {
  int begin_s = 0;
  std::vector<std::string> title;  // tokenized words
};

enum class Difficulty { easy, hard, ambiguous };

std::string to_string(Difficulty d);
Difficulty difficulty_from_string(const std::string& s);

struct Video {
  std::string id;
  int duration_s = 0;
  Difficulty difficulty = Difficulty::easy;
  std::vector<NarrationToken> narration;        // sorted by time_s
  std::vector<Chapter> chapters;                // sorted by begin_s, strictly increasing
  std::vector<FrameFeature> frames;             // inline features (may be empty)
  std::optional<FeatureProviderSpec> frames_provider;  // lazy alternative
};

enum class Split { train, validation, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Corpus {
  std::vector<Video> videos;
  std::map<std::string, Split> split_assignment;  // video id -> split
};

// Lowercases, maps every non-alphanumeric byte to a space, splits on runs of
// whitespace. May return an empty list.
std::vector<std::string> tokenize(const std::string& text);

enum class ParseFailure { too_few, non_monotone, out_of_range };

std::string to_string(ParseFailure f);

struct ParseResult {
  std::vector<Chapter> chapters;
  std::optional<ParseFailure> failure;
  bool ok() const { return !failure.has_value(); }
};

// Extracts chapters from description text. A chapter line is
// `[H:]MM:SS<whitespace>title` at line start (leading whitespace allowed):
// two-field form takes any minute value with a two-digit 0-59 second field,
// three-field form requires 0-59 minutes. Other lines, and timestamp lines
// whose title tokenizes to nothing, are ignored. Fails when fewer than two
// chapter lines remain, times are not strictly increasing in line order, or
// any time reaches the video duration.
ParseResult parse_description(const std::string& text, int duration_s);

struct Rejection {
  std::string id;
  std::string reason;  // "too-short" | "too-long" | "short-chapter"
};

struct FilterResult {
  std::vector<Video> kept;
  std::vector<Rejection> rejected;
};

// Quality gate: drops videos shorter than 100 s, longer than 1800 s, or with
// any chapter gap (consecutive begins, plus last begin to video end) under 8 s.
FilterResult apply_filters(std::vector<Video> videos);

struct CategoryStats {
  int64_t video_count = 0;
  int64_t chapter_count = 0;
  double mean_chapter_duration_s = 0.0;  // gap to next begin, last one to video end
  double mean_chapter_count = 0.0;       // chapters per video
  double mean_title_len = 0.0;           // words per title
};

struct StatsReport {
  std::map<std::string, CategoryStats> per_difficulty;  // only categories present
  CategoryStats total;
};

StatsReport compute_stats(const Corpus& corpus);  // empty corpus -> error

struct SplitFractions {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
};

// Deterministic random partition: round(val*N) and round(test*N) videos go to
// validation and test, the remainder to train.
std::map<std::string, Split> make_split(const Corpus& corpus, SplitFractions fractions,
                                        uint64_t seed);

struct SynthSpec {
  int n_videos = 8;
  int duration_min_s = 120;
  int duration_max_s = 240;
  int chapters_min = 3;
  int chapters_max = 5;
  int d_v = 8;
  double signal = 2.0;       // visual boundary evidence strength
  double text_signal = 1.0;  // probability a narration token is a chapter keyword
  bool modality_split = false;  // odd transitions visual-only, even ones text-only
  int vocab = 50;            // filler vocabulary size
  uint64_t seed = 1;
};

// Synthetic corpus with plantable boundary structure: piecewise-constant
// visual means per chapter, chapter keyword tokens first occurring at the
// chapter begin, titles equal to the keywords. Deterministic under seed.
Corpus generate_synthetic_corpus(const SynthSpec& spec);

// JSONL round trip. One video per line; keys in fixed order
// (id, duration_s, difficulty, narration, chapters, frames).
std::string video_to_json_line(const Video& video);
Video video_from_json_line(const std::string& line);
std::string corpus_to_jsonl(const Corpus& corpus);
Corpus corpus_from_jsonl(const std::string& text);
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// Subset helper for evaluation (difficulty filter; "all" keeps everything).
std::vector<const Video*> select_subset(const Corpus& corpus, const std::string& subset);

}  // namespace vidchap
