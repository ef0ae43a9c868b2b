#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vidchap/windowing.hpp"

namespace vidchap {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Mean precision at each positive after a stable descending sort by score
// (ties keep input order). Errors when there is no positive label.
double average_precision(const std::vector<std::pair<double, int>>& scored);

// Fraction of ground-truth begins with a predicted boundary within c seconds.
// Without matching a single prediction may recall several gt begins; with
// matched=true each prediction is used at most once (greedy sweep, which is a
// maximum matching for interval constraints). Errors on empty gt.
double recall_at(const std::vector<int>& pred_begins, const std::vector<int>& gt_begins,
                 int c, bool matched = false);

// Clipped n-gram overlap precision/recall/F1; empty candidate or reference
// (after n-gram formation) scores all zeros.
RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n);

// Longest-common-subsequence precision/recall/F1.
RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);

struct GeneratedChapter {
  int begin_s = 0;
  std::vector<std::string> title;
};

struct EvalOptions {
  std::string split_id = "test";
  std::string subset = "all";            // all | easy | hard | ambiguous
  std::string boundaries_mode = "gt";    // gt | predicted
  int window_s = 16;                     // k; gt begins below k/2 are unobservable
  int offset_s = 2;                      // tolerance of the bare Recall column
  bool matched_recall = false;
};

struct EvalReport {
  std::string split_id;
  std::string subset;
  std::string boundaries_mode;
  bool has_ap = false;  // clip-level AP needs clip scores; absent otherwise
  double ap = 0.0;
  double recall = 0.0;
  double recall_at_3 = 0.0;
  double recall_at_5 = 0.0;
  RougeScore rouge_1;
  RougeScore rouge_2;
  RougeScore rouge_l;
  int64_t n_videos = 0;
  int64_t n_gt_chapters = 0;
  int64_t n_observable_gt = 0;  // begins >= k/2, the recall denominator
  int64_t n_pred_boundaries = 0;
  std::vector<std::string> missing_videos;  // subset videos without predictions
};

// Scores one split: localization recall over observable gt begins, clip-level
// AP when per-clip scores are supplied, and chapter-macro ROUGE. In predicted
// mode each gt chapter is paired with the nearest predicted boundary's title;
// gt chapters of videos without predictions score zero and the video is
// flagged.
EvalReport evaluate_pipeline(
    const Corpus& corpus,
    const std::map<std::string, std::vector<BoundaryPrediction>>& boundaries,
    const std::map<std::string, std::vector<GeneratedChapter>>& titles,
    const std::map<std::string, std::vector<std::pair<double, int>>>& clip_scores,
    const EvalOptions& options);

std::string eval_report_to_json(const EvalReport& report);
std::string eval_report_to_csv(const EvalReport& report);

}  // namespace vidchap
