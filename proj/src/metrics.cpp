#include "vidchap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace vidchap {

double average_precision(const std::vector<std::pair<double, int>>& scored) {
  for (const auto& [p, label] : scored) {
    if (!std::isfinite(p)) throw std::invalid_argument("average_precision: non-finite score");
    if (label != 0 && label != 1)
      throw std::invalid_argument("average_precision: labels must be 0/1");
  }
  std::vector<std::pair<double, int>> order = scored;
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  int64_t tp = 0;
  double sum = 0.0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    if (order[rank].second == 1) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(rank + 1);
    }
  }
  if (tp == 0) throw std::invalid_argument("average_precision: no positive labels");
  return sum / static_cast<double>(tp);
}

double recall_at(const std::vector<int>& pred_begins, const std::vector<int>& gt_begins,
                 int c, bool matched) {
  if (gt_begins.empty()) throw std::invalid_argument("recall_at: empty ground truth");
  if (c < 0) throw std::invalid_argument("recall_at: negative tolerance");
  int64_t recalled = 0;
  if (!matched) {
    for (int t : gt_begins)
      for (int b : pred_begins)
        if (std::abs(b - t) <= c) {
          ++recalled;
          break;
        }
  } else {
    // greedy sweep over sorted begins: each gt takes the earliest unused
    // prediction in reach, which attains the maximum matching for intervals
    std::vector<int> gt = gt_begins, pred = pred_begins;
    std::sort(gt.begin(), gt.end());
    std::sort(pred.begin(), pred.end());
    size_t next = 0;
    for (int t : gt) {
      while (next < pred.size() && pred[next] < t - c) ++next;
      if (next < pred.size() && std::abs(pred[next] - t) <= c) {
        ++recalled;
        ++next;
      }
    }
  }
  return static_cast<double>(recalled) / static_cast<double>(gt_begins.size());
}

namespace {

RougeScore prf(double overlap, double n_cand, double n_ref) {
  RougeScore s;
  if (n_cand <= 0 || n_ref <= 0) return s;
  s.precision = overlap / n_cand;
  s.recall = overlap / n_ref;
  if (s.precision + s.recall > 0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

std::map<std::string, int> ngram_counts(const std::vector<std::string>& words, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(words.size()) < n) return counts;
  for (size_t i = 0; i + n <= words.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += words[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  int64_t n_cand = 0, n_ref = 0, overlap = 0;
  for (const auto& [k, v] : cand) n_cand += v;
  for (const auto& [k, v] : ref) n_ref += v;
  for (const auto& [k, v] : cand) {
    auto it = ref.find(k);
    if (it != ref.end()) overlap += std::min(v, it->second);
  }
  return prf(static_cast<double>(overlap), static_cast<double>(n_cand),
             static_cast<double>(n_ref));
}

RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference) {
  const size_t nc = candidate.size(), nr = reference.size();
  if (nc == 0 || nr == 0) return RougeScore{};
  std::vector<int> prev(nr + 1, 0), cur(nr + 1, 0);
  for (size_t i = 1; i <= nc; ++i) {
    for (size_t j = 1; j <= nr; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1]
                   ? prev[j - 1] + 1
                   : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = prev[nr];
  return prf(lcs, static_cast<double>(nc), static_cast<double>(nr));
}

EvalReport evaluate_pipeline(
    const Corpus& corpus,
    const std::map<std::string, std::vector<BoundaryPrediction>>& boundaries,
    const std::map<std::string, std::vector<GeneratedChapter>>& titles,
    const std::map<std::string, std::vector<std::pair<double, int>>>& clip_scores,
    const EvalOptions& options) {
  if (options.boundaries_mode != "gt" && options.boundaries_mode != "predicted")
    throw std::invalid_argument("evaluate_pipeline: boundaries must be gt or predicted");
  if (options.window_s < 2 || options.window_s % 2 != 0)
    throw std::invalid_argument("evaluate_pipeline: bad window length");

  const std::vector<const Video*> videos = select_subset(corpus, options.subset);
  EvalReport report;
  report.split_id = options.split_id;
  report.subset = options.subset;
  report.boundaries_mode = options.boundaries_mode;
  report.n_videos = static_cast<int64_t>(videos.size());

  const int half_k = options.window_s / 2;
  static const std::vector<GeneratedChapter> no_titles;
  static const std::vector<BoundaryPrediction> no_bounds;

  int64_t recalled_o = 0, recalled_3 = 0, recalled_5 = 0;
  double r1p = 0, r1r = 0, r1f = 0, r2p = 0, r2r = 0, r2f = 0, rlp = 0, rlr = 0, rlf = 0;
  std::vector<std::pair<double, int>> pooled_clips;

  for (const Video* v : videos) {
    const auto bit = boundaries.find(v->id);
    const auto tit = titles.find(v->id);
    const bool have_preds = options.boundaries_mode == "gt"
                                ? tit != titles.end()
                                : bit != boundaries.end() || tit != titles.end();
    if (!have_preds) report.missing_videos.push_back(v->id);
    const std::vector<BoundaryPrediction>& bounds =
        bit != boundaries.end() ? bit->second : no_bounds;
    const std::vector<GeneratedChapter>& gen =
        tit != titles.end() ? tit->second : no_titles;

    report.n_gt_chapters += static_cast<int64_t>(v->chapters.size());
    report.n_pred_boundaries += static_cast<int64_t>(bounds.size());

    std::vector<int> pred_begins;
    for (const BoundaryPrediction& b : bounds) pred_begins.push_back(b.begin_s);
    std::vector<int> observable;
    for (const Chapter& ch : v->chapters)
      if (ch.begin_s >= half_k) observable.push_back(ch.begin_s);
    report.n_observable_gt += static_cast<int64_t>(observable.size());
    if (!observable.empty() && !pred_begins.empty()) {
      const auto count_at = [&](int c) {
        return static_cast<int64_t>(std::llround(
            recall_at(pred_begins, observable, c, options.matched_recall) *
            static_cast<double>(observable.size())));
      };
      recalled_o += count_at(options.offset_s);
      recalled_3 += count_at(3);
      recalled_5 += count_at(5);
    }

    for (const Chapter& ch : v->chapters) {
      std::vector<std::string> cand;
      if (options.boundaries_mode == "gt") {
        for (const GeneratedChapter& g : gen)
          if (g.begin_s == ch.begin_s) {
            cand = g.title;
            break;
          }
      } else if (!gen.empty()) {
        // nearest generated boundary; ties resolved toward the earlier one
        const GeneratedChapter* best = nullptr;
        for (const GeneratedChapter& g : gen)
          if (!best || std::abs(g.begin_s - ch.begin_s) < std::abs(best->begin_s - ch.begin_s))
            best = &g;
        cand = best->title;
      }
      const RougeScore s1 = rouge_n(cand, ch.title, 1);
      const RougeScore s2 = rouge_n(cand, ch.title, 2);
      const RougeScore sl = rouge_l(cand, ch.title);
      r1p += s1.precision; r1r += s1.recall; r1f += s1.f1;
      r2p += s2.precision; r2r += s2.recall; r2f += s2.f1;
      rlp += sl.precision; rlr += sl.recall; rlf += sl.f1;
    }

    const auto cit = clip_scores.find(v->id);
    if (cit != clip_scores.end())
      pooled_clips.insert(pooled_clips.end(), cit->second.begin(), cit->second.end());
  }

  if (report.n_observable_gt == 0)
    throw std::invalid_argument("evaluate_pipeline: no observable ground-truth begins");
  const double denom = static_cast<double>(report.n_observable_gt);
  report.recall = static_cast<double>(recalled_o) / denom;
  report.recall_at_3 = static_cast<double>(recalled_3) / denom;
  report.recall_at_5 = static_cast<double>(recalled_5) / denom;

  if (report.n_gt_chapters > 0) {
    const double nch = static_cast<double>(report.n_gt_chapters);
    report.rouge_1 = RougeScore{r1p / nch, r1r / nch, r1f / nch};
    report.rouge_2 = RougeScore{r2p / nch, r2r / nch, r2f / nch};
    report.rouge_l = RougeScore{rlp / nch, rlr / nch, rlf / nch};
  }

  if (!pooled_clips.empty()) {
    report.ap = average_precision(pooled_clips);
    report.has_ap = true;
  }
  return report;
}

namespace {

nlohmann::ordered_json rouge_json(const RougeScore& s) {
  nlohmann::ordered_json j;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  return j;
}

}  // namespace

std::string eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["split"] = r.split_id;
  j["subset"] = r.subset;
  j["boundaries"] = r.boundaries_mode;
  if (r.has_ap)
    j["ap"] = r.ap;
  else
    j["ap"] = nullptr;
  j["recall"] = r.recall;
  j["recall_at_3s"] = r.recall_at_3;
  j["recall_at_5s"] = r.recall_at_5;
  j["rouge_1"] = rouge_json(r.rouge_1);
  j["rouge_2"] = rouge_json(r.rouge_2);
  j["rouge_l"] = rouge_json(r.rouge_l);
  nlohmann::ordered_json counts;
  counts["videos"] = r.n_videos;
  counts["gt_chapters"] = r.n_gt_chapters;
  counts["observable_gt"] = r.n_observable_gt;
  counts["predicted_boundaries"] = r.n_pred_boundaries;
  counts["missing_videos"] = static_cast<int64_t>(r.missing_videos.size());
  j["counts"] = std::move(counts);
  j["missing"] = r.missing_videos;
  return j.dump(2) + "\n";
}

std::string eval_report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "split,subset,boundaries,ap,recall,recall_at_3s,recall_at_5s,"
         "rouge1_f1,rouge2_f1,rougeL_f1,videos,gt_chapters\n";
  out << r.split_id << ',' << r.subset << ',' << r.boundaries_mode << ',';
  if (r.has_ap)
    out << r.ap;
  out << ',' << r.recall << ',' << r.recall_at_3 << ',' << r.recall_at_5 << ','
      << r.rouge_1.f1 << ',' << r.rouge_2.f1 << ',' << r.rouge_l.f1 << ','
      << r.n_videos << ',' << r.n_gt_chapters << '\n';
  return out.str();
}

}  // namespace vidchap
