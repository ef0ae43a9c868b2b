#include "vidchap/baselines.hpp"

#include <algorithm>
#include <stdexcept>

#include "vidchap/rng.hpp"

namespace vidchap {

std::vector<std::vector<std::string>> sentence_units(const std::vector<std::string>& words,
                                                     bool stride_one) {
  constexpr size_t kUnit = 10;
  std::vector<std::vector<std::string>> units;
  if (words.empty()) return units;
  if (stride_one && words.size() > kUnit) {
    for (size_t i = 0; i + kUnit <= words.size(); ++i)
      units.emplace_back(words.begin() + i, words.begin() + i + kUnit);
  } else {
    for (size_t i = 0; i < words.size(); i += kUnit) {
      const size_t end = std::min(i + kUnit, words.size());
      units.emplace_back(words.begin() + i, words.begin() + end);
    }
  }
  return units;
}

std::vector<std::string> baseline_random(const std::vector<std::string>& words,
                                         uint64_t seed, bool stride_one) {
  const auto units = sentence_units(words, stride_one);
  if (units.empty()) return {};
  Rng rng(fold_seed(seed, "baseline-random"));
  return units[rng.next_below(units.size())];
}

std::vector<std::string> baseline_lead(const std::vector<std::string>& words) {
  return {words.begin(), words.begin() + std::min<size_t>(10, words.size())};
}

std::vector<std::string> baseline_principal(const std::vector<std::string>& words,
                                            bool stride_one) {
  const auto units = sentence_units(words, stride_one);
  if (units.empty()) throw std::invalid_argument("baseline_principal: empty narration");
  size_t best = 0;
  double best_score = -1.0;
  for (size_t u = 0; u < units.size(); ++u) {
    // the reference is every narration word outside this unit, kept in order
    std::vector<std::string> rest;
    if (!stride_one) {
      const size_t start = u * 10;
      rest.assign(words.begin(), words.begin() + start);
      rest.insert(rest.end(), words.begin() + start + units[u].size(), words.end());
    } else {
      rest.assign(words.begin(), words.begin() + u);
      rest.insert(rest.end(), words.begin() + u + units[u].size(), words.end());
    }
    const double score = rouge_n(units[u], rest, 1).f1;
    if (score > best_score) {
      best_score = score;
      best = u;
    }
  }
  return units[best];
}

std::vector<std::string> narration_span_words(const Video& video, int begin_s, int end_s) {
  std::vector<std::string> out;
  for (const NarrationToken& tok : video.narration)
    if (tok.time_s >= begin_s && tok.time_s < end_s) out.push_back(tok.word);
  return out;
}

std::vector<GeneratedChapter> baseline_titles(const Video& video,
                                              const std::vector<int>& begins,
                                              const std::string& method, uint64_t seed,
                                              bool stride_one) {
  if (method != "random" && method != "lead" && method != "principal")
    throw std::invalid_argument("baseline_titles: unknown method " + method);
  std::vector<GeneratedChapter> out;
  for (size_t i = 0; i < begins.size(); ++i) {
    const int end = i + 1 < begins.size() ? begins[i + 1] : video.duration_s;
    const std::vector<std::string> words = narration_span_words(video, begins[i], end);
    GeneratedChapter g;
    g.begin_s = begins[i];
    if (method == "lead") {
      g.title = baseline_lead(words);
    } else if (method == "random") {
      g.title = baseline_random(
          words, fold_seed(seed, video.id + ":" + std::to_string(begins[i])), stride_one);
    } else if (!words.empty()) {
      g.title = baseline_principal(words, stride_one);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace vidchap
