#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidchap/metrics.hpp"

namespace vidchap {

// Splits narration words into sentence units of 10 consecutive words. The
// default segmentation is non-overlapping with the remainder kept as a short
// final unit; stride_one enumerates every 10-word window instead.
std::vector<std::vector<std::string>> sentence_units(const std::vector<std::string>& words,
                                                     bool stride_one = false);

// Uniformly chosen sentence unit; empty narration gives an empty title.
std::vector<std::string> baseline_random(const std::vector<std::string>& words,
                                         uint64_t seed, bool stride_one = false);

// First min(10, len) narration words.
std::vector<std::string> baseline_lead(const std::vector<std::string>& words);

// Unit with the highest ROUGE-1 F1 against the rest of the narration; ties go
// to the earliest unit. A lone unit scores 0 against its empty rest.
std::vector<std::string> baseline_principal(const std::vector<std::string>& words,
                                            bool stride_one = false);

// Narration words with time in [begin_s, end_s), in narration order.
std::vector<std::string> narration_span_words(const Video& video, int begin_s, int end_s);

// Runs one baseline over a video's chapter spans (each begin to the next, the
// last to video end) and returns one generated title per begin.
std::vector<GeneratedChapter> baseline_titles(const Video& video,
                                              const std::vector<int>& begins,
                                              const std::string& method, uint64_t seed,
                                              bool stride_one = false);

}  // namespace vidchap
