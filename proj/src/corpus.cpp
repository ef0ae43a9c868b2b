#include "vidchap/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vidchap/rng.hpp"

namespace vidchap {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::hard: return "hard";
    case Difficulty::ambiguous: return "ambiguous";
  }
  throw std::logic_error("bad difficulty");
}

Difficulty difficulty_from_string(const std::string& s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "hard") return Difficulty::hard;
  if (s == "ambiguous") return Difficulty::ambiguous;
  throw std::invalid_argument("unknown difficulty: " + s);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  throw std::logic_error("bad split");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + s);
}

std::string to_string(ParseFailure f) {
  switch (f) {
    case ParseFailure::too_few: return "too-few";
    case ParseFailure::non_monotone: return "non-monotone";
    case ParseFailure::out_of_range: return "out-of-range";
  }
  throw std::logic_error("bad parse failure");
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

ParseResult parse_description(const std::string& text, int duration_s) {
  static const std::regex three_field(R"(^\s*(\d+):(\d{1,2}):(\d{2})\s+(.*\S)\s*$)");
  static const std::regex two_field(R"(^\s*(\d+):(\d{2})\s+(.*\S)\s*$)");

  ParseResult result;
  std::vector<std::pair<int64_t, std::vector<std::string>>> lines;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    int64_t t = -1;
    std::string title;
    try {
      if (std::regex_match(line, m, three_field)) {
        const int64_t h = std::stoll(m[1]);
        const int64_t mm = std::stoll(m[2]);
        const int64_t ss = std::stoll(m[3]);
        if (mm > 59 || ss > 59) continue;
        t = h * 3600 + mm * 60 + ss;
        title = m[4];
      } else if (std::regex_match(line, m, two_field)) {
        const int64_t mm = std::stoll(m[1]);
        const int64_t ss = std::stoll(m[2]);
        if (ss > 59) continue;
        t = mm * 60 + ss;
        title = m[3];
      } else {
        continue;
      }
    } catch (const std::out_of_range&) {
      continue;  // absurd digit runs are not timestamps
    }
    std::vector<std::string> words = tokenize(title);
    if (words.empty()) continue;
    lines.emplace_back(t, std::move(words));
  }

  if (lines.size() < 2) {
    result.failure = ParseFailure::too_few;
    return result;
  }
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].first <= lines[i - 1].first) {
      result.failure = ParseFailure::non_monotone;
      return result;
    }
  }
  for (const auto& [t, words] : lines) {
    if (t >= duration_s) {
      result.failure = ParseFailure::out_of_range;
      return result;
    }
  }
  for (auto& [t, words] : lines)
    result.chapters.push_back(Chapter{static_cast<int>(t), std::move(words)});
  return result;
}

FilterResult apply_filters(std::vector<Video> videos) {
  FilterResult result;
  for (Video& v : videos) {
    std::string reason;
    if (v.duration_s < 100) {
      reason = "too-short";
    } else if (v.duration_s > 1800) {
      reason = "too-long";
    } else {
      for (size_t i = 0; i + 1 < v.chapters.size(); ++i) {
        if (v.chapters[i + 1].begin_s - v.chapters[i].begin_s < 8) {
          reason = "short-chapter";
          break;
        }
      }
      if (reason.empty() && !v.chapters.empty() &&
          v.duration_s - v.chapters.back().begin_s < 8) {
        reason = "short-chapter";
      }
    }
    if (reason.empty())
      result.kept.push_back(std::move(v));
    else
      result.rejected.push_back(Rejection{v.id, reason});
  }
  return result;
}

namespace {

struct StatsAccum {
  int64_t videos = 0;
  int64_t chapters = 0;
  double duration_sum = 0.0;
  int64_t title_words = 0;

  void add(const Video& v) {
    ++videos;
    for (size_t i = 0; i < v.chapters.size(); ++i) {
      ++chapters;
      const int end = (i + 1 < v.chapters.size()) ? v.chapters[i + 1].begin_s
                                                  : v.duration_s;
      duration_sum += end - v.chapters[i].begin_s;
      title_words += static_cast<int64_t>(v.chapters[i].title.size());
    }
  }

  CategoryStats finish() const {
    CategoryStats s;
    s.video_count = videos;
    s.chapter_count = chapters;
    s.mean_chapter_duration_s = chapters ? duration_sum / chapters : 0.0;
    s.mean_chapter_count = videos ? static_cast<double>(chapters) / videos : 0.0;
    s.mean_title_len = chapters ? static_cast<double>(title_words) / chapters : 0.0;
    return s;
  }
};

}  // namespace

StatsReport compute_stats(const Corpus& corpus) {
  if (corpus.videos.empty()) throw std::invalid_argument("compute_stats: empty corpus");
  std::map<std::string, StatsAccum> per;
  StatsAccum total;
  for (const Video& v : corpus.videos) {
    per[to_string(v.difficulty)].add(v);
    total.add(v);
  }
  StatsReport report;
  for (const auto& [name, acc] : per) report.per_difficulty[name] = acc.finish();
  report.total = total.finish();
  return report;
}

std::map<std::string, Split> make_split(const Corpus& corpus, SplitFractions fractions,
                                        uint64_t seed) {
  const double sum = fractions.train + fractions.val + fractions.test;
  if (fractions.train <= 0 || fractions.val <= 0 || fractions.test <= 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("make_split: fractions must be positive and sum to 1");
  const int64_t n = static_cast<int64_t>(corpus.videos.size());
  const int64_t n_val = std::llround(fractions.val * static_cast<double>(n));
  const int64_t n_test = std::llround(fractions.test * static_cast<double>(n));
  if (n_val + n_test > n)
    throw std::invalid_argument("make_split: corpus too small for fractions");

  std::vector<size_t> order(corpus.videos.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(fold_seed(seed, "split"));
  rng.shuffle(order);

  std::map<std::string, Split> assignment;
  for (int64_t pos = 0; pos < n; ++pos) {
    const Video& v = corpus.videos[order[pos]];
    const Split s = pos < n_val                ? Split::validation
                    : pos < n_val + n_test     ? Split::test
                                               : Split::train;
    if (!assignment.emplace(v.id, s).second)
      throw std::invalid_argument("make_split: duplicate video id " + v.id);
  }
  return assignment;
}

Corpus generate_synthetic_corpus(const SynthSpec& spec) {
  if (spec.n_videos < 1) throw std::invalid_argument("synth: n_videos must be >= 1");
  if (spec.duration_min_s > spec.duration_max_s || spec.duration_min_s < 1)
    throw std::invalid_argument("synth: bad duration range");
  if (spec.chapters_min < 1 || spec.chapters_min > spec.chapters_max)
    throw std::invalid_argument("synth: bad chapter range");
  if (spec.d_v < 4) throw std::invalid_argument("synth: d_v must be >= 4");
  if (spec.signal < 0) throw std::invalid_argument("synth: negative signal");
  if (spec.text_signal < 0 || spec.text_signal > 1)
    throw std::invalid_argument("synth: text_signal must be in [0,1]");
  if (spec.vocab < 1) throw std::invalid_argument("synth: vocab must be >= 1");
  if (spec.duration_min_s < 8 * spec.chapters_max)
    throw std::invalid_argument(
        "synth: infeasible — chapters cannot fit with 8 s gaps");

  Corpus corpus;
  for (int vi = 0; vi < spec.n_videos; ++vi) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth-%04d", vi);
    Video v;
    v.id = buf;
    Rng rng(fold_seed(spec.seed, std::string("video:") + v.id));

    v.duration_s = spec.duration_min_s +
                   static_cast<int>(rng.next_below(
                       static_cast<uint64_t>(spec.duration_max_s - spec.duration_min_s) + 1));
    const int n_ch = spec.chapters_min +
                     static_cast<int>(rng.next_below(
                         static_cast<uint64_t>(spec.chapters_max - spec.chapters_min) + 1));

    // begins: 0, then 8i plus sorted slack so every gap (incl. to video end) is >= 8
    const int slack = v.duration_s - 8 * n_ch;
    std::vector<int> extras(static_cast<size_t>(n_ch) - 1);
    for (int& e : extras) e = static_cast<int>(rng.next_below(static_cast<uint64_t>(slack) + 1));
    std::sort(extras.begin(), extras.end());
    std::vector<int> begins(static_cast<size_t>(n_ch));
    begins[0] = 0;
    for (int i = 1; i < n_ch; ++i) begins[i] = 8 * i + extras[i - 1];

    const double dr = rng.next_double();
    v.difficulty = dr < 0.60   ? Difficulty::easy
                   : dr < 0.82 ? Difficulty::hard
                               : Difficulty::ambiguous;

    // chapter keyword sets; with modality_split, odd transitions keep the
    // previous narration keywords (visual-only evidence)
    std::vector<std::vector<std::string>> own(static_cast<size_t>(n_ch));
    for (int i = 0; i < n_ch; ++i)
      for (char suffix : {'a', 'b', 'c'})
        own[i].push_back("k" + std::to_string(vi) + "c" + std::to_string(i) + suffix);
    // phase parity flips wherever the narration keywords change, so the two
    // global phase words alternate chapter-by-chapter: their pooled mix ratio
    // inside a window tells a mean-pooling model where the transition sits
    std::vector<const std::vector<std::string>*> eff(static_cast<size_t>(n_ch));
    std::vector<int> phase(static_cast<size_t>(n_ch), 0);
    for (int i = 0; i < n_ch; ++i) {
      if (i > 0 && spec.modality_split && i % 2 == 1) {
        eff[i] = eff[i - 1];
        phase[i] = phase[i - 1];
      } else {
        eff[i] = &own[i];
        if (i > 0) phase[i] = 1 - phase[i - 1];
      }
    }

    for (int i = 0; i < n_ch; ++i) v.chapters.push_back(Chapter{begins[i], own[i]});

    int chapter_idx = 0;
    for (int t = 0; t < v.duration_s; ++t) {
      while (chapter_idx + 1 < n_ch && begins[chapter_idx + 1] <= t) ++chapter_idx;
      const std::vector<std::string>& kws = *eff[chapter_idx];
      const bool fresh = chapter_idx == 0 || eff[chapter_idx] != eff[chapter_idx - 1];
      if (spec.text_signal > 0 && t == begins[chapter_idx] && fresh)
        for (const std::string& kw : kws) v.narration.push_back(NarrationToken{t, kw});
      if (rng.next_double() < spec.text_signal)
        v.narration.push_back(NarrationToken{t, kws[rng.next_below(kws.size())]});
      else
        v.narration.push_back(NarrationToken{
            t, "w" + std::to_string(rng.next_below(static_cast<uint64_t>(spec.vocab)))});
      if (rng.next_double() < spec.text_signal)
        v.narration.push_back(NarrationToken{t, phase[chapter_idx] ? "onward" : "segue"});
    }

    const uint64_t feat_seed = fold_seed(spec.seed, std::string("feat:") + v.id);
    v.frames = synth_features(feat_seed, v.duration_s, spec.d_v, spec.signal,
                              spec.modality_split, begins);
    FeatureProviderSpec provider;
    provider.kind = ProviderKind::synthetic;
    provider.d_v = spec.d_v;
    provider.seed = feat_seed;
    provider.signal = spec.signal;
    provider.modality_split = spec.modality_split;
    v.frames_provider = provider;

    corpus.videos.push_back(std::move(v));
  }
  return corpus;
}

namespace {

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("corpus json: " + what);
}

}  // namespace

std::string video_to_json_line(const Video& video) {
  ordered_json j;
  j["id"] = video.id;
  j["duration_s"] = video.duration_s;
  j["difficulty"] = to_string(video.difficulty);
  ordered_json narr = ordered_json::array();
  for (const NarrationToken& tok : video.narration)
    narr.push_back(ordered_json::array({tok.time_s, tok.word}));
  j["narration"] = std::move(narr);
  ordered_json chaps = ordered_json::array();
  for (const Chapter& ch : video.chapters)
    chaps.push_back(ordered_json::array({ch.begin_s, join_words(ch.title)}));
  j["chapters"] = std::move(chaps);
  if (!video.frames.empty()) {
    ordered_json frames = ordered_json::array();
    for (const FrameFeature& f : video.frames)
      frames.push_back(ordered_json::array({f.time_s, ordered_json(f.values)}));
    j["frames"] = std::move(frames);
  } else if (video.frames_provider.has_value()) {
    const FeatureProviderSpec& p = *video.frames_provider;
    ordered_json obj;
    obj["provider"] = to_string(p.kind);
    obj["seed"] = p.seed;
    obj["d_v"] = p.d_v;
    if (p.kind == ProviderKind::synthetic) {
      obj["signal"] = p.signal;
      obj["modality_split"] = p.modality_split;
    } else if (p.kind == ProviderKind::external_file) {
      obj["path"] = p.path;
    }
    j["frames"] = std::move(obj);
  } else {
    j["frames"] = ordered_json::array();
  }
  return j.dump();
}

Video video_from_json_line(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const std::exception& e) {
    fail(std::string("parse error: ") + e.what());
  }
  if (!j.is_object()) fail("line is not an object");
  static const char* expected[] = {"id", "duration_s", "difficulty",
                                   "narration", "chapters", "frames"};
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : expected) known = known || item.key() == key;
    if (!known) fail("unknown key: " + item.key());
  }
  for (const char* key : expected)
    if (!j.contains(key)) fail(std::string("missing key: ") + key);

  Video v;
  if (!j["id"].is_string()) fail("id must be a string");
  v.id = j["id"];
  if (!j["duration_s"].is_number_integer()) fail("duration_s must be an integer");
  v.duration_s = j["duration_s"];
  if (v.duration_s <= 0) fail("duration_s must be positive");
  if (!j["difficulty"].is_string()) fail("difficulty must be a string");
  v.difficulty = difficulty_from_string(j["difficulty"]);

  if (!j["narration"].is_array()) fail("narration must be an array");
  for (const auto& entry : j["narration"]) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() ||
        !entry[1].is_string())
      fail("narration entries must be [t, word]");
    NarrationToken tok{entry[0], entry[1]};
    if (tok.time_s < 0 || tok.time_s >= v.duration_s) fail("narration time out of range");
    if (tok.word.empty() || tok.word.find_first_of(" \t\n") != std::string::npos)
      fail("narration word must be non-empty without whitespace");
    v.narration.push_back(std::move(tok));
  }

  if (!j["chapters"].is_array()) fail("chapters must be an array");
  for (const auto& entry : j["chapters"]) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() ||
        !entry[1].is_string())
      fail("chapter entries must be [begin_s, title]");
    Chapter ch;
    ch.begin_s = entry[0];
    ch.title = tokenize(entry[1]);
    if (ch.begin_s < 0 || ch.begin_s >= v.duration_s) fail("chapter begin out of range");
    if (ch.title.empty()) fail("chapter title must have words");
    if (!v.chapters.empty() && ch.begin_s <= v.chapters.back().begin_s)
      fail("chapter begins must strictly increase");
    v.chapters.push_back(std::move(ch));
  }

  const auto& frames = j["frames"];
  if (frames.is_array()) {
    size_t d_v = 0;
    for (const auto& entry : frames) {
      if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() ||
          !entry[1].is_array())
        fail("frame entries must be [t, [values...]]");
      FrameFeature f;
      f.time_s = entry[0];
      if (f.time_s < 0 || f.time_s >= v.duration_s) fail("frame time out of range");
      for (const auto& val : entry[1]) {
        if (!val.is_number()) fail("frame values must be numbers");
        f.values.push_back(val.get<double>());
      }
      if (v.frames.empty())
        d_v = f.values.size();
      else if (f.values.size() != d_v)
        fail("inconsistent frame dimension");
      v.frames.push_back(std::move(f));
    }
  } else if (frames.is_object()) {
    FeatureProviderSpec p;
    if (!frames.contains("provider") || !frames["provider"].is_string())
      fail("frames provider must name a provider");
    p.kind = provider_kind_from_string(frames["provider"]);
    if (!frames.contains("seed") || !frames["seed"].is_number())
      fail("frames provider needs a seed");
    p.seed = frames["seed"].get<uint64_t>();
    if (!frames.contains("d_v") || !frames["d_v"].is_number_integer())
      fail("frames provider needs d_v");
    p.d_v = frames["d_v"];
    for (const auto& item : frames.items()) {
      const std::string& key = item.key();
      if (key == "provider" || key == "seed" || key == "d_v") continue;
      if (key == "signal" && item.value().is_number())
        p.signal = item.value().get<double>();
      else if (key == "modality_split" && item.value().is_boolean())
        p.modality_split = item.value().get<bool>();
      else if (key == "path" && item.value().is_string())
        p.path = item.value().get<std::string>();
      else
        fail("unknown frames provider key: " + key);
    }
    v.frames_provider = p;
  } else {
    fail("frames must be an array or a provider object");
  }
  return v;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const Video& v : corpus.videos) {
    out += video_to_json_line(v);
    out.push_back('\n');
  }
  return out;
}

Corpus corpus_from_jsonl(const std::string& text) {
  Corpus corpus;
  std::istringstream stream(text);
  std::string line;
  size_t line_no = 0;
  std::map<std::string, bool> seen;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      Video v = video_from_json_line(line);
      if (seen[v.id]) fail("duplicate video id " + v.id);
      seen[v.id] = true;
      corpus.videos.push_back(std::move(v));
    } catch (const std::exception& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << corpus_to_jsonl(corpus);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return corpus_from_jsonl(buf.str());
}

std::vector<const Video*> select_subset(const Corpus& corpus, const std::string& subset) {
  std::vector<const Video*> out;
  if (subset != "all" && subset != "easy" && subset != "hard" && subset != "ambiguous")
    throw std::invalid_argument("unknown subset: " + subset);
  for (const Video& v : corpus.videos)
    if (subset == "all" || to_string(v.difficulty) == subset) out.push_back(&v);
  return out;
}

}  // namespace vidchap
