#include "vidchap/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vidchap/rng.hpp"

namespace vidchap {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

void expect_object(const ordered_json& j, const std::string& where) {
  if (!j.is_object()) fail(where + " must be an object");
}

void expect_keys(const ordered_json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) fail("unknown key \"" + item.key() + "\" in " + where);
  }
}

int get_int(const ordered_json& j, const char* key, int dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_number_integer()) fail(std::string(key) + " must be an integer");
  return j.at(key).get<int>();
}

uint64_t get_u64(const ordered_json& j, const char* key, uint64_t dflt) {
  if (!j.contains(key)) return dflt;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) fail(std::string(key) + " must be a non-negative integer");
  if (!v.is_number_unsigned() && v.get<int64_t>() < 0)
    fail(std::string(key) + " must be a non-negative integer");
  return v.get<uint64_t>();
}

double get_double(const ordered_json& j, const char* key, double dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_number()) fail(std::string(key) + " must be a number");
  return j.at(key).get<double>();
}

bool get_bool(const ordered_json& j, const char* key, bool dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_boolean()) fail(std::string(key) + " must be a boolean");
  return j.at(key).get<bool>();
}

std::string get_string(const ordered_json& j, const char* key, const std::string& dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_string()) fail(std::string(key) + " must be a string");
  return j.at(key).get<std::string>();
}

ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

RunConfig run_config_from_json(const ordered_json& doc) {
  expect_object(doc, "the top level");
  expect_keys(doc, "the top level",
              {"seed", "windowing", "localizer", "localizer_train", "titler",
               "titler_train", "split", "synth", "eval", "baseline", "sweep"});
  RunConfig cfg;
  cfg.seed = get_u64(doc, "seed", cfg.seed);

  if (doc.contains("windowing")) {
    const ordered_json& j = doc.at("windowing");
    expect_object(j, "windowing");
    expect_keys(j, "windowing", {"window_s", "offset_s", "stride_s"});
    cfg.windowing.window_s = get_int(j, "window_s", cfg.windowing.window_s);
    cfg.windowing.offset_s = get_int(j, "offset_s", cfg.windowing.offset_s);
    // the skip stride defaults to 2*o, the largest stride that never misses
    cfg.windowing.stride_s = get_int(j, "stride_s", 2 * cfg.windowing.offset_s);
  }

  if (doc.contains("localizer")) {
    const ordered_json& j = doc.at("localizer");
    expect_object(j, "localizer");
    expect_keys(j, "localizer",
                {"modality", "d_v", "vocab_size", "d_t", "hidden", "use_tsm", "dropout",
                 "shift_fraction"});
    cfg.localizer.modality =
        modality_from_string(get_string(j, "modality", to_string(cfg.localizer.modality)));
    cfg.localizer.d_v = get_int(j, "d_v", cfg.localizer.d_v);
    cfg.localizer.vocab_size = get_int(j, "vocab_size", cfg.localizer.vocab_size);
    cfg.localizer.d_t = get_int(j, "d_t", cfg.localizer.d_t);
    cfg.localizer.hidden = get_int(j, "hidden", cfg.localizer.hidden);
    cfg.localizer.use_tsm = get_bool(j, "use_tsm", cfg.localizer.use_tsm);
    cfg.localizer.dropout = get_double(j, "dropout", cfg.localizer.dropout);
    cfg.localizer.shift_fraction = get_double(j, "shift_fraction", cfg.localizer.shift_fraction);
  }

  if (doc.contains("localizer_train")) {
    const ordered_json& j = doc.at("localizer_train");
    expect_object(j, "localizer_train");
    expect_keys(j, "localizer_train",
                {"batch_size", "base_lr", "weight_decay", "warmup_frac", "epochs",
                 "target_pos_fraction", "early_stop_val_ap"});
    LocalizerTrainConfig& t = cfg.localizer_train;
    t.batch_size = get_int(j, "batch_size", t.batch_size);
    t.base_lr = get_double(j, "base_lr", t.base_lr);
    t.weight_decay = get_double(j, "weight_decay", t.weight_decay);
    t.warmup_frac = get_double(j, "warmup_frac", t.warmup_frac);
    t.epochs = get_int(j, "epochs", t.epochs);
    t.target_pos_fraction = get_double(j, "target_pos_fraction", t.target_pos_fraction);
    t.early_stop_val_ap = get_double(j, "early_stop_val_ap", t.early_stop_val_ap);
  }

  if (doc.contains("titler")) {
    const ordered_json& j = doc.at("titler");
    expect_object(j, "titler");
    expect_keys(j, "titler",
                {"n_ctx", "m", "p", "q", "n_heads", "enc_layers", "dec_layers", "ffn_dim",
                 "max_title_len", "vocab_cap", "scaled_fusion", "fusion"});
    TitlerConfig& t = cfg.titler;
    t.n_ctx = get_int(j, "n_ctx", t.n_ctx);
    t.m = get_int(j, "m", t.m);
    t.p = get_int(j, "p", t.p);
    t.q = get_int(j, "q", t.q);
    t.n_heads = get_int(j, "n_heads", t.n_heads);
    t.enc_layers = get_int(j, "enc_layers", t.enc_layers);
    t.dec_layers = get_int(j, "dec_layers", t.dec_layers);
    t.ffn_dim = get_int(j, "ffn_dim", t.ffn_dim);
    t.max_title_len = get_int(j, "max_title_len", t.max_title_len);
    t.vocab_cap = get_int(j, "vocab_cap", t.vocab_cap);
    t.scaled_fusion = get_bool(j, "scaled_fusion", t.scaled_fusion);
    t.fusion = get_string(j, "fusion", t.fusion);
  }

  if (doc.contains("titler_train")) {
    const ordered_json& j = doc.at("titler_train");
    expect_object(j, "titler_train");
    expect_keys(j, "titler_train",
                {"batch_size", "base_lr", "weight_decay", "warmup_frac", "epochs",
                 "early_stop_rouge1", "rouge_check_every"});
    TitlerTrainConfig& t = cfg.titler_train;
    t.batch_size = get_int(j, "batch_size", t.batch_size);
    t.base_lr = get_double(j, "base_lr", t.base_lr);
    t.weight_decay = get_double(j, "weight_decay", t.weight_decay);
    t.warmup_frac = get_double(j, "warmup_frac", t.warmup_frac);
    t.epochs = get_int(j, "epochs", t.epochs);
    t.early_stop_rouge1 = get_double(j, "early_stop_rouge1", t.early_stop_rouge1);
    t.rouge_check_every = get_int(j, "rouge_check_every", t.rouge_check_every);
  }

  if (doc.contains("split")) {
    const ordered_json& j = doc.at("split");
    expect_object(j, "split");
    expect_keys(j, "split", {"train", "validation", "test"});
    cfg.split.train = get_double(j, "train", cfg.split.train);
    cfg.split.val = get_double(j, "validation", cfg.split.val);
    cfg.split.test = get_double(j, "test", cfg.split.test);
  }

  if (doc.contains("synth")) {
    const ordered_json& j = doc.at("synth");
    expect_object(j, "synth");
    expect_keys(j, "synth",
                {"n_videos", "duration_min_s", "duration_max_s", "chapters_min",
                 "chapters_max", "d_v", "signal", "text_signal", "modality_split", "vocab"});
    SynthSpec& s = cfg.synth;
    s.n_videos = get_int(j, "n_videos", s.n_videos);
    s.duration_min_s = get_int(j, "duration_min_s", s.duration_min_s);
    s.duration_max_s = get_int(j, "duration_max_s", s.duration_max_s);
    s.chapters_min = get_int(j, "chapters_min", s.chapters_min);
    s.chapters_max = get_int(j, "chapters_max", s.chapters_max);
    s.d_v = get_int(j, "d_v", s.d_v);
    s.signal = get_double(j, "signal", s.signal);
    s.text_signal = get_double(j, "text_signal", s.text_signal);
    s.modality_split = get_bool(j, "modality_split", s.modality_split);
    s.vocab = get_int(j, "vocab", s.vocab);
  }

  if (doc.contains("eval")) {
    const ordered_json& j = doc.at("eval");
    expect_object(j, "eval");
    expect_keys(j, "eval", {"threshold", "matched_recall"});
    cfg.eval_threshold = get_double(j, "threshold", cfg.eval_threshold);
    cfg.matched_recall = get_bool(j, "matched_recall", cfg.matched_recall);
  }

  if (doc.contains("baseline")) {
    const ordered_json& j = doc.at("baseline");
    expect_object(j, "baseline");
    expect_keys(j, "baseline", {"stride_one"});
    cfg.baseline_stride_one = get_bool(j, "stride_one", cfg.baseline_stride_one);
  }

  if (doc.contains("sweep")) {
    const ordered_json& j = doc.at("sweep");
    expect_object(j, "sweep");
    expect_keys(j, "sweep", {"window_sizes", "tsm", "modalities"});
    if (j.contains("window_sizes")) {
      if (!j.at("window_sizes").is_array()) fail("sweep window_sizes must be an array");
      cfg.sweep_window_sizes.clear();
      for (const auto& v : j.at("window_sizes")) {
        if (!v.is_number_integer()) fail("sweep window_sizes entries must be integers");
        cfg.sweep_window_sizes.push_back(v.get<int>());
      }
    }
    if (j.contains("tsm")) {
      if (!j.at("tsm").is_array()) fail("sweep tsm must be an array");
      cfg.sweep_tsm.clear();
      for (const auto& v : j.at("tsm")) {
        if (!v.is_boolean()) fail("sweep tsm entries must be booleans");
        cfg.sweep_tsm.push_back(v.get<bool>() ? 1 : 0);
      }
    }
    if (j.contains("modalities")) {
      if (!j.at("modalities").is_array()) fail("sweep modalities must be an array");
      cfg.sweep_modalities.clear();
      for (const auto& v : j.at("modalities")) {
        if (!v.is_string()) fail("sweep modalities entries must be strings");
        cfg.sweep_modalities.push_back(v.get<std::string>());
      }
    }
  }

  // fan the global seed out and mirror the single source of truth for k
  cfg.localizer.window_s = cfg.windowing.window_s;
  cfg.localizer_train.seed = cfg.seed;
  cfg.titler_train.seed = cfg.seed;
  cfg.synth.seed = cfg.seed;

  validate(cfg.windowing);
  validate(cfg.localizer);
  validate(cfg.titler);
  if (cfg.eval_threshold < 0.0 || cfg.eval_threshold > 1.0)
    fail("eval threshold must be in [0,1]");
  if (cfg.sweep_window_sizes.empty() || cfg.sweep_tsm.empty() || cfg.sweep_modalities.empty())
    fail("sweep axes must be non-empty");
  for (int k : cfg.sweep_window_sizes)
    if (k < 2 || k % 2 != 0) fail("sweep window sizes must be even and >= 2");
  for (const std::string& m : cfg.sweep_modalities) modality_from_string(m);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

ordered_json run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["windowing"]["window_s"] = cfg.windowing.window_s;
  j["windowing"]["offset_s"] = cfg.windowing.offset_s;
  j["windowing"]["stride_s"] = cfg.windowing.stride_s;
  j["localizer"]["modality"] = to_string(cfg.localizer.modality);
  j["localizer"]["d_v"] = cfg.localizer.d_v;
  j["localizer"]["vocab_size"] = cfg.localizer.vocab_size;
  j["localizer"]["d_t"] = cfg.localizer.d_t;
  j["localizer"]["hidden"] = cfg.localizer.hidden;
  j["localizer"]["use_tsm"] = cfg.localizer.use_tsm;
  j["localizer"]["dropout"] = cfg.localizer.dropout;
  j["localizer"]["shift_fraction"] = cfg.localizer.shift_fraction;
  j["localizer_train"]["batch_size"] = cfg.localizer_train.batch_size;
  j["localizer_train"]["base_lr"] = cfg.localizer_train.base_lr;
  j["localizer_train"]["weight_decay"] = cfg.localizer_train.weight_decay;
  j["localizer_train"]["warmup_frac"] = cfg.localizer_train.warmup_frac;
  j["localizer_train"]["epochs"] = cfg.localizer_train.epochs;
  j["localizer_train"]["target_pos_fraction"] = cfg.localizer_train.target_pos_fraction;
  j["localizer_train"]["early_stop_val_ap"] = cfg.localizer_train.early_stop_val_ap;
  j["titler"]["n_ctx"] = cfg.titler.n_ctx;
  j["titler"]["m"] = cfg.titler.m;
  j["titler"]["p"] = cfg.titler.p;
  j["titler"]["q"] = cfg.titler.q;
  j["titler"]["n_heads"] = cfg.titler.n_heads;
  j["titler"]["enc_layers"] = cfg.titler.enc_layers;
  j["titler"]["dec_layers"] = cfg.titler.dec_layers;
  j["titler"]["ffn_dim"] = cfg.titler.ffn_dim;
  j["titler"]["max_title_len"] = cfg.titler.max_title_len;
  j["titler"]["vocab_cap"] = cfg.titler.vocab_cap;
  j["titler"]["scaled_fusion"] = cfg.titler.scaled_fusion;
  j["titler"]["fusion"] = cfg.titler.fusion;
  j["titler_train"]["batch_size"] = cfg.titler_train.batch_size;
  j["titler_train"]["base_lr"] = cfg.titler_train.base_lr;
  j["titler_train"]["weight_decay"] = cfg.titler_train.weight_decay;
  j["titler_train"]["warmup_frac"] = cfg.titler_train.warmup_frac;
  j["titler_train"]["epochs"] = cfg.titler_train.epochs;
  j["titler_train"]["early_stop_rouge1"] = cfg.titler_train.early_stop_rouge1;
  j["titler_train"]["rouge_check_every"] = cfg.titler_train.rouge_check_every;
  j["split"]["train"] = cfg.split.train;
  j["split"]["validation"] = cfg.split.val;
  j["split"]["test"] = cfg.split.test;
  j["synth"]["n_videos"] = cfg.synth.n_videos;
  j["synth"]["duration_min_s"] = cfg.synth.duration_min_s;
  j["synth"]["duration_max_s"] = cfg.synth.duration_max_s;
  j["synth"]["chapters_min"] = cfg.synth.chapters_min;
  j["synth"]["chapters_max"] = cfg.synth.chapters_max;
  j["synth"]["d_v"] = cfg.synth.d_v;
  j["synth"]["signal"] = cfg.synth.signal;
  j["synth"]["text_signal"] = cfg.synth.text_signal;
  j["synth"]["modality_split"] = cfg.synth.modality_split;
  j["synth"]["vocab"] = cfg.synth.vocab;
  j["eval"]["threshold"] = cfg.eval_threshold;
  j["eval"]["matched_recall"] = cfg.matched_recall;
  j["baseline"]["stride_one"] = cfg.baseline_stride_one;
  j["sweep"]["window_sizes"] = cfg.sweep_window_sizes;
  ordered_json tsm = ordered_json::array();
  for (int t : cfg.sweep_tsm) tsm.push_back(t != 0);
  j["sweep"]["tsm"] = tsm;
  j["sweep"]["modalities"] = cfg.sweep_modalities;
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(run_config_to_json(cfg).dump())));
  return std::string(buf);
}

ordered_json meta_block(const RunConfig& cfg) {
  ordered_json meta;
  meta["artifact_version"] = kArtifactVersion;
  meta["seed"] = cfg.seed;
  meta["config_hash"] = config_hash(cfg);
  meta["config"] = run_config_to_json(cfg);
  return meta;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("short write to " + path);
}

void write_json_with_meta(const std::string& path, const RunConfig& cfg,
                          const ordered_json& payload) {
  ordered_json out;
  out["meta"] = meta_block(cfg);
  for (const auto& item : payload.items()) out[item.key()] = item.value();
  write_text_file(path, out.dump(2) + "\n");
}

void write_meta_sibling(const std::string& path, const RunConfig& cfg) {
  ordered_json out;
  out["meta"] = meta_block(cfg);
  write_text_file(path + ".meta.json", out.dump(2) + "\n");
}

namespace {

// shared JSONL scaffolding: one json object per non-empty line
std::vector<ordered_json> parse_jsonl(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<ordered_json> lines;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      lines.push_back(ordered_json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": invalid JSON: " + e.what());
    }
    if (!lines.back().is_object())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected an object");
  }
  return lines;
}

void check_record_keys(const ordered_json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw std::runtime_error(path + ": unknown key \"" + item.key() + "\"");
  }
  for (const char* k : allowed)
    if (!j.contains(k)) throw std::runtime_error(path + ": missing key \"" + std::string(k) + "\"");
}

}  // namespace

void save_boundaries(const std::string& path,
                     const std::map<std::string, std::vector<BoundaryPrediction>>& boundaries) {
  std::string out;
  for (const auto& [id, preds] : boundaries) {
    ordered_json line;
    line["video_id"] = id;
    line["boundaries"] = ordered_json::array();
    for (const BoundaryPrediction& b : preds) {
      ordered_json rec;
      rec["begin_s"] = b.begin_s;
      rec["confidence"] = b.confidence;
      line["boundaries"].push_back(rec);
    }
    out += line.dump() + "\n";
  }
  write_text_file(path, out);
}

std::map<std::string, std::vector<BoundaryPrediction>> load_boundaries(const std::string& path) {
  std::map<std::string, std::vector<BoundaryPrediction>> result;
  for (const ordered_json& line : parse_jsonl(path)) {
    check_record_keys(line, path, {"video_id", "boundaries"});
    const std::string id = line.at("video_id").get<std::string>();
    if (result.count(id)) throw std::runtime_error(path + ": duplicate video " + id);
    std::vector<BoundaryPrediction>& preds = result[id];
    for (const ordered_json& rec : line.at("boundaries")) {
      check_record_keys(rec, path, {"begin_s", "confidence"});
      preds.push_back(BoundaryPrediction{id, rec.at("begin_s").get<int>(),
                                         rec.at("confidence").get<double>()});
    }
  }
  return result;
}

void save_generated_chapters(const std::string& path, const ChapterFile& file) {
  std::string out;
  for (const auto& [id, chapters] : file.titles) {
    ordered_json line;
    line["video_id"] = id;
    line["source"] = file.source;
    line["method"] = file.method;
    line["chapters"] = ordered_json::array();
    for (const GeneratedChapter& ch : chapters) {
      ordered_json rec;
      rec["begin_s"] = ch.begin_s;
      rec["title"] = ch.title;
      line["chapters"].push_back(rec);
    }
    out += line.dump() + "\n";
  }
  write_text_file(path, out);
}

ChapterFile load_generated_chapters(const std::string& path) {
  ChapterFile file;
  for (const ordered_json& line : parse_jsonl(path)) {
    check_record_keys(line, path, {"video_id", "source", "method", "chapters"});
    const std::string id = line.at("video_id").get<std::string>();
    if (file.titles.count(id)) throw std::runtime_error(path + ": duplicate video " + id);
    const std::string source = line.at("source").get<std::string>();
    const std::string method = line.at("method").get<std::string>();
    if (source != "gt" && source != "predicted")
      throw std::runtime_error(path + ": source must be gt or predicted");
    if (!file.titles.empty() && (source != file.source || method != file.method))
      throw std::runtime_error(path + ": mixed source/method across lines");
    file.source = source;
    file.method = method;
    std::vector<GeneratedChapter>& chapters = file.titles[id];
    for (const ordered_json& rec : line.at("chapters")) {
      check_record_keys(rec, path, {"begin_s", "title"});
      GeneratedChapter ch;
      ch.begin_s = rec.at("begin_s").get<int>();
      for (const ordered_json& w : rec.at("title")) ch.title.push_back(w.get<std::string>());
      chapters.push_back(std::move(ch));
    }
  }
  return file;
}

void save_clip_scores(const std::string& path, const ClipScoreMap& scores) {
  std::string out;
  for (const auto& [id, clips] : scores) {
    ordered_json line;
    line["video_id"] = id;
    line["clips"] = ordered_json::array();
    for (const auto& [p, label] : clips) {
      ordered_json rec;
      rec["p"] = p;
      rec["label"] = label;
      line["clips"].push_back(rec);
    }
    out += line.dump() + "\n";
  }
  write_text_file(path, out);
}

ClipScoreMap load_clip_scores(const std::string& path) {
  ClipScoreMap result;
  for (const ordered_json& line : parse_jsonl(path)) {
    check_record_keys(line, path, {"video_id", "clips"});
    const std::string id = line.at("video_id").get<std::string>();
    if (result.count(id)) throw std::runtime_error(path + ": duplicate video " + id);
    auto& clips = result[id];
    for (const ordered_json& rec : line.at("clips")) {
      check_record_keys(rec, path, {"p", "label"});
      const int label = rec.at("label").get<int>();
      if (label != 0 && label != 1) throw std::runtime_error(path + ": label must be 0 or 1");
      clips.emplace_back(rec.at("p").get<double>(), label);
    }
  }
  return result;
}

void save_split_assignment(const std::string& path, const RunConfig& cfg,
                           const std::map<std::string, Split>& assignment) {
  ordered_json payload;
  payload["assignment"] = ordered_json::object();
  for (const auto& [id, split] : assignment) payload["assignment"][id] = to_string(split);
  write_json_with_meta(path, cfg, payload);
}

std::map<std::string, Split> load_split_assignment(const std::string& path) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("assignment"))
    throw std::runtime_error(path + ": missing assignment");
  std::map<std::string, Split> result;
  for (const auto& item : doc.at("assignment").items())
    result[item.key()] = split_from_string(item.value().get<std::string>());
  return result;
}

namespace {

ordered_json localizer_config_to_json(const LocalizerConfig& cfg) {
  ordered_json j;
  j["modality"] = to_string(cfg.modality);
  j["d_v"] = cfg.d_v;
  j["vocab_size"] = cfg.vocab_size;
  j["d_t"] = cfg.d_t;
  j["hidden"] = cfg.hidden;
  j["use_tsm"] = cfg.use_tsm;
  j["window_s"] = cfg.window_s;
  j["dropout"] = cfg.dropout;
  j["shift_fraction"] = cfg.shift_fraction;
  return j;
}

LocalizerConfig localizer_config_from_json(const ordered_json& j) {
  LocalizerConfig cfg;
  cfg.modality = modality_from_string(j.at("modality").get<std::string>());
  cfg.d_v = j.at("d_v").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.d_t = j.at("d_t").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.use_tsm = j.at("use_tsm").get<bool>();
  cfg.window_s = j.at("window_s").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.shift_fraction = j.at("shift_fraction").get<double>();
  return cfg;
}

ordered_json titler_config_to_json(const TitlerConfig& cfg) {
  ordered_json j;
  j["n_ctx"] = cfg.n_ctx;
  j["m"] = cfg.m;
  j["p"] = cfg.p;
  j["q"] = cfg.q;
  j["n_heads"] = cfg.n_heads;
  j["enc_layers"] = cfg.enc_layers;
  j["dec_layers"] = cfg.dec_layers;
  j["ffn_dim"] = cfg.ffn_dim;
  j["max_title_len"] = cfg.max_title_len;
  j["vocab_cap"] = cfg.vocab_cap;
  j["scaled_fusion"] = cfg.scaled_fusion;
  j["fusion"] = cfg.fusion;
  return j;
}

TitlerConfig titler_config_from_json(const ordered_json& j) {
  TitlerConfig cfg;
  cfg.n_ctx = j.at("n_ctx").get<int>();
  cfg.m = j.at("m").get<int>();
  cfg.p = j.at("p").get<int>();
  cfg.q = j.at("q").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.enc_layers = j.at("enc_layers").get<int>();
  cfg.dec_layers = j.at("dec_layers").get<int>();
  cfg.ffn_dim = j.at("ffn_dim").get<int>();
  cfg.max_title_len = j.at("max_title_len").get<int>();
  cfg.vocab_cap = j.at("vocab_cap").get<int>();
  cfg.scaled_fusion = j.at("scaled_fusion").get<bool>();
  cfg.fusion = j.at("fusion").get<std::string>();
  return cfg;
}

ordered_json parse_sidecar(const std::string& path) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("config"))
    throw std::runtime_error(path + ": missing model config");
  return doc;
}

}  // namespace

void save_localizer(const std::string& prefix, const RunConfig& cfg,
                    const LocalizerModel& model, const LocalizerTrainResult* result) {
  model.params.save(prefix + ".ckpt");
  ordered_json payload;
  payload["kind"] = "localizer";
  payload["config"] = localizer_config_to_json(model.config);
  if (result != nullptr) {
    payload["best_epoch"] = result->best_epoch;
    payload["best_val_ap"] = number_or_null(result->best_val_ap);
    payload["curve"] = ordered_json::array();
    for (const LocalizerEpochStats& s : result->curve) {
      ordered_json e;
      e["epoch"] = s.epoch;
      e["train_loss"] = s.train_loss;
      e["val_ap"] = number_or_null(s.val_ap);
      payload["curve"].push_back(e);
    }
  }
  write_json_with_meta(prefix + ".json", cfg, payload);
}

LocalizerModel load_localizer(const std::string& prefix) {
  const ordered_json doc = parse_sidecar(prefix + ".json");
  const LocalizerConfig cfg = localizer_config_from_json(doc.at("config"));
  LocalizerModel model = init_localizer(cfg, 0);  // layout only; weights come from the file
  model.params.load(prefix + ".ckpt");
  return model;
}

void save_titler(const std::string& prefix, const RunConfig& cfg, const TitlerModel& model,
                 const TitlerTrainResult* result) {
  model.params.save(prefix + ".ckpt");
  ordered_json payload;
  payload["kind"] = "titler";
  payload["config"] = titler_config_to_json(model.config);
  payload["vocab"] = model.vocab.id_to_token;
  if (result != nullptr) {
    payload["final_train_rouge1"] = number_or_null(result->final_train_rouge1);
    payload["curve"] = ordered_json::array();
    for (const TitlerEpochStats& s : result->curve) {
      ordered_json e;
      e["epoch"] = s.epoch;
      e["train_loss"] = s.train_loss;
      e["train_rouge1"] = number_or_null(s.train_rouge1);
      payload["curve"].push_back(e);
    }
  }
  write_json_with_meta(prefix + ".json", cfg, payload);
}

TitlerModel load_titler(const std::string& prefix) {
  const ordered_json doc = parse_sidecar(prefix + ".json");
  const TitlerConfig cfg = titler_config_from_json(doc.at("config"));
  if (!doc.contains("vocab")) throw std::runtime_error(prefix + ".json: missing vocab");
  Vocab vocab;
  for (const ordered_json& w : doc.at("vocab"))
    vocab.id_to_token.push_back(w.get<std::string>());
  if (vocab.size() < 4) throw std::runtime_error(prefix + ".json: truncated vocab");
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i)
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int>(i);
  TitlerModel model = init_titler(cfg, std::move(vocab), 0);
  model.params.load(prefix + ".ckpt");
  return model;
}

namespace {

ordered_json category_to_json(const CategoryStats& s) {
  ordered_json j;
  j["video_count"] = s.video_count;
  j["chapter_count"] = s.chapter_count;
  j["mean_chapter_duration_s"] = s.mean_chapter_duration_s;
  j["mean_chapter_count"] = s.mean_chapter_count;
  j["mean_title_len"] = s.mean_title_len;
  return j;
}

}  // namespace

ordered_json stats_to_json(const StatsReport& report) {
  ordered_json j;
  j["total"] = category_to_json(report.total);
  j["per_difficulty"] = ordered_json::object();
  for (const auto& [name, stats] : report.per_difficulty)
    j["per_difficulty"][name] = category_to_json(stats);
  return j;
}

}  // namespace vidchap
