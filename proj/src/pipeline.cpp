#include "vidchap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "vidchap/baselines.hpp"
#include "vidchap/features.hpp"

namespace vidchap {

using nlohmann::ordered_json;

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
}

void run_synth(const RunConfig& cfg, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  const Corpus corpus = generate_synthetic_corpus(cfg.synth);
  save_corpus(corpus, paths.corpus());
  write_meta_sibling(paths.corpus(), cfg);
}

IngestResult run_ingest(const RunConfig& cfg, const std::string& descriptions_path,
                        const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  IngestResult counts;
  std::vector<Video> parsed;
  std::vector<Rejection> rejected;

  std::istringstream in(read_text_file(descriptions_path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ++counts.read;
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(descriptions_path + ":" + std::to_string(line_no) +
                               ": invalid JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("duration_s") ||
        !rec.contains("description"))
      throw std::runtime_error(descriptions_path + ":" + std::to_string(line_no) +
                               ": need id, duration_s and description");
    for (const auto& item : rec.items())
      if (item.key() != "id" && item.key() != "duration_s" && item.key() != "description" &&
          item.key() != "difficulty" && item.key() != "narration" && item.key() != "frames")
        throw std::runtime_error(descriptions_path + ":" + std::to_string(line_no) +
                                 ": unknown key \"" + item.key() + "\"");

    const std::string id = rec.at("id").get<std::string>();
    const int duration = rec.at("duration_s").get<int>();
    const ParseResult chapters = parse_description(rec.at("description").get<std::string>(), duration);
    if (!chapters.ok()) {
      ++counts.parse_failed;
      rejected.push_back(Rejection{id, "parse-" + to_string(*chapters.failure)});
      continue;
    }

    // reuse the corpus-line validator for everything but the description
    ordered_json vj;
    vj["id"] = id;
    vj["duration_s"] = duration;
    vj["difficulty"] = rec.contains("difficulty") ? rec.at("difficulty") : ordered_json("ambiguous");
    vj["narration"] = rec.contains("narration") ? rec.at("narration") : ordered_json::array();
    vj["chapters"] = ordered_json::array();
    for (const Chapter& ch : chapters.chapters) {
      std::string title;
      for (size_t i = 0; i < ch.title.size(); ++i) title += (i ? " " : "") + ch.title[i];
      vj["chapters"].push_back(ordered_json::array({ch.begin_s, title}));
    }
    vj["frames"] = rec.contains("frames") ? rec.at("frames") : ordered_json::array();
    try {
      parsed.push_back(video_from_json_line(vj.dump()));
    } catch (const std::exception& e) {
      throw std::runtime_error(descriptions_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }

  FilterResult filtered = apply_filters(std::move(parsed));
  counts.filtered = static_cast<int64_t>(filtered.rejected.size());
  counts.kept = static_cast<int64_t>(filtered.kept.size());
  for (const Rejection& r : filtered.rejected) rejected.push_back(r);

  Corpus corpus;
  corpus.videos = std::move(filtered.kept);
  save_corpus(corpus, paths.corpus());
  write_meta_sibling(paths.corpus(), cfg);

  ordered_json payload;
  payload["counts"]["read"] = counts.read;
  payload["counts"]["parse_failed"] = counts.parse_failed;
  payload["counts"]["filtered"] = counts.filtered;
  payload["counts"]["kept"] = counts.kept;
  payload["rejected"] = ordered_json::array();
  for (const Rejection& r : rejected) {
    ordered_json rj;
    rj["id"] = r.id;
    rj["reason"] = r.reason;
    payload["rejected"].push_back(rj);
  }
  write_json_with_meta(paths.rejections(), cfg, payload);
  return counts;
}

void run_stats(const RunConfig& cfg, const std::string& corpus_path,
               const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  write_json_with_meta(paths.stats(), cfg, stats_to_json(compute_stats(corpus)));
}

void run_split(const RunConfig& cfg, const std::string& corpus_path,
               const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  save_split_assignment(paths.splits(), cfg, make_split(corpus, cfg.split, cfg.seed));
}

LocalizerTrainResult run_train_localizer(const RunConfig& cfg, const std::string& corpus_path,
                                         const std::string& splits_path,
                                         const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  const std::map<std::string, Split> splits = load_split_assignment(splits_path);
  LocalizerModel model = init_localizer(cfg.localizer, cfg.seed);
  const LocalizerTrainResult result =
      train_localizer(model, corpus, splits, cfg.windowing, cfg.localizer_train);
  save_localizer(paths.localizer_prefix(), cfg, model, &result);
  return result;
}

namespace {

bool in_selected_split(const std::map<std::string, Split>& splits, const std::string& id,
                       const std::string& split_name) {
  if (split_name == "all") return true;
  const auto it = splits.find(id);
  return it != splits.end() && to_string(it->second) == split_name;
}

std::map<std::string, Split> load_splits_if_needed(const std::string& splits_path,
                                                   const std::string& split_name) {
  if (split_name != "all" && split_name != "train" && split_name != "validation" &&
      split_name != "test")
    throw std::invalid_argument("split must be train, validation, test or all");
  if (split_name == "all" && splits_path.empty()) return {};
  if (splits_path.empty())
    throw std::invalid_argument("selecting split \"" + split_name + "\" needs a splits file");
  return load_split_assignment(splits_path);
}

}  // namespace

void run_localize(const RunConfig& cfg, const std::string& corpus_path,
                  const std::string& splits_path, const std::string& localizer_prefix,
                  const std::string& split_name, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  const std::map<std::string, Split> splits = load_splits_if_needed(splits_path, split_name);
  const LocalizerModel model = load_localizer(localizer_prefix);

  std::map<std::string, std::vector<BoundaryPrediction>> boundaries;
  ClipScoreMap clip_scores;
  int64_t frames_processed = 0;
  double elapsed = 0.0;
  for (const Video& v : corpus.videos) {
    if (!in_selected_split(splits, v.id, split_name)) continue;
    const InferResult inferred = infer_video(model, v, cfg.windowing, cfg.eval_threshold);
    boundaries[v.id] = inferred.boundaries;
    auto& scores = clip_scores[v.id];
    if (!inferred.too_short) {
      std::vector<ClipWindow> windows;
      windows.reserve(inferred.clips.size());
      for (const ClipPrediction& c : inferred.clips) windows.push_back(c.window);
      const std::vector<LabeledClip> labeled = label_clips(windows, v.chapters, cfg.windowing);
      for (size_t i = 0; i < labeled.size(); ++i)
        scores.emplace_back(inferred.clips[i].p, labeled[i].label);
    }
    frames_processed += inferred.frames_processed;
    elapsed += inferred.elapsed_s;
  }
  if (boundaries.empty()) throw std::invalid_argument("localize: no videos in split " + split_name);

  save_boundaries(paths.boundaries(), boundaries);
  write_meta_sibling(paths.boundaries(), cfg);
  save_clip_scores(paths.clip_scores(), clip_scores);
  write_meta_sibling(paths.clip_scores(), cfg);
  if (elapsed > 0.0)  // wallclock diagnostics stay off the deterministic outputs
    std::fprintf(stderr, "localize: %lld frames in %.3f s (%.0f fps)\n",
                 static_cast<long long>(frames_processed), elapsed,
                 static_cast<double>(frames_processed) / elapsed);
}

namespace {

Vocab build_train_vocab(const Corpus& corpus, const std::map<std::string, Split>& splits,
                        int cap) {
  std::vector<std::vector<std::string>> texts;
  for (const Video& v : corpus.videos) {
    const auto it = splits.find(v.id);
    if (it == splits.end() || it->second != Split::train) continue;
    for (const Chapter& ch : v.chapters) texts.push_back(ch.title);
    std::vector<std::string> words;
    for (const NarrationToken& t : v.narration) words.push_back(t.word);
    texts.push_back(std::move(words));
  }
  return build_vocab(texts, cap > 0 ? static_cast<size_t>(cap) : 0);
}

}  // namespace

TitlerTrainResult run_train_titler(const RunConfig& cfg, const std::string& corpus_path,
                                   const std::string& splits_path, const std::string& source,
                                   const std::string& boundaries_path,
                                   const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  const std::map<std::string, Split> splits = load_split_assignment(splits_path);
  std::map<std::string, std::vector<BoundaryPrediction>> boundaries;
  if (source == "predicted") {
    if (boundaries_path.empty())
      throw std::invalid_argument("train-titler: predicted source needs a boundaries file");
    boundaries = load_boundaries(boundaries_path);
  }

  TitlerModel model = init_titler(
      cfg.titler, build_train_vocab(corpus, splits, cfg.titler.vocab_cap), cfg.seed);
  const std::vector<ChapterSample> samples =
      build_chapter_samples(model, corpus, splits, Split::train, source, boundaries);
  const TitlerTrainResult result = train_titler(model, samples, cfg.titler_train);
  save_titler(paths.titler_prefix(), cfg, model, &result);
  return result;
}

namespace {

struct SpanInputs {
  int begin_s = 0;
  std::vector<std::string> ctx_words;
  Tensor visual;
};

// chapter spans for one video: each begin runs to the next begin (or the end)
std::vector<SpanInputs> make_span_inputs(const Video& video, const std::vector<int>& begins,
                                         const TitlerConfig& cfg) {
  std::vector<FrameFeature> scratch;
  const std::vector<FrameFeature>* frames = &video.frames;
  if (frames->empty() && video.frames_provider.has_value()) {
    scratch = provide(*video.frames_provider, video);
    frames = &scratch;
  }
  std::vector<SpanInputs> spans;
  for (size_t i = 0; i < begins.size(); ++i) {
    SpanInputs span;
    span.begin_s = begins[i];
    const int end = (i + 1 < begins.size()) ? begins[i + 1] : video.duration_s;
    span.ctx_words = narration_span_words(video, span.begin_s, end);
    std::vector<FrameFeature> in_span;
    for (const FrameFeature& f : *frames)
      if (f.time_s >= span.begin_s && f.time_s < end) in_span.push_back(f);
    std::sort(in_span.begin(), in_span.end(),
              [](const FrameFeature& a, const FrameFeature& b) { return a.time_s < b.time_s; });
    span.visual = in_span.empty() ? Tensor(cfg.m, cfg.p) : pool_chapter_visual(in_span, cfg.m);
    spans.push_back(std::move(span));
  }
  return spans;
}

std::vector<int> begins_for(const Video& video, const std::string& source,
                            const std::map<std::string, std::vector<BoundaryPrediction>>& boundaries,
                            bool* found) {
  std::vector<int> begins;
  if (source == "gt") {
    *found = true;
    for (const Chapter& ch : video.chapters) begins.push_back(ch.begin_s);
  } else {
    const auto it = boundaries.find(video.id);
    *found = it != boundaries.end();
    if (*found)
      for (const BoundaryPrediction& b : it->second) begins.push_back(b.begin_s);
    std::sort(begins.begin(), begins.end());
  }
  return begins;
}

void check_source(const std::string& source) {
  if (source != "gt" && source != "predicted")
    throw std::invalid_argument("source must be gt or predicted");
}

}  // namespace

void run_generate(const RunConfig& cfg, const std::string& corpus_path,
                  const std::string& splits_path, const std::string& titler_prefix,
                  const std::string& source, const std::string& boundaries_path,
                  const std::string& split_name, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  check_source(source);
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  const std::map<std::string, Split> splits = load_splits_if_needed(splits_path, split_name);
  const TitlerModel model = load_titler(titler_prefix);
  std::map<std::string, std::vector<BoundaryPrediction>> boundaries;
  if (source == "predicted") {
    if (boundaries_path.empty())
      throw std::invalid_argument("generate: predicted source needs a boundaries file");
    boundaries = load_boundaries(boundaries_path);
  }

  ChapterFile file;
  file.source = source;
  file.method = "model";
  for (const Video& v : corpus.videos) {
    if (!in_selected_split(splits, v.id, split_name)) continue;
    bool found = false;
    const std::vector<int> begins = begins_for(v, source, boundaries, &found);
    if (!found) continue;  // no prediction record: leave the video missing
    auto& out = file.titles[v.id];
    for (const SpanInputs& span : make_span_inputs(v, begins, model.config)) {
      GeneratedChapter ch;
      ch.begin_s = span.begin_s;
      ch.title = generate(model, span.ctx_words, span.visual);
      out.push_back(std::move(ch));
    }
  }
  if (file.titles.empty())
    throw std::invalid_argument("generate: no videos to title in split " + split_name);
  save_generated_chapters(paths.chapters(), file);
  write_meta_sibling(paths.chapters(), cfg);
}

void run_baseline(const RunConfig& cfg, const std::string& corpus_path,
                  const std::string& splits_path, const std::string& method,
                  const std::string& source, const std::string& boundaries_path,
                  const std::string& split_name, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  check_source(source);
  if (method != "random" && method != "lead" && method != "principal")
    throw std::invalid_argument("baseline: method must be random, lead or principal");
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  const std::map<std::string, Split> splits = load_splits_if_needed(splits_path, split_name);
  std::map<std::string, std::vector<BoundaryPrediction>> boundaries;
  if (source == "predicted") {
    if (boundaries_path.empty())
      throw std::invalid_argument("baseline: predicted source needs a boundaries file");
    boundaries = load_boundaries(boundaries_path);
  }

  ChapterFile file;
  file.source = source;
  file.method = method;
  for (const Video& v : corpus.videos) {
    if (!in_selected_split(splits, v.id, split_name)) continue;
    bool found = false;
    const std::vector<int> begins = begins_for(v, source, boundaries, &found);
    if (!found) continue;
    file.titles[v.id] = baseline_titles(v, begins, method, cfg.seed, cfg.baseline_stride_one);
  }
  if (file.titles.empty())
    throw std::invalid_argument("baseline: no videos to title in split " + split_name);
  save_generated_chapters(paths.chapters(), file);
  write_meta_sibling(paths.chapters(), cfg);
}

EvalReport run_evaluate(const RunConfig& cfg, const std::string& corpus_path,
                        const std::string& splits_path, const std::string& chapters_path,
                        const std::string& boundaries_path,
                        const std::string& clip_scores_path, const std::string& split_name,
                        const std::string& subset, const std::string& boundaries_mode,
                        const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  const std::map<std::string, Split> splits = load_splits_if_needed(splits_path, split_name);

  const ChapterFile chapters = load_generated_chapters(chapters_path);
  if (chapters.source != boundaries_mode)
    throw std::invalid_argument("evaluate: chapters file was generated from " + chapters.source +
                                " boundaries but evaluation asked for " + boundaries_mode);
  std::map<std::string, std::vector<BoundaryPrediction>> boundaries;
  if (!boundaries_path.empty()) boundaries = load_boundaries(boundaries_path);
  if (boundaries_mode == "predicted" && boundaries_path.empty())
    throw std::invalid_argument("evaluate: predicted mode needs a boundaries file");
  ClipScoreMap clip_scores;
  if (!clip_scores_path.empty()) clip_scores = load_clip_scores(clip_scores_path);

  Corpus view;
  view.split_assignment = splits;
  for (const Video& v : corpus.videos)
    if (in_selected_split(splits, v.id, split_name)) view.videos.push_back(v);
  if (view.videos.empty())
    throw std::invalid_argument("evaluate: no videos in split " + split_name);

  EvalOptions options;
  options.split_id = split_name;
  options.subset = subset;
  options.boundaries_mode = boundaries_mode;
  options.window_s = cfg.windowing.window_s;
  options.offset_s = cfg.windowing.offset_s;
  options.matched_recall = cfg.matched_recall;
  const EvalReport report =
      evaluate_pipeline(view, boundaries, chapters.titles, clip_scores, options);

  write_json_with_meta(paths.eval_json(), cfg,
                       ordered_json::parse(eval_report_to_json(report)));
  write_text_file(paths.eval_csv(), eval_report_to_csv(report));
  write_meta_sibling(paths.eval_csv(), cfg);
  return report;
}

void run_sweep(const RunConfig& cfg, const std::string& corpus_path,
               const std::string& splits_path, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  const Corpus corpus = load_corpus(corpus_path);
  const std::map<std::string, Split> splits = load_split_assignment(splits_path);

  std::ostringstream csv;
  csv << "window_s,tsm,modality,best_epoch,val_ap,val_recall\n";
  for (int k : cfg.sweep_window_sizes)
    for (int tsm : cfg.sweep_tsm)
      for (const std::string& modality : cfg.sweep_modalities) {
        const WindowingConfig wcfg = WindowingConfig::with_offset(k, cfg.windowing.offset_s);
        LocalizerConfig lcfg = cfg.localizer;
        lcfg.window_s = k;
        lcfg.use_tsm = tsm != 0;
        lcfg.modality = modality_from_string(modality);
        LocalizerModel model = init_localizer(lcfg, cfg.seed);
        const LocalizerTrainResult result =
            train_localizer(model, corpus, splits, wcfg, cfg.localizer_train);

        // recall over the validation split with the kept (best-epoch) model
        int64_t observable = 0, recovered = 0;
        for (const Video& v : corpus.videos) {
          const auto it = splits.find(v.id);
          if (it == splits.end() || it->second != Split::validation) continue;
          std::vector<int> gt;
          for (const Chapter& ch : v.chapters)
            if (ch.begin_s >= k / 2) gt.push_back(ch.begin_s);
          if (gt.empty()) continue;
          observable += static_cast<int64_t>(gt.size());
          const InferResult inferred = infer_video(model, v, wcfg, cfg.eval_threshold);
          std::vector<int> pred;
          for (const BoundaryPrediction& b : inferred.boundaries) pred.push_back(b.begin_s);
          if (!pred.empty())
            recovered += std::llround(recall_at(pred, gt, wcfg.offset_s, cfg.matched_recall) *
                                      static_cast<double>(gt.size()));
        }

        csv << k << ',' << tsm << ',' << modality << ',' << result.best_epoch << ',';
        if (!std::isnan(result.best_val_ap)) csv << result.best_val_ap;
        csv << ',';
        if (observable > 0)
          csv << (static_cast<double>(recovered) / static_cast<double>(observable));
        csv << '\n';
      }
  write_text_file(paths.sweep_csv(), csv.str());
  write_meta_sibling(paths.sweep_csv(), cfg);
}

namespace {

Tensor randt(int rows, int cols, Rng& rng, double scale = 0.7) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = scale * rng.next_normal();
  return t;
}

// keeps relu inputs away from the kink so central differences stay valid
Tensor randt_off_zero(int rows, int cols, Rng& rng) {
  Tensor t = randt(rows, cols, rng);
  for (double& v : t.data)
    if (std::abs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
  return t;
}

}  // namespace

GradCheckResult run_gradcheck(const RunConfig& cfg, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const OutPaths paths(out_dir);
  Rng rng(fold_seed(cfg.seed, "gradcheck"));
  GradCheckResult result;

  // mean of an elementwise product with fixed weights: touches every output
  // coordinate with a distinct sensitivity
  const auto weighted = [&rng](int rows, int cols, const std::function<Tape::NodeId(
                                                       Tape&, const std::vector<Tape::NodeId>&)>& body) {
    const Tensor w = randt(rows, cols, rng, 1.0);
    return [body, w](Tape& tape, const std::vector<Tape::NodeId>& ids) {
      return tape.mean_all(tape.multiply(body(tape, ids), tape.constant(w)));
    };
  };
  const auto add_check = [&result](const std::string& name, double err) {
    result.checks.emplace_back(name, err);
  };

  add_check("matmul", grad_check(
                          weighted(3, 2, [](Tape& t, const auto& ids) {
                            return t.matmul(ids[0], ids[1]);
                          }),
                          {randt(3, 4, rng), randt(4, 2, rng)}));
  add_check("matmul_transpose_a", grad_check(
                                      weighted(3, 2, [](Tape& t, const auto& ids) {
                                        return t.matmul(ids[0], ids[1], true, false);
                                      }),
                                      {randt(4, 3, rng), randt(4, 2, rng)}));
  add_check("matmul_transpose_b", grad_check(
                                      weighted(3, 2, [](Tape& t, const auto& ids) {
                                        return t.matmul(ids[0], ids[1], false, true);
                                      }),
                                      {randt(3, 4, rng), randt(2, 4, rng)}));
  add_check("add", grad_check(weighted(3, 4, [](Tape& t, const auto& ids) {
                                         return t.add(ids[0], ids[1]);
                                       }),
                                       {randt(3, 4, rng), randt(3, 4, rng)}));
  add_check("add_broadcast", grad_check(weighted(3, 4, [](Tape& t, const auto& ids) {
                                                   return t.add(ids[0], ids[1]);
                                                 }),
                                                 {randt(3, 4, rng), randt(1, 4, rng)}));
  add_check("multiply", grad_check(weighted(3, 4, [](Tape& t, const auto& ids) {
                                              return t.multiply(ids[0], ids[1]);
                                            }),
                                            {randt(3, 4, rng), randt(3, 4, rng)}));
  add_check("scale", grad_check(weighted(3, 4, [](Tape& t, const auto& ids) {
                                           return t.scale(ids[0], -1.7);
                                         }),
                                         {randt(3, 4, rng)}));
  add_check("softmax_rows", grad_check(weighted(3, 5, [](Tape& t, const auto& ids) {
                                                  return t.softmax_rows(ids[0]);
                                                }),
                                                {randt(3, 5, rng)}));
  add_check("sigmoid", grad_check(weighted(3, 4, [](Tape& t, const auto& ids) {
                                             return t.sigmoid(ids[0]);
                                           }),
                                           {randt(3, 4, rng)}));
  add_check("relu", grad_check(weighted(3, 4, [](Tape& t, const auto& ids) {
                                          return t.relu(ids[0]);
                                        }),
                                        {randt_off_zero(3, 4, rng)}));
  add_check("layer_norm",
            grad_check(weighted(3, 6, [](Tape& t, const auto& ids) {
                                  return t.layer_norm(ids[0], ids[1], ids[2]);
                                }),
                                {randt(3, 6, rng), randt(1, 6, rng), randt(1, 6, rng)}));
  add_check("embedding_gather",
            grad_check(weighted(5, 4, [](Tape& t, const auto& ids) {
                                  return t.embedding_gather(ids[0], {1, 3, 3, 6, 0});
                                }),
                                {randt(7, 4, rng)}));
  add_check("mean_axis0", grad_check(weighted(1, 3, [](Tape& t, const auto& ids) {
                                                return t.mean(ids[0], 0);
                                              }),
                                              {randt(4, 3, rng)}));
  add_check("mean_axis1", grad_check(weighted(4, 1, [](Tape& t, const auto& ids) {
                                                return t.mean(ids[0], 1);
                                              }),
                                              {randt(4, 3, rng)}));
  add_check("mean_all", grad_check(
                            [](Tape& t, const std::vector<Tape::NodeId>& ids) {
                              return t.mean_all(ids[0]);
                            },
                            {randt(3, 4, rng)}));
  add_check("concat_axis0", grad_check(weighted(6, 3, [](Tape& t, const auto& ids) {
                                                  return t.concat(ids[0], ids[1], 0);
                                                }),
                                                {randt(2, 3, rng), randt(4, 3, rng)}));
  add_check("concat_axis1", grad_check(weighted(3, 6, [](Tape& t, const auto& ids) {
                                                  return t.concat(ids[0], ids[1], 1);
                                                }),
                                                {randt(3, 2, rng), randt(3, 4, rng)}));
  add_check("cross_entropy_logits",
            grad_check(
                [](Tape& t, const std::vector<Tape::NodeId>& ids) {
                  return t.cross_entropy_logits(ids[0], {1, 4, -1, 2});
                },
                {randt(4, 6, rng)}));
  {
    Tensor labels(5, 1);
    for (int i = 0; i < 5; ++i) labels.at(i, 0) = (i % 2 == 0) ? 1.0 : 0.0;
    add_check("binary_cross_entropy",
              grad_check(
                  [labels](Tape& t, const std::vector<Tape::NodeId>& ids) {
                    return t.binary_cross_entropy(t.sigmoid(ids[0]), t.constant(labels));
                  },
                  {randt(5, 1, rng)}));
  }
  {
    std::vector<uint8_t> mask(12, 0);
    for (size_t i = 0; i < mask.size(); i += 3) mask[i] = 1;
    add_check("masked_fill",
              grad_check(weighted(3, 4,
                                           [mask](Tape& t, const auto& ids) {
                                             return t.masked_fill(ids[0], mask, -2.0);
                                           }),
                                  {randt(3, 4, rng)}));
  }
  add_check("temporal_shift", grad_check(weighted(6, 8, [](Tape& t, const auto& ids) {
                                                    return t.temporal_shift(ids[0], 0.25);
                                                  }),
                                                  {randt(6, 8, rng)}));

  {
    LocalizerConfig lcfg;
    lcfg.modality = Modality::visual_text;
    lcfg.d_v = 3;
    lcfg.vocab_size = 9;
    lcfg.d_t = 4;
    lcfg.hidden = 5;
    lcfg.use_tsm = true;
    lcfg.window_s = 4;
    lcfg.shift_fraction = 0.25;
    LocalizerModel model = init_localizer(lcfg, fold_seed(cfg.seed, "gradcheck-localizer"));
    ClipInputs clip;
    clip.visual = randt_off_zero(4, 3, rng);
    clip.tokens = {4, 7, 5};
    std::vector<Tensor> point;
    for (size_t i = 0; i < model.params.count(); ++i) point.push_back(model.params.at(i).value);
    add_check("localizer",
              grad_check(
                  [&model, &lcfg, &clip](Tape& tape, const std::vector<Tape::NodeId>& ids) {
                    BoundParams bound;
                    bound.ids = ids;
                    bound.store = &model.params;
                    const Tape::NodeId p = localizer_forward_graph(tape, bound, lcfg, clip);
                    return tape.binary_cross_entropy(p, tape.constant(Tensor::scalar(1.0)));
                  },
                  point));
  }

  add_check("fusion_cross",
            grad_check(
                weighted(3, 4,
                         [](Tape& t, const auto& ids) {
                           return fuse_graph(t, ids[0], ids[1], ids[2], ids[3], ids[4], false);
                         }),
                {randt(3, 4, rng), randt(2, 5, rng), randt(4, 4, rng), randt(5, 4, rng),
                 randt(5, 4, rng)}));
  add_check("fusion_cross_scaled",
            grad_check(
                weighted(3, 4,
                         [](Tape& t, const auto& ids) {
                           return fuse_graph(t, ids[0], ids[1], ids[2], ids[3], ids[4], true);
                         }),
                {randt(3, 4, rng), randt(2, 5, rng), randt(4, 4, rng), randt(5, 4, rng),
                 randt(5, 4, rng)}));
  add_check("fusion_concat",
            grad_check(
                weighted(3, 4,
                         [](Tape& t, const auto& ids) {
                           return fuse_concat_graph(t, ids[0], ids[1], ids[2], ids[3], ids[4],
                                                    ids[5]);
                         }),
                {randt(3, 4, rng), randt(2, 5, rng), randt(9, 4, rng), randt(1, 4, rng),
                 randt(4, 4, rng), randt(1, 4, rng)}));

  {
    TitlerConfig tcfg;
    tcfg.n_ctx = 4;
    tcfg.m = 2;
    tcfg.p = 3;
    tcfg.q = 8;
    tcfg.n_heads = 2;
    tcfg.enc_layers = 2;
    tcfg.dec_layers = 2;
    tcfg.ffn_dim = 8;
    tcfg.max_title_len = 4;
    const Vocab vocab = build_vocab({{"aa", "bb", "cc", "aa"}, {"dd", "bb"}});
    TitlerModel model = init_titler(tcfg, vocab, fold_seed(cfg.seed, "gradcheck-titler"));
    const std::vector<int> ctx = {4, 5, 6};
    const std::vector<int> dec = {1, 4, 7};
    const std::vector<int> targets = {4, 7, 2};
    const Tensor visual = randt(2, 3, rng);
    std::vector<Tensor> point;
    for (size_t i = 0; i < model.params.count(); ++i) point.push_back(model.params.at(i).value);
    add_check("titler",
              grad_check(
                  [&](Tape& tape, const std::vector<Tape::NodeId>& ids) {
                    BoundParams bound;
                    bound.ids = ids;
                    bound.store = &model.params;
                    const Tape::NodeId logits =
                        titler_logits_graph(tape, bound, tcfg, ctx, visual, dec);
                    return tape.cross_entropy_logits(logits, targets);
                  },
                  point));
  }

  result.worst = 0.0;
  for (const auto& [name, err] : result.checks) result.worst = std::max(result.worst, err);
  result.ok = result.worst <= 1e-4;

  ordered_json payload;
  payload["tolerance"] = 1e-4;
  payload["checks"] = ordered_json::array();
  for (const auto& [name, err] : result.checks) {
    ordered_json c;
    c["name"] = name;
    c["max_rel_err"] = err;
    payload["checks"].push_back(c);
  }
  payload["worst"] = result.worst;
  payload["pass"] = result.ok;
  write_json_with_meta(paths.gradcheck(), cfg, payload);
  return result;
}

}  // namespace vidchap
