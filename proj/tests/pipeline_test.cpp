#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "vidchap/pipeline.hpp"

using namespace vidchap;
using nlohmann::ordered_json;

namespace {

std::string fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "vidchap_pipeline_test" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

RunConfig tiny_config() {
  return run_config_from_json(ordered_json::parse(R"({
    "seed": 5,
    "windowing": {"window_s": 8, "offset_s": 2},
    "localizer": {"d_v": 4, "vocab_size": 64, "d_t": 6, "hidden": 8},
    "localizer_train": {"epochs": 2, "batch_size": 16},
    "titler": {"n_ctx": 8, "m": 2, "p": 4, "q": 8, "n_heads": 2,
               "ffn_dim": 8, "max_title_len": 4},
    "titler_train": {"epochs": 2, "batch_size": 4},
    "split": {"train": 0.5, "validation": 0.25, "test": 0.25},
    "synth": {"n_videos": 8, "duration_min_s": 100, "duration_max_s": 140,
              "chapters_min": 3, "chapters_max": 4, "d_v": 4, "signal": 3.0}
  })"));
}

// one full pass through every chained stage, into its own directory
void run_chain(const RunConfig& cfg, const std::string& dir) {
  const OutPaths paths(dir);
  run_synth(cfg, dir);
  run_stats(cfg, paths.corpus(), dir);
  run_split(cfg, paths.corpus(), dir);
  run_train_localizer(cfg, paths.corpus(), paths.splits(), dir);
  run_localize(cfg, paths.corpus(), paths.splits(), paths.localizer_prefix(), "validation",
               dir);
  run_train_titler(cfg, paths.corpus(), paths.splits(), "gt", "", dir);
  run_generate(cfg, paths.corpus(), paths.splits(), paths.titler_prefix(), "gt", "",
               "validation", dir);
  run_evaluate(cfg, paths.corpus(), paths.splits(), paths.chapters(), "",
               paths.clip_scores(), "validation", "all", "gt", dir);
}

}  // namespace

TEST_CASE("the full pipeline chains and reruns byte-identically") {
  const RunConfig cfg = tiny_config();

  const std::string dir_a = fresh_dir("chain_a");
  run_chain(cfg, dir_a);
  const OutPaths paths(dir_a);

  // every stage left its artifact behind
  for (const std::string& p :
       {paths.corpus(), paths.stats(), paths.splits(), paths.localizer_prefix() + ".ckpt",
        paths.localizer_prefix() + ".json", paths.boundaries(), paths.clip_scores(),
        paths.titler_prefix() + ".ckpt", paths.titler_prefix() + ".json", paths.chapters(),
        paths.eval_json(), paths.eval_csv()})
    CHECK(std::filesystem::exists(p));

  // the split covers all eight videos with the configured fractions
  const auto splits = load_split_assignment(paths.splits());
  CHECK(splits.size() == 8);
  int n_train = 0, n_val = 0, n_test = 0;
  for (const auto& [id, s] : splits) {
    if (s == Split::train) ++n_train;
    if (s == Split::validation) ++n_val;
    if (s == Split::test) ++n_test;
  }
  CHECK(n_train == 4);
  CHECK(n_val == 2);
  CHECK(n_test == 2);

  // localization covered exactly the validation videos
  const auto boundaries = load_boundaries(paths.boundaries());
  CHECK(boundaries.size() == 2);
  const Corpus corpus = load_corpus(paths.corpus());
  for (const auto& [id, preds] : boundaries) {
    CHECK(splits.at(id) == Split::validation);
    for (const BoundaryPrediction& b : preds) {
      CHECK(b.begin_s >= 0);
      bool found = false;
      for (const Video& v : corpus.videos)
        if (v.id == id) {
          CHECK(b.begin_s < v.duration_s);
          found = true;
        }
      CHECK(found);
    }
  }

  // generated chapters exist for the same validation videos
  const ChapterFile chapters = load_generated_chapters(paths.chapters());
  CHECK(chapters.source == "gt");
  CHECK(chapters.method == "model");
  CHECK(chapters.titles.size() == 2);
  for (const auto& [id, chs] : chapters.titles) {
    CHECK(splits.at(id) == Split::validation);
    CHECK(!chs.empty());  // gt spans always exist
    for (const GeneratedChapter& ch : chs)
      CHECK(static_cast<int>(ch.title.size()) <= cfg.titler.max_title_len);
  }

  // the evaluation report parses and carries the meta block
  const ordered_json eval = ordered_json::parse(read_text_file(paths.eval_json()));
  CHECK(eval.at("meta").at("config_hash").get<std::string>() == config_hash(cfg));
  CHECK(eval.at("counts").at("videos").get<int>() == 2);

  // a rerun of the identical chain in a new directory matches byte for byte
  const std::string dir_b = fresh_dir("chain_b");
  run_chain(cfg, dir_b);
  const OutPaths paths_b(dir_b);
  CHECK(read_text_file(paths_b.eval_json()) == read_text_file(paths.eval_json()));
  CHECK(read_text_file(paths_b.corpus()) == read_text_file(paths.corpus()));
  CHECK(read_text_file(paths_b.boundaries()) == read_text_file(paths.boundaries()));
  CHECK(read_text_file(paths_b.chapters()) == read_text_file(paths.chapters()));

  // predicted-source generation pairs spans from the boundary file
  run_generate(cfg, paths.corpus(), paths.splits(), paths.titler_prefix(), "predicted",
               paths.boundaries(), "validation", dir_a);
  const ChapterFile predicted = load_generated_chapters(paths.chapters());
  CHECK(predicted.source == "predicted");
  for (const auto& [id, chs] : predicted.titles) {
    const auto& preds = boundaries.at(id);
    REQUIRE(chs.size() == preds.size());
    for (size_t i = 0; i < chs.size(); ++i) CHECK(chs[i].begin_s == preds[i].begin_s);
  }
  run_evaluate(cfg, paths.corpus(), paths.splits(), paths.chapters(), paths.boundaries(),
               "", "validation", "all", "predicted", dir_a);
  CHECK(std::filesystem::exists(paths.eval_json()));

  // mode mismatches between chapter files and evaluation are rejected
  CHECK_THROWS_AS(run_evaluate(cfg, paths.corpus(), paths.splits(), paths.chapters(), "",
                               "", "validation", "all", "gt", dir_a),
                  std::invalid_argument);
}

TEST_CASE("baseline titling runs for every method") {
  const RunConfig cfg = tiny_config();
  const std::string data = fresh_dir("baseline_data");
  const OutPaths src(data);
  run_synth(cfg, data);
  run_split(cfg, src.corpus(), data);

  for (const std::string method : {"random", "lead", "principal"}) {
    const std::string dir = fresh_dir("baseline_" + method);
    const OutPaths paths(dir);
    run_baseline(cfg, src.corpus(), src.splits(), method, "gt", "", "validation", dir);
    const ChapterFile file = load_generated_chapters(paths.chapters());
    CHECK(file.method == method);
    CHECK(file.source == "gt");
    CHECK(file.titles.size() == 2);
    for (const auto& [id, chs] : file.titles)
      for (const GeneratedChapter& ch : chs) CHECK(ch.title.size() <= 10);

    run_evaluate(cfg, src.corpus(), src.splits(), paths.chapters(), "", "", "validation",
                 "all", "gt", dir);
    const ordered_json eval = ordered_json::parse(read_text_file(paths.eval_json()));
    CHECK(eval.at("counts").at("videos").get<int>() == 2);
  }

  CHECK_THROWS_AS(run_baseline(cfg, src.corpus(), src.splits(), "oracle", "gt", "",
                               "validation", fresh_dir("baseline_bad")),
                  std::invalid_argument);
}

TEST_CASE("ingestion parses, filters and reports rejections") {
  const RunConfig cfg = tiny_config();
  const std::string dir = fresh_dir("ingest");
  const std::string desc_path = dir + "/descriptions.jsonl";

  std::ostringstream desc;
  desc << R"({"id": "good", "duration_s": 300, "description": "0:00 intro part\n2:30 main part", "difficulty": "easy", "narration": [[5, "mix"]]})"
       << "\n";
  desc << R"({"id": "one-line", "duration_s": 300, "description": "0:00 only chapter"})"
       << "\n";
  desc << R"({"id": "backwards", "duration_s": 300, "description": "0:00 a b\n0:30 c d\n0:10 e f"})"
       << "\n";
  desc << R"({"id": "tiny", "duration_s": 90, "description": "0:00 first bit\n0:30 second bit"})"
       << "\n";
  desc << R"({"id": "marathon", "duration_s": 2000, "description": "0:00 first leg\n10:00 second leg"})"
       << "\n";
  write_text_file(desc_path, desc.str());

  const IngestResult counts = run_ingest(cfg, desc_path, dir);
  CHECK(counts.read == 5);
  CHECK(counts.parse_failed == 2);
  CHECK(counts.filtered == 2);
  CHECK(counts.kept == 1);

  const OutPaths paths(dir);
  const Corpus corpus = load_corpus(paths.corpus());
  REQUIRE(corpus.videos.size() == 1);
  const Video& v = corpus.videos.front();
  CHECK(v.id == "good");
  CHECK(v.difficulty == Difficulty::easy);
  REQUIRE(v.chapters.size() == 2);
  CHECK(v.chapters[0].begin_s == 0);
  CHECK(v.chapters[0].title == std::vector<std::string>{"intro", "part"});
  CHECK(v.chapters[1].begin_s == 150);
  REQUIRE(v.narration.size() == 1);
  CHECK(v.narration[0].word == "mix");

  const ordered_json report = ordered_json::parse(read_text_file(paths.rejections()));
  std::map<std::string, std::string> reasons;
  for (const ordered_json& r : report.at("rejected"))
    reasons[r.at("id").get<std::string>()] = r.at("reason").get<std::string>();
  REQUIRE(reasons.size() == 4);
  CHECK(reasons.at("one-line") == "parse-too-few");
  CHECK(reasons.at("backwards") == "parse-non-monotone");
  CHECK(reasons.at("tiny") == "too-short");
  CHECK(reasons.at("marathon") == "too-long");

  // malformed records fail loudly instead of slipping through
  write_text_file(desc_path, R"({"id": "x", "duration_s": 300})" + std::string("\n"));
  CHECK_THROWS(run_ingest(cfg, desc_path, dir));
  write_text_file(desc_path,
                  R"({"id": "x", "duration_s": 300, "description": "0:00 a\n1:00 b", "extra": 1})" +
                      std::string("\n"));
  CHECK_THROWS(run_ingest(cfg, desc_path, dir));
}

TEST_CASE("the window sweep writes one row per grid cell") {
  RunConfig cfg = tiny_config();
  cfg.sweep_window_sizes = {8};
  cfg.sweep_tsm = {1, 0};
  cfg.sweep_modalities = {"visual"};

  const std::string dir = fresh_dir("sweep");
  const OutPaths paths(dir);
  run_synth(cfg, dir);
  run_split(cfg, paths.corpus(), dir);
  run_sweep(cfg, paths.corpus(), paths.splits(), dir);

  const std::string csv = read_text_file(paths.sweep_csv());
  std::istringstream lines(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 3);  // header + 2 cells
  CHECK(rows[0] == "window_s,tsm,modality,best_epoch,val_ap,val_recall");
  CHECK(rows[1].substr(0, 11) == "8,1,visual,");
  CHECK(rows[2].substr(0, 11) == "8,0,visual,");
}

TEST_CASE("the gradient check audit passes and persists its worst error") {
  const RunConfig cfg = tiny_config();
  const std::string dir = fresh_dir("gradcheck");
  const GradCheckResult result = run_gradcheck(cfg, dir);
  CHECK(result.ok);
  CHECK(result.worst <= 1e-4);
  CHECK(!result.checks.empty());
  for (const auto& [name, err] : result.checks) {
    CHECK(!name.empty());
    CHECK(err <= 1e-4);
  }

  const OutPaths paths(dir);
  const ordered_json doc = ordered_json::parse(read_text_file(paths.gradcheck()));
  CHECK(doc.at("pass").get<bool>());
  CHECK(doc.at("worst").get<double>() == result.worst);
  CHECK(doc.at("checks").size() == result.checks.size());
}

TEST_CASE("stage input validation fails fast") {
  const RunConfig cfg = tiny_config();
  const std::string dir = fresh_dir("validation");
  const OutPaths paths(dir);
  run_synth(cfg, dir);
  run_split(cfg, paths.corpus(), dir);

  CHECK_THROWS(run_stats(cfg, dir + "/missing.jsonl", dir));
  CHECK_THROWS(run_localize(cfg, paths.corpus(), paths.splits(), dir + "/no_model",
                            "validation", dir));
  CHECK_THROWS_AS(run_train_titler(cfg, paths.corpus(), paths.splits(), "predicted", "",
                                   dir),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_train_titler(cfg, paths.corpus(), paths.splits(), "oracle", "", dir),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_localize(cfg, paths.corpus(), paths.splits(), paths.localizer_prefix(),
                               "weekend", dir),
                  std::invalid_argument);
}
