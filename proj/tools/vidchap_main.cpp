#include <cmath>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "vidchap/kernels.hpp"
#include "vidchap/pipeline.hpp"

namespace {

using nlohmann::ordered_json;
using namespace vidchap;

struct CommonArgs {
  std::string config_path;
  long long seed = -1;  // negative: keep the configured seed
  std::string out = "out";
  bool serial = false;
};

RunConfig effective_config(const CommonArgs& args) {
  RunConfig cfg =
      args.config_path.empty() ? RunConfig{} : load_run_config(args.config_path);
  if (args.seed >= 0) {
    cfg.seed = static_cast<uint64_t>(args.seed);
    cfg.localizer_train.seed = cfg.seed;
    cfg.titler_train.seed = cfg.seed;
    cfg.synth.seed = cfg.seed;
  }
  return cfg;
}

void print_line(const ordered_json& j) { std::printf("%s\n", j.dump().c_str()); }

ordered_json number_or_null(double v) {
  return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video chapter generation toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string descriptions, corpus, splits, checkpoint, boundaries_file, chapters, clips;
  std::string split_name = "test", subset = "all", boundaries_mode = "gt", method;
  std::string active;
  int rc = 0;

  const auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "run configuration JSON");
    sub->add_option("--seed", common.seed, "override the configured seed")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--out", common.out, "output directory (default: out)");
    sub->add_flag("--serial", common.serial,
                  "run the serial reference kernels (outputs are identical)");
    return sub;
  };
  const auto begin = [&](const char* name) {
    active = name;
    kernels::set_parallel(!common.serial);
    return effective_config(common);
  };

  auto* synth = add_common(app.add_subcommand("synth", "generate a synthetic corpus"));
  synth->callback([&] {
    const RunConfig cfg = begin("synth");
    run_synth(cfg, common.out);
    print_line({{"command", "synth"}, {"corpus", OutPaths(common.out).corpus()}});
  });

  auto* ingest =
      add_common(app.add_subcommand("ingest", "parse raw video descriptions into a corpus"));
  ingest->add_option("--descriptions", descriptions, "raw descriptions JSONL")->required();
  ingest->callback([&] {
    const RunConfig cfg = begin("ingest");
    const IngestResult r = run_ingest(cfg, descriptions, common.out);
    print_line({{"command", "ingest"},
                {"read", r.read},
                {"parse_failed", r.parse_failed},
                {"filtered", r.filtered},
                {"kept", r.kept},
                {"corpus", OutPaths(common.out).corpus()}});
  });

  auto* stats = add_common(app.add_subcommand("stats", "summarize a corpus"));
  stats->add_option("--corpus", corpus, "corpus JSONL")->required();
  stats->callback([&] {
    const RunConfig cfg = begin("stats");
    run_stats(cfg, corpus, common.out);
    print_line({{"command", "stats"}, {"stats", OutPaths(common.out).stats()}});
  });

  auto* split = add_common(app.add_subcommand("split", "assign videos to train/validation/test"));
  split->add_option("--corpus", corpus, "corpus JSONL")->required();
  split->callback([&] {
    const RunConfig cfg = begin("split");
    run_split(cfg, corpus, common.out);
    print_line({{"command", "split"}, {"splits", OutPaths(common.out).splits()}});
  });

  auto* train_loc =
      add_common(app.add_subcommand("train-localizer", "train the boundary localizer"));
  train_loc->add_option("--corpus", corpus, "corpus JSONL")->required();
  train_loc->add_option("--splits", splits, "split assignment JSON")->required();
  train_loc->callback([&] {
    const RunConfig cfg = begin("train-localizer");
    const LocalizerTrainResult r = run_train_localizer(cfg, corpus, splits, common.out);
    print_line({{"command", "train-localizer"},
                {"epochs", r.curve.size()},
                {"best_epoch", r.best_epoch},
                {"best_val_ap", number_or_null(r.best_val_ap)},
                {"checkpoint", OutPaths(common.out).localizer_prefix()}});
  });

  auto* localize_cmd =
      add_common(app.add_subcommand("localize", "predict chapter boundaries for a split"));
  localize_cmd->add_option("--corpus", corpus, "corpus JSONL")->required();
  localize_cmd->add_option("--splits", splits, "split assignment JSON");
  localize_cmd->add_option("--checkpoint", checkpoint, "localizer checkpoint prefix")->required();
  localize_cmd->add_option("--split", split_name, "train|validation|test|all (default: test)");
  localize_cmd->callback([&] {
    const RunConfig cfg = begin("localize");
    run_localize(cfg, corpus, splits, checkpoint, split_name, common.out);
    print_line({{"command", "localize"},
                {"boundaries", OutPaths(common.out).boundaries()},
                {"clip_scores", OutPaths(common.out).clip_scores()}});
  });

  auto* train_tit = add_common(app.add_subcommand("train-titler", "train the title generator"));
  train_tit->add_option("--corpus", corpus, "corpus JSONL")->required();
  train_tit->add_option("--splits", splits, "split assignment JSON")->required();
  train_tit->add_option("--boundaries", boundaries_mode, "chapter spans: gt|predicted")
      ->check(CLI::IsMember({"gt", "predicted"}));
  train_tit->add_option("--boundaries-file", boundaries_file,
                        "boundary predictions JSONL (with --boundaries predicted)");
  train_tit->callback([&] {
    const RunConfig cfg = begin("train-titler");
    const TitlerTrainResult r =
        run_train_titler(cfg, corpus, splits, boundaries_mode, boundaries_file, common.out);
    print_line({{"command", "train-titler"},
                {"epochs", r.curve.size()},
                {"final_train_rouge1", number_or_null(r.final_train_rouge1)},
                {"checkpoint", OutPaths(common.out).titler_prefix()}});
  });

  auto* generate_cmd =
      add_common(app.add_subcommand("generate", "generate chapter titles for a split"));
  generate_cmd->add_option("--corpus", corpus, "corpus JSONL")->required();
  generate_cmd->add_option("--splits", splits, "split assignment JSON");
  generate_cmd->add_option("--checkpoint", checkpoint, "titler checkpoint prefix")->required();
  generate_cmd->add_option("--boundaries", boundaries_mode, "chapter spans: gt|predicted")
      ->check(CLI::IsMember({"gt", "predicted"}));
  generate_cmd->add_option("--boundaries-file", boundaries_file,
                           "boundary predictions JSONL (with --boundaries predicted)");
  generate_cmd->add_option("--split", split_name, "train|validation|test|all (default: test)");
  generate_cmd->callback([&] {
    const RunConfig cfg = begin("generate");
    run_generate(cfg, corpus, splits, checkpoint, boundaries_mode, boundaries_file, split_name,
                 common.out);
    print_line({{"command", "generate"}, {"chapters", OutPaths(common.out).chapters()}});
  });

  auto* baseline_cmd =
      add_common(app.add_subcommand("baseline", "run a heuristic titling baseline"));
  baseline_cmd->add_option("--corpus", corpus, "corpus JSONL")->required();
  baseline_cmd->add_option("--splits", splits, "split assignment JSON");
  baseline_cmd->add_option("--method", method, "random|lead|principal")
      ->required()
      ->check(CLI::IsMember({"random", "lead", "principal"}));
  baseline_cmd->add_option("--boundaries", boundaries_mode, "chapter spans: gt|predicted")
      ->check(CLI::IsMember({"gt", "predicted"}));
  baseline_cmd->add_option("--boundaries-file", boundaries_file,
                           "boundary predictions JSONL (with --boundaries predicted)");
  baseline_cmd->add_option("--split", split_name, "train|validation|test|all (default: test)");
  baseline_cmd->callback([&] {
    const RunConfig cfg = begin("baseline");
    run_baseline(cfg, corpus, splits, method, boundaries_mode, boundaries_file, split_name,
                 common.out);
    print_line({{"command", "baseline"}, {"chapters", OutPaths(common.out).chapters()}});
  });

  auto* evaluate_cmd =
      add_common(app.add_subcommand("evaluate", "score generated chapters against a corpus"));
  evaluate_cmd->add_option("--corpus", corpus, "corpus JSONL")->required();
  evaluate_cmd->add_option("--splits", splits, "split assignment JSON");
  evaluate_cmd->add_option("--chapters", chapters, "generated chapters JSONL")->required();
  evaluate_cmd->add_option("--boundaries", boundaries_mode, "gt|predicted")
      ->check(CLI::IsMember({"gt", "predicted"}));
  evaluate_cmd->add_option("--boundaries-file", boundaries_file,
                           "boundary predictions JSONL (with --boundaries predicted)");
  evaluate_cmd->add_option("--clips", clips, "per-clip scores JSONL, enables AP");
  evaluate_cmd->add_option("--split", split_name, "train|validation|test|all (default: test)");
  evaluate_cmd->add_option("--subset", subset, "all|easy|hard (default: all)")
      ->check(CLI::IsMember({"all", "easy", "hard"}));
  evaluate_cmd->callback([&] {
    const RunConfig cfg = begin("evaluate");
    const EvalReport r = run_evaluate(cfg, corpus, splits, chapters, boundaries_file, clips,
                                      split_name, subset, boundaries_mode, common.out);
    print_line({{"command", "evaluate"},
                {"ap", r.has_ap ? ordered_json(r.ap) : ordered_json(nullptr)},
                {"recall", r.recall},
                {"rouge1_f1", r.rouge_1.f1},
                {"report", OutPaths(common.out).eval_json()}});
  });

  auto* sweep_cmd =
      add_common(app.add_subcommand("sweep", "train localizers over a small config grid"));
  sweep_cmd->add_option("--corpus", corpus, "corpus JSONL")->required();
  sweep_cmd->add_option("--splits", splits, "split assignment JSON")->required();
  sweep_cmd->callback([&] {
    const RunConfig cfg = begin("sweep");
    run_sweep(cfg, corpus, splits, common.out);
    print_line({{"command", "sweep"}, {"csv", OutPaths(common.out).sweep_csv()}});
  });

  auto* gradcheck_cmd =
      add_common(app.add_subcommand("gradcheck", "finite-difference check of every gradient"));
  gradcheck_cmd->callback([&] {
    const RunConfig cfg = begin("gradcheck");
    const GradCheckResult g = run_gradcheck(cfg, common.out);
    print_line({{"command", "gradcheck"},
                {"checks", g.checks.size()},
                {"worst", g.worst},
                {"pass", g.ok},
                {"report", OutPaths(common.out).gradcheck()}});
    if (!g.ok) rc = 1;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0)
      print_line({{"command", active}, {"error", e.what() ? e.what() : e.get_name()}});
    return app.exit(e);
  } catch (const std::exception& e) {
    print_line({{"command", active}, {"error", e.what()}});
    return 1;
  }
  return rc;
}
