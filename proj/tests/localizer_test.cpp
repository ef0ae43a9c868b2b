#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "vidchap/corpus.hpp"
#include "vidchap/localizer.hpp"
#include "vidchap/metrics.hpp"
#include "vidchap/rng.hpp"
#include "vidchap/windowing.hpp"

using namespace vidchap;

namespace {

LocalizerConfig small_config(Modality m, bool tsm) {
  LocalizerConfig cfg;
  cfg.modality = m;
  cfg.d_v = 4;
  cfg.vocab_size = 64;
  cfg.d_t = 6;
  cfg.hidden = 8;
  cfg.use_tsm = tsm;
  cfg.window_s = 8;
  return cfg;
}

void randomize_params(LocalizerModel& model, uint64_t seed) {
  Rng rng(seed);
  for (size_t i = 0; i < model.params.count(); ++i)
    for (double& v : model.params.at(i).value.data) v = 0.3 * rng.next_normal();
}

ClipInputs random_clip(const LocalizerConfig& cfg, uint64_t seed, int n_tokens) {
  Rng rng(seed);
  ClipInputs clip;
  clip.visual = Tensor(cfg.window_s, cfg.d_v);
  for (double& v : clip.visual.data) v = rng.next_normal();
  for (int i = 0; i < n_tokens; ++i)
    clip.tokens.push_back(4 + static_cast<int>(rng.next_below(cfg.vocab_size - 4)));
  return clip;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string tmp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "vidchap_localizer_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

Corpus tiny_synth(uint64_t seed) {
  SynthSpec spec;
  spec.n_videos = 4;
  spec.duration_min_s = 100;
  spec.duration_max_s = 130;
  spec.chapters_min = 3;
  spec.chapters_max = 4;
  spec.d_v = 4;
  spec.signal = 3.0;
  spec.seed = seed;
  return generate_synthetic_corpus(spec);
}

}  // namespace

TEST_CASE("a freshly initialized classifier outputs exactly one half") {
  for (const Modality m : {Modality::visual, Modality::text, Modality::visual_text}) {
    for (const bool tsm : {false, true}) {
      const LocalizerConfig cfg = small_config(m, tsm);
      const LocalizerModel model = init_localizer(cfg, 11);
      for (uint64_t s = 0; s < 4; ++s) {
        const ClipInputs clip = random_clip(cfg, 100 + s, static_cast<int>(s));
        CHECK(forward_probability(model, clip) == 0.5);
      }
    }
  }
}

TEST_CASE("initial training loss is the entropy of a fair coin") {
  const LocalizerConfig cfg = small_config(Modality::visual_text, true);
  const LocalizerModel model = init_localizer(cfg, 3);
  const ClipInputs clip = random_clip(cfg, 5, 3);

  Tape tape;
  const BoundParams bound = bind_params(tape, model.params);
  const auto p = localizer_forward_graph(tape, bound, cfg, clip);
  const auto loss = tape.binary_cross_entropy(p, tape.constant(Tensor::scalar(1.0)));
  CHECK(tape.value(loss).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("the visual-only model ignores narration tokens") {
  const LocalizerConfig cfg = small_config(Modality::visual, false);
  LocalizerModel model = init_localizer(cfg, 4);
  randomize_params(model, 40);

  ClipInputs a = random_clip(cfg, 6, 0);
  ClipInputs b = a;
  b.tokens = {4, 10, 63};
  CHECK(forward_probability(model, a) == forward_probability(model, b));
  CHECK(forward_probability(model, a) != 0.5);  // params are no longer zero-headed
}

TEST_CASE("the text-only model ignores visual frames") {
  const LocalizerConfig cfg = small_config(Modality::text, false);
  LocalizerModel model = init_localizer(cfg, 5);
  randomize_params(model, 41);

  ClipInputs a = random_clip(cfg, 7, 5);
  ClipInputs b = a;
  for (double& v : b.visual.data) v += 2.5;
  CHECK(forward_probability(model, a) == forward_probability(model, b));
}

TEST_CASE("without the temporal shift the model cannot see frame order") {
  const LocalizerConfig cfg = small_config(Modality::visual, false);
  LocalizerModel model = init_localizer(cfg, 6);
  randomize_params(model, 42);

  ClipInputs clip = random_clip(cfg, 8, 0);
  const double before = forward_probability(model, clip);

  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    ClipInputs shuffled = clip;
    std::vector<int> order(cfg.window_s);
    for (int i = 0; i < cfg.window_s; ++i) order[i] = i;
    rng.shuffle(order);
    for (int r = 0; r < cfg.window_s; ++r)
      for (int c = 0; c < cfg.d_v; ++c)
        shuffled.visual.at(r, c) = clip.visual.at(order[r], c);
    CHECK(forward_probability(model, shuffled) == doctest::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("with the temporal shift frame order matters") {
  LocalizerConfig cfg = small_config(Modality::visual, true);
  cfg.shift_fraction = 0.25;  // floor(4 * 1/8) would shift zero channels
  LocalizerModel model = init_localizer(cfg, 6);
  randomize_params(model, 42);

  ClipInputs clip = random_clip(cfg, 8, 0);
  ClipInputs reversed = clip;
  for (int r = 0; r < cfg.window_s; ++r)
    for (int c = 0; c < cfg.d_v; ++c)
      reversed.visual.at(r, c) = clip.visual.at(cfg.window_s - 1 - r, c);
  CHECK(forward_probability(model, clip) !=
        doctest::Approx(forward_probability(model, reversed)).epsilon(1e-9));
}

TEST_CASE("the inference forward matches the training graph bit for bit") {
  for (const Modality m : {Modality::visual, Modality::text, Modality::visual_text}) {
    for (const bool tsm : {false, true}) {
      const LocalizerConfig cfg = small_config(m, tsm);
      LocalizerModel model = init_localizer(cfg, 12);
      randomize_params(model, 120);
      for (uint64_t s = 0; s < 3; ++s) {
        const ClipInputs clip = random_clip(cfg, 200 + s, 2 + static_cast<int>(s));
        Tape tape;
        const BoundParams bound = bind_params(tape, model.params);
        const auto p = localizer_forward_graph(tape, bound, cfg, clip);
        CHECK(tape.value(p).item() == forward_probability(model, clip));
      }
    }
  }
}

TEST_CASE("gradients reach every parameter of the fused model") {
  const LocalizerConfig cfg = small_config(Modality::visual_text, true);
  LocalizerModel model = init_localizer(cfg, 13);
  randomize_params(model, 130);
  const ClipInputs clip = random_clip(cfg, 9, 4);

  Tape tape;
  const BoundParams bound = bind_params(tape, model.params);
  const auto p = localizer_forward_graph(tape, bound, cfg, clip);
  tape.backward(tape.binary_cross_entropy(p, tape.constant(Tensor::scalar(1.0))));

  int nonzero_params = 0;
  for (size_t i = 0; i < model.params.count(); ++i) {
    REQUIRE(tape.has_grad(bound.ids[i]));
    const Tensor& g = tape.grad(bound.ids[i]);
    const bool any = std::any_of(g.data.begin(), g.data.end(),
                                 [](double v) { return v != 0.0; });
    if (any) ++nonzero_params;
  }
  // the embedding table only receives gradient on gathered rows, but every
  // parameter tensor should get some signal from a generic input
  CHECK(nonzero_params == static_cast<int>(model.params.count()));
}

TEST_CASE("token buckets stay inside the non-reserved id range") {
  const int vocab = 97;
  std::set<int> seen;
  for (const std::string w :
       {"whisk", "fold", "bake", "rest", "serve", "a", "b", "c", "dough", "oven"}) {
    const int id = token_bucket(w, vocab);
    CHECK(id >= 4);
    CHECK(id < vocab);
    CHECK(token_bucket(w, vocab) == id);  // stable
    seen.insert(id);
  }
  CHECK(seen.size() > 1);  // not everything collides
}

TEST_CASE("clip gathering pads missing seconds and windows narration") {
  LocalizerConfig cfg = small_config(Modality::visual_text, false);
  cfg.window_s = 4;

  Video video;
  video.id = "clip-test";
  video.duration_s = 10;
  for (int t = 0; t < 5; ++t) {
    FrameFeature f;
    f.time_s = t;
    f.values = {1.0 + t, 2.0 + t, 3.0 + t, 4.0 + t};
    video.frames.push_back(f);
  }
  video.narration = {{1, "early"}, {3, "inside"}, {5, "late"}, {9, "outside"}};

  const ClipInputs clip = gather_clip(video, video.frames, 3, cfg);
  REQUIRE(clip.visual.n_rows == 4);
  REQUIRE(clip.visual.n_cols == 4);
  // seconds 3 and 4 have frames; 5 and 6 do not
  CHECK(clip.visual.at(0, 0) == 4.0);
  CHECK(clip.visual.at(1, 0) == 5.0);
  for (int c = 0; c < 4; ++c) {
    CHECK(clip.visual.at(2, c) == 0.0);
    CHECK(clip.visual.at(3, c) == 0.0);
  }
  // tokens at seconds 3..6 only
  REQUIRE(clip.tokens.size() == 2);
  CHECK(clip.tokens[0] == token_bucket("inside", cfg.vocab_size));
  CHECK(clip.tokens[1] == token_bucket("late", cfg.vocab_size));
}

TEST_CASE("training with a zero learning rate leaves the model untouched") {
  const Corpus corpus = tiny_synth(50);
  std::map<std::string, Split> split;
  for (const Video& v : corpus.videos) split[v.id] = Split::train;

  LocalizerConfig cfg = small_config(Modality::visual_text, true);
  LocalizerModel model = init_localizer(cfg, 14);
  std::vector<std::vector<double>> before;
  for (size_t i = 0; i < model.params.count(); ++i)
    before.push_back(model.params.at(i).value.data);

  WindowingConfig wcfg;
  wcfg.window_s = 8;
  wcfg.offset_s = 2;
  wcfg.stride_s = 4;

  LocalizerTrainConfig tcfg;
  tcfg.base_lr = 0.0;
  tcfg.epochs = 2;
  tcfg.seed = 15;

  const LocalizerTrainResult result = train_localizer(model, corpus, split, wcfg, tcfg);
  REQUIRE(result.curve.size() == 2);
  for (const LocalizerEpochStats& e : result.curve)
    CHECK(e.train_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  for (size_t i = 0; i < model.params.count(); ++i)
    CHECK(model.params.at(i).value.data == before[i]);
}

TEST_CASE("training is deterministic under its seed") {
  const Corpus corpus = tiny_synth(51);
  std::map<std::string, Split> split;
  for (size_t i = 0; i < corpus.videos.size(); ++i)
    split[corpus.videos[i].id] = i + 1 < corpus.videos.size() ? Split::train : Split::validation;

  WindowingConfig wcfg;
  wcfg.window_s = 8;
  wcfg.offset_s = 2;
  wcfg.stride_s = 4;

  LocalizerTrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 16;
  tcfg.seed = 16;

  const auto run = [&](uint64_t seed, const std::string& name) {
    LocalizerConfig cfg = small_config(Modality::visual_text, true);
    LocalizerModel model = init_localizer(cfg, 17);
    LocalizerTrainConfig t = tcfg;
    t.seed = seed;
    const LocalizerTrainResult r = train_localizer(model, corpus, split, wcfg, t);
    const std::string path = tmp_path(name);
    model.params.save(path);
    return std::pair{r, read_bytes(path)};
  };

  const auto [r1, bytes1] = run(16, "a.ckpt");
  const auto [r2, bytes2] = run(16, "b.ckpt");
  REQUIRE(r1.curve.size() == r2.curve.size());
  for (size_t i = 0; i < r1.curve.size(); ++i) {
    CHECK(r1.curve[i].train_loss == r2.curve[i].train_loss);
    CHECK(r1.curve[i].val_ap == r2.curve[i].val_ap);
  }
  CHECK(bytes1 == bytes2);
  CHECK(r1.best_epoch == r2.best_epoch);

  const auto [r3, bytes3] = run(99, "c.ckpt");
  CHECK(r1.curve[0].train_loss != r3.curve[0].train_loss);
}

TEST_CASE("validation tracking keeps the best epoch") {
  const Corpus corpus = tiny_synth(52);
  std::map<std::string, Split> split;
  for (size_t i = 0; i < corpus.videos.size(); ++i)
    split[corpus.videos[i].id] = i % 2 == 0 ? Split::train : Split::validation;

  WindowingConfig wcfg;
  wcfg.window_s = 8;
  wcfg.offset_s = 2;
  wcfg.stride_s = 4;

  LocalizerTrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.seed = 18;

  LocalizerConfig cfg = small_config(Modality::visual_text, false);
  cfg.d_v = 4;
  LocalizerModel model = init_localizer(cfg, 19);
  const LocalizerTrainResult result = train_localizer(model, corpus, split, wcfg, tcfg);

  REQUIRE(!result.curve.empty());
  double best = -1.0;
  int best_epoch = -1;
  for (const LocalizerEpochStats& e : result.curve) {
    if (e.val_ap > best) {
      best = e.val_ap;
      best_epoch = e.epoch;
    }
  }
  CHECK(result.best_epoch == best_epoch);
  CHECK(result.best_val_ap == doctest::Approx(best));
}

TEST_CASE("inference flags videos shorter than one window") {
  const LocalizerConfig cfg = small_config(Modality::visual_text, false);
  const LocalizerModel model = init_localizer(cfg, 20);

  Video shorty;
  shorty.id = "short";
  shorty.duration_s = 5;  // < window_s = 8

  WindowingConfig wcfg;
  wcfg.window_s = 8;
  wcfg.offset_s = 2;
  wcfg.stride_s = 4;

  const InferResult r = infer_video(model, shorty, wcfg);
  CHECK(r.too_short);
  CHECK(r.boundaries.empty());
  CHECK(r.clips.empty());
  CHECK(r.frames_processed == 0);
}

TEST_CASE("inference covers every window and sorts its boundaries") {
  const Corpus corpus = tiny_synth(53);
  const Video& video = corpus.videos.front();

  LocalizerConfig cfg = small_config(Modality::visual_text, true);
  LocalizerModel model = init_localizer(cfg, 21);
  randomize_params(model, 210);

  WindowingConfig wcfg;
  wcfg.window_s = 8;
  wcfg.offset_s = 2;
  wcfg.stride_s = 4;

  const InferResult r = infer_video(model, video, wcfg, 0.0);
  const std::vector<ClipWindow> expected = enumerate_windows(video.duration_s, wcfg);
  REQUIRE(r.clips.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(r.clips[i].window.t_a == expected[i].t_a);
    CHECK(r.clips[i].p > 0.0);
    CHECK(r.clips[i].p < 1.0);
  }
  CHECK(r.frames_processed ==
        static_cast<int64_t>(expected.size()) * wcfg.window_s);
  CHECK(!r.too_short);

  for (size_t i = 1; i < r.boundaries.size(); ++i)
    CHECK(r.boundaries[i - 1].begin_s < r.boundaries[i].begin_s);
  for (const BoundaryPrediction& b : r.boundaries) {
    CHECK(b.video_id == video.id);
    CHECK(b.confidence >= 0.0);
  }

  // threshold 1.1 admits nothing
  const InferResult none = infer_video(model, video, wcfg, 1.1);
  CHECK(none.boundaries.empty());

  // the probabilities themselves are deterministic
  const InferResult again = infer_video(model, video, wcfg, 0.0);
  for (size_t i = 0; i < r.clips.size(); ++i) CHECK(again.clips[i].p == r.clips[i].p);
}

TEST_CASE("bad classifier configurations are rejected") {
  const auto bad = [](auto mutate) {
    LocalizerConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  };
  bad([](LocalizerConfig& c) { c.d_v = 0; });
  bad([](LocalizerConfig& c) { c.d_t = 0; });
  bad([](LocalizerConfig& c) { c.hidden = 0; });
  bad([](LocalizerConfig& c) { c.vocab_size = 4; });
  bad([](LocalizerConfig& c) { c.window_s = 7; });
  bad([](LocalizerConfig& c) { c.window_s = 0; });
  bad([](LocalizerConfig& c) { c.dropout = 1.0; });
  bad([](LocalizerConfig& c) { c.dropout = -0.1; });
  bad([](LocalizerConfig& c) { c.shift_fraction = 0.6; });
  CHECK_NOTHROW(validate(LocalizerConfig{}));
}

TEST_CASE("modality names round-trip") {
  for (const Modality m : {Modality::visual, Modality::text, Modality::visual_text})
    CHECK(modality_from_string(to_string(m)) == m);
  CHECK_THROWS(modality_from_string("audio"));
}
