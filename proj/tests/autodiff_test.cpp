#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "vidchap/autodiff.hpp"
#include "vidchap/rng.hpp"

using namespace vidchap;

namespace {

Tensor random_tensor(int rows, int cols, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = rng.next_normal();
  return t;
}

std::string tmp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "vidchap_autodiff_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("tensor basics") {
  const Tensor t = Tensor::from(2, 2, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.at(1, 0) == 3.0);
  CHECK(t.size() == 4);
  CHECK(Tensor::scalar(7.5).item() == 7.5);
  CHECK_THROWS(t.item());  // not 1x1

  Tensor bad = t;
  bad.at(0, 1) = std::nan("");
  CHECK(t.all_finite());
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("binary cross entropy of a coin flip is ln 2") {
  Tape tape;
  const auto p = tape.leaf(Tensor::scalar(0.5));
  const auto loss = tape.binary_cross_entropy(p, tape.constant(Tensor::scalar(1.0)));
  CHECK(tape.value(loss).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // clamping keeps saturated probabilities finite
  Tape tape2;
  const auto p0 = tape2.leaf(Tensor::scalar(0.0));
  const auto l2 = tape2.binary_cross_entropy(p0, tape2.constant(Tensor::scalar(1.0)));
  CHECK(std::isfinite(tape2.value(l2).item()));
  CHECK(tape2.value(l2).item() > 0.0);
}

TEST_CASE("softmax of equal entries is uniform") {
  Tape tape;
  Tensor x(1, 4);
  for (double& v : x.data) v = 3.25;
  const auto s = tape.softmax_rows(tape.leaf(x));
  for (double v : tape.value(s).data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sigmoid derivative at zero is one quarter") {
  Tape tape;
  const auto x = tape.leaf(Tensor::scalar(0.0));
  tape.backward(tape.sigmoid(x));
  CHECK(tape.grad(x).item() == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("square function gradient at three is six") {
  Tape tape;
  const auto x = tape.leaf(Tensor::scalar(3.0));
  tape.backward(tape.multiply(x, x));
  CHECK(tape.grad(x).item() == doctest::Approx(6.0).epsilon(1e-12));

  const double err = grad_check(
      [](Tape& t, const std::vector<Tape::NodeId>& leaves) {
        return t.multiply(leaves[0], leaves[0]);
      },
      {Tensor::scalar(3.0)});
  CHECK(err <= 1e-9);
}

TEST_CASE("a node feeding two consumers accumulates both adjoints") {
  // f(x) = x*x + x at x = 2 -> df/dx = 2x + 1 = 5
  Tape tape;
  const auto x = tape.leaf(Tensor::scalar(2.0));
  tape.backward(tape.add(tape.multiply(x, x), x));
  CHECK(tape.grad(x).item() == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("constant-valued graphs have zero gradient") {
  Tape tape;
  const auto x = tape.leaf(Tensor::scalar(1.5));
  tape.backward(tape.scale(x, 0.0));
  CHECK(tape.grad(x).item() == 0.0);

  const double err = grad_check(
      [](Tape& t, const std::vector<Tape::NodeId>& leaves) { return t.scale(leaves[0], 0.0); },
      {Tensor::scalar(1.5)});
  CHECK(err == 0.0);
}

TEST_CASE("gradients only flow into leaves that require them") {
  Tape tape;
  const auto x = tape.leaf(Tensor::scalar(2.0));
  const auto c = tape.constant(Tensor::scalar(4.0));
  tape.backward(tape.multiply(x, c));
  CHECK(tape.grad(x).item() == doctest::Approx(4.0));
  CHECK_FALSE(tape.has_grad(c));
}

TEST_CASE("layer norm output rows are standardized before gain and bias") {
  Rng rng(33);
  Tape tape;
  Tensor x = random_tensor(6, 8, rng);
  for (double& v : x.data) v = 3.0 * v + 1.0;
  Tensor gain(1, 8), bias(1, 8);
  for (double& v : gain.data) v = 1.0;
  const auto out = tape.layer_norm(tape.leaf(x), tape.constant(gain), tape.constant(bias));
  const Tensor& y = tape.value(out);
  for (int r = 0; r < y.n_rows; ++r) {
    double mean = 0.0;
    for (int c = 0; c < y.n_cols; ++c) mean += y.at(r, c);
    mean /= y.n_cols;
    CHECK(std::abs(mean) <= 1e-6);
    double var = 0.0;
    for (int c = 0; c < y.n_cols; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    var /= y.n_cols;
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
  CHECK_THROWS_AS(tape.layer_norm(tape.leaf(x), tape.constant(Tensor(1, 7)),
                                  tape.constant(Tensor(1, 8))),
                  std::invalid_argument);
}

TEST_CASE("cross entropy ignores rows with the ignore index") {
  Tensor logits(3, 4);
  Rng rng(34);
  for (double& v : logits.data) v = rng.next_normal();

  Tape full;
  const auto a = full.cross_entropy_logits(full.leaf(logits), {1, 2, 0});

  // manual per-row value of row 0
  Tape one;
  Tensor row(1, 4);
  for (int c = 0; c < 4; ++c) row.at(0, c) = logits.at(0, c);
  const auto b = one.cross_entropy_logits(one.leaf(row), {1});

  Tape ignored;
  Tensor two(2, 4);
  for (int c = 0; c < 4; ++c) {
    two.at(0, c) = logits.at(0, c);
    two.at(1, c) = logits.at(1, c);
  }
  const auto c = ignored.cross_entropy_logits(ignored.leaf(two), {1, -1});

  // ignoring the second row leaves exactly the first row's loss
  CHECK(ignored.value(c).item() == doctest::Approx(one.value(b).item()).epsilon(1e-12));
  CHECK(full.value(a).item() > 0.0);

  Tape bad;
  CHECK_THROWS_AS(bad.cross_entropy_logits(bad.leaf(two), {-1, -1}), std::invalid_argument);
  Tape oob;
  CHECK_THROWS_AS(oob.cross_entropy_logits(oob.leaf(two), {4, 0}), std::invalid_argument);

  // uniform logits with the right target give ln V
  Tape flat;
  const auto d = flat.cross_entropy_logits(flat.leaf(Tensor(1, 4)), {2});
  CHECK(flat.value(d).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("masked fill replaces values and blocks gradients") {
  Tape tape;
  const Tensor x = Tensor::from(1, 4, {1.0, 2.0, 3.0, 4.0});
  const auto xid = tape.leaf(x);
  const auto filled = tape.masked_fill(xid, {0, 1, 0, 1}, -9.0);
  CHECK(tape.value(filled).data == std::vector<double>{1.0, -9.0, 3.0, -9.0});

  tape.backward(tape.mean_all(filled));
  const Tensor& g = tape.grad(xid);
  CHECK(g.data == std::vector<double>{0.25, 0.0, 0.25, 0.0});
}

TEST_CASE("embedding gather accumulates duplicate rows") {
  Tape tape;
  Tensor table(5, 3);
  Rng rng(35);
  for (double& v : table.data) v = rng.next_normal();
  const auto tid = tape.leaf(table);
  const auto rows = tape.embedding_gather(tid, {1, 1, 3});
  const Tensor& picked = tape.value(rows);
  REQUIRE(picked.n_rows == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(picked.at(0, c) == table.at(1, c));
    CHECK(picked.at(1, c) == table.at(1, c));
    CHECK(picked.at(2, c) == table.at(3, c));
  }

  tape.backward(tape.mean_all(rows));
  const Tensor& g = tape.grad(tid);
  for (int c = 0; c < 3; ++c) {
    CHECK(g.at(1, c) == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
    CHECK(g.at(3, c) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    CHECK(g.at(0, c) == 0.0);
  }
  CHECK_THROWS(tape.embedding_gather(tid, {5}));
}

TEST_CASE("broadcast add spreads a row and sums its gradient") {
  Tape tape;
  Rng rng(36);
  const Tensor a = random_tensor(3, 4, rng);
  const Tensor b = random_tensor(1, 4, rng);
  const auto aid = tape.leaf(a);
  const auto bid = tape.leaf(b);
  const auto sum = tape.add(aid, bid);
  const Tensor& y = tape.value(sum);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) CHECK(y.at(r, c) == doctest::Approx(a.at(r, c) + b.at(0, c)));

  tape.backward(tape.mean_all(sum));
  for (int c = 0; c < 4; ++c)
    CHECK(tape.grad(bid).at(0, c) == doctest::Approx(3.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("means and concatenation keep shapes and values") {
  Tape tape;
  const Tensor x = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
  const auto xid = tape.leaf(x);

  const Tensor& m0 = tape.value(tape.mean(xid, 0));
  REQUIRE(m0.n_rows == 1);
  REQUIRE(m0.n_cols == 3);
  CHECK(m0.at(0, 0) == doctest::Approx(2.5));

  const Tensor& m1 = tape.value(tape.mean(xid, 1));
  REQUIRE(m1.n_rows == 2);
  REQUIRE(m1.n_cols == 1);
  CHECK(m1.at(0, 0) == doctest::Approx(2.0));
  CHECK(m1.at(1, 0) == doctest::Approx(5.0));

  CHECK(tape.value(tape.mean_all(xid)).item() == doctest::Approx(3.5));

  const Tensor y = Tensor::from(2, 2, {7, 8, 9, 10});
  const Tensor& cat1 = tape.value(tape.concat(xid, tape.leaf(y), 1));
  REQUIRE(cat1.n_rows == 2);
  REQUIRE(cat1.n_cols == 5);
  CHECK(cat1.at(0, 3) == 7.0);
  CHECK(cat1.at(1, 4) == 10.0);

  const Tensor z = Tensor::from(1, 3, {7, 8, 9});
  const Tensor& cat0 = tape.value(tape.concat(xid, tape.leaf(z), 0));
  REQUIRE(cat0.n_rows == 3);
  CHECK(cat0.at(2, 0) == 7.0);
}

TEST_CASE("every core op passes a finite-difference spot check") {
  Rng rng(37);
  const auto check = [&](const char* name, auto build, std::vector<Tensor> point) {
    const double err = grad_check(build, point);
    INFO(name);
    CHECK(err <= 1e-4);
  };

  check("matmul",
        [](Tape& t, const std::vector<Tape::NodeId>& l) {
          return t.mean_all(t.matmul(l[0], l[1]));
        },
        {random_tensor(3, 4, rng), random_tensor(4, 2, rng)});
  check("matmul-ta",
        [](Tape& t, const std::vector<Tape::NodeId>& l) {
          return t.mean_all(t.matmul(l[0], l[1], true, false));
        },
        {random_tensor(4, 3, rng), random_tensor(4, 2, rng)});
  check("matmul-tb",
        [](Tape& t, const std::vector<Tape::NodeId>& l) {
          return t.mean_all(t.matmul(l[0], l[1], false, true));
        },
        {random_tensor(3, 4, rng), random_tensor(2, 4, rng)});
  check("softmax",
        [](Tape& t, const std::vector<Tape::NodeId>& l) {
          return t.mean_all(t.multiply(t.softmax_rows(l[0]), l[1]));
        },
        {random_tensor(3, 5, rng), random_tensor(3, 5, rng)});
  check("layer-norm",
        [](Tape& t, const std::vector<Tape::NodeId>& l) {
          return t.mean_all(t.layer_norm(l[0], l[1], l[2]));
        },
        {random_tensor(3, 6, rng), random_tensor(1, 6, rng), random_tensor(1, 6, rng)});
  check("sigmoid-bce",
        [](Tape& t, const std::vector<Tape::NodeId>& l) {
          Tensor labels(2, 3);
          labels.at(0, 0) = 1.0;
          labels.at(1, 2) = 1.0;
          return t.binary_cross_entropy(t.sigmoid(l[0]), t.constant(labels));
        },
        {random_tensor(2, 3, rng)});
  check("cross-entropy",
        [](Tape& t, const std::vector<Tape::NodeId>& l) {
          return t.cross_entropy_logits(l[0], {1, 3, -1});
        },
        {random_tensor(3, 5, rng)});
}

TEST_CASE("relu gradient away from the kink") {
  Tensor x = Tensor::from(1, 4, {-2.0, -0.5, 0.5, 2.0});
  const double err = grad_check(
      [](Tape& t, const std::vector<Tape::NodeId>& l) { return t.mean_all(t.relu(l[0])); },
      {x});
  CHECK(err <= 1e-9);

  Tape tape;
  const auto id = tape.leaf(x);
  tape.backward(tape.mean_all(tape.relu(id)));
  CHECK(tape.grad(id).data == std::vector<double>{0.0, 0.0, 0.25, 0.25});
}

TEST_CASE("shape mismatches are rejected") {
  Tape tape;
  const auto a = tape.leaf(Tensor(2, 3));
  const auto b = tape.leaf(Tensor(2, 2));
  CHECK_THROWS_AS(tape.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.multiply(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.binary_cross_entropy(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.concat(a, b, 0), std::invalid_argument);
  CHECK_THROWS(tape.masked_fill(a, {1, 0}, 0.0));  // mask size mismatch
}

TEST_CASE("one AdamW step matches the hand-rolled update") {
  Tensor w = Tensor::scalar(1.0);
  Tensor g = Tensor::scalar(2.0);
  AdamWState state;
  AdamWHyper hyper;
  hyper.lr = 0.1;

  adamw_step(w, g, state, hyper);

  // by hand: m = 0.1*2 = 0.2, v = 0.001*4, bias-corrected back to 2 and 4
  const double mhat = 0.2 / (1.0 - 0.9);
  const double vhat = 0.004 / (1.0 - 0.999);
  const double expect = 1.0 - 0.1 * (mhat / (std::sqrt(vhat) + 1e-8));
  CHECK(w.item() == doctest::Approx(expect).epsilon(1e-15));
  CHECK(w.item() < 1.0);
  CHECK(state.step == 1);
}

TEST_CASE("weight decay is decoupled from the gradient path") {
  Tensor w = Tensor::scalar(1.0);
  Tensor g = Tensor::scalar(0.0);
  AdamWState state;
  AdamWHyper hyper;
  hyper.lr = 0.1;
  hyper.weight_decay = 0.5;
  adamw_step(w, g, state, hyper);
  // zero gradient: the only movement is -lr * wd * w
  CHECK(w.item() == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-12));
}

TEST_CASE("several AdamW steps with decay match an independent replay") {
  Rng rng(38);
  Tensor w = random_tensor(2, 3, rng);
  Tensor w_replay = w;
  AdamWState state;
  AdamWHyper hyper;
  hyper.lr = 0.05;
  hyper.weight_decay = 0.01;

  std::vector<double> m(6, 0.0), v(6, 0.0);
  for (int step = 1; step <= 3; ++step) {
    const Tensor g = random_tensor(2, 3, rng);
    adamw_step(w, g, state, hyper);
    for (size_t i = 0; i < 6; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g.data[i];
      v[i] = 0.999 * v[i] + 0.001 * g.data[i] * g.data[i];
      const double mhat = m[i] / (1.0 - std::pow(0.9, step));
      const double vhat = v[i] / (1.0 - std::pow(0.999, step));
      w_replay.data[i] -=
          hyper.lr * (mhat / (std::sqrt(vhat) + 1e-8) + hyper.weight_decay * w_replay.data[i]);
    }
  }
  for (size_t i = 0; i < 6; ++i)
    CHECK(w.data[i] == doctest::Approx(w_replay.data[i]).epsilon(1e-14));
  CHECK_THROWS_AS(adamw_step(w, Tensor(3, 2), state, hyper), std::invalid_argument);
}

TEST_CASE("learning-rate schedule junctions") {
  CHECK(lr_schedule(10, 10, 100, 2.0) == doctest::Approx(2.0));
  CHECK(lr_schedule(5, 10, 100, 2.0) == doctest::Approx(1.0));
  CHECK(lr_schedule(100, 10, 100, 2.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(lr_schedule(55, 10, 100, 2.0) == doctest::Approx(1.0));  // cosine midpoint
  CHECK(lr_schedule(200, 10, 100, 2.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(lr_schedule(1, 10, 10, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(0, 10, 100, 2.0), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip through f32 exactly") {
  Rng rng(39);
  ParamStore store;
  store.add("layer.weight", random_tensor(3, 4, rng));
  store.add("layer.bias", random_tensor(1, 4, rng));
  CHECK(store.scalar_count() == 16);

  const std::string path = tmp_path("params.ckpt");
  store.save(path);

  ParamStore loaded;
  loaded.add("layer.weight", Tensor(3, 4));
  loaded.add("layer.bias", Tensor(1, 4));
  loaded.load(path);

  for (size_t i = 0; i < store.count(); ++i)
    for (size_t j = 0; j < loaded.at(i).value.data.size(); ++j)
      CHECK(loaded.at(i).value.data[j] ==
            static_cast<double>(static_cast<float>(store.at(i).value.data[j])));

  // a second save of the loaded store is byte-identical (already quantized)
  const std::string path2 = tmp_path("params2.ckpt");
  loaded.save(path2);
  ParamStore again;
  again.add("layer.weight", Tensor(3, 4));
  again.add("layer.bias", Tensor(1, 4));
  again.load(path2);
  for (size_t i = 0; i < loaded.count(); ++i)
    CHECK(again.at(i).value.data == loaded.at(i).value.data);

  ParamStore wrong_shape;
  wrong_shape.add("layer.weight", Tensor(4, 3));
  wrong_shape.add("layer.bias", Tensor(1, 4));
  CHECK_THROWS(wrong_shape.load(path));

  ParamStore wrong_name;
  wrong_name.add("other.weight", Tensor(3, 4));
  wrong_name.add("layer.bias", Tensor(1, 4));
  CHECK_THROWS(wrong_name.load(path));
}

TEST_CASE("xavier init respects its fan bounds") {
  Rng rng(40);
  const Tensor t = xavier_uniform(20, 30, rng);
  const double bound = std::sqrt(6.0 / (20 + 30));
  for (double v : t.data) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
}
