#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vidchap/rng.hpp"

namespace vidchap {

// Dense row-major matrix of doubles. Everything is 2-D; scalars are 1x1 and
// vectors are 1xC rows. Checkpoints store f32 (see ParamStore), computation
// stays in f64 so the finite-difference gradient checks are meaningful.
struct Tensor {
  int n_rows = 0;
  int n_cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int rows, int cols) : n_rows(rows), n_cols(cols), data(static_cast<size_t>(rows) * cols, 0.0) {}

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor from(int rows, int cols, std::initializer_list<double> vals);

  int64_t size() const { return static_cast<int64_t>(n_rows) * n_cols; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * n_cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * n_cols + c]; }
  double item() const;
  bool same_shape(const Tensor& o) const { return n_rows == o.n_rows && n_cols == o.n_cols; }
  bool all_finite() const;
};

// Reverse-mode tape. Nodes are appended in creation order, which is a
// topological order, so backward() is a single reverse sweep that visits each
// node exactly once and accumulates adjoints into the parents.
class Tape {
 public:
  using NodeId = int;

  NodeId leaf(Tensor value, bool requires_grad = true);
  NodeId constant(Tensor value) { return leaf(std::move(value), false); }

  NodeId matmul(NodeId a, NodeId b, bool transpose_a = false, bool transpose_b = false);
  // elementwise same-shape add, or b a 1xC row broadcast over a's rows
  NodeId add(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId softmax_rows(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId relu(NodeId a);
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
  NodeId embedding_gather(NodeId table, std::vector<int> ids);
  NodeId mean(NodeId a, int axis);  // axis 0 -> 1xC, axis 1 -> Rx1
  NodeId mean_all(NodeId a);        // scalar
  NodeId concat(NodeId a, NodeId b, int axis);
  // mean over rows of -log softmax(logits)[target]; rows with target ==
  // ignore_index contribute nothing
  NodeId cross_entropy_logits(NodeId logits, std::vector<int> targets, int ignore_index = -1);
  // mean over elements of -[l*ln p + (1-l)*ln(1-p)] with p clamped to
  // [kProbEps, 1-kProbEps]
  NodeId binary_cross_entropy(NodeId p, NodeId labels);
  // elements where mask != 0 are replaced by fill (used as the -inf surrogate
  // in attention); gradient flows only through unmasked elements
  NodeId masked_fill(NodeId a, std::vector<uint8_t> mask, double fill);
  // TSM shift over a TxC sequence, differentiable pass-through
  NodeId temporal_shift(NodeId seq, double shift_fraction);

  const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
  const Tensor& grad(NodeId id) const;
  bool has_grad(NodeId id) const { return nodes_[check(id)].grad_ready; }
  void backward(NodeId loss);
  size_t node_count() const { return nodes_.size(); }

  static constexpr double kProbEps = 1e-7;

 private:
  enum class Op {
    leaf,
    matmul,
    add,
    multiply,
    scale,
    softmax_rows,
    sigmoid,
    relu,
    layer_norm,
    embedding_gather,
    mean_axis,
    mean_all,
    concat,
    cross_entropy_logits,
    binary_cross_entropy,
    masked_fill,
    temporal_shift,
  };

  struct Node {
    Op op = Op::leaf;
    std::array<NodeId, 3> parents{-1, -1, -1};
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    // per-op attributes
    bool ta = false, tb = false;
    int axis = 0;
    int n_shift = 0;
    double scalar_attr = 0.0;
    std::vector<int> indices;
    std::vector<uint8_t> mask;
    Tensor aux;   // layer_norm: normalized rows; cross_entropy: probs
    Tensor aux2;  // layer_norm: per-row rstd
  };

  int check(NodeId id) const;
  NodeId push(Node n);
  void backward_node(int id);
  Tensor& grad_buf(NodeId id);

  std::vector<Node> nodes_;
};

// Builds a scalar graph from leaves placed at `point` and returns the maximum
// relative error between backward gradients and central differences,
// (|a - n|) / max(|a|, |n|, 1e-8). The callback gets a fresh tape plus the
// leaf ids, in point order, and must return a 1x1 node.
double grad_check(
    const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>& build,
    const std::vector<Tensor>& point, double eps = 1e-5);

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  Tensor m;
  Tensor v;
  int64_t step = 0;
};

// One decoupled-weight-decay Adam step; decay acts on the parameter directly,
// not through the moment estimates.
void adamw_step(Tensor& param, const Tensor& grad, AdamWState& state, const AdamWHyper& hyper);

// Linear warmup to base_lr, then cosine decay to zero at total_steps.
double lr_schedule(int64_t step, int64_t warmup_steps, int64_t total_steps, double base_lr);

struct Parameter {
  std::string name;
  Tensor value;
  AdamWState opt;
};

// Named parameter registry with checkpoint I/O. Checkpoint layout: magic
// "VCK1", u32 version, u32 count, manifest of {name, rows, cols}, then f32
// little-endian payloads in manifest order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  Parameter& at(size_t i) { return params_[i]; }
  const Parameter& at(size_t i) const { return params_[i]; }
  size_t count() const { return params_.size(); }
  int64_t scalar_count() const;

  void save(const std::string& path) const;
  void load(const std::string& path);  // shapes and names must match

 private:
  std::vector<Parameter> params_;
};

// Fan-in scaled uniform init, U(-sqrt(6/(fan_in+fan_out)), +...).
Tensor xavier_uniform(int rows, int cols, Rng& rng);

}  // namespace vidchap
