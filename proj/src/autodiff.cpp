#include "vidchap/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vidchap/kernels.hpp"

namespace vidchap {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

Tensor Tensor::from(int rows, int cols, std::initializer_list<double> vals) {
  Tensor t(rows, cols);
  if (static_cast<int64_t>(vals.size()) != t.size())
    throw std::invalid_argument("Tensor::from: value count does not match shape");
  std::copy(vals.begin(), vals.end(), t.data.begin());
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item on non-scalar");
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

int Tape::check(NodeId id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: bad node id");
  return id;
}

Tape::NodeId Tape::push(Node n) {
  if (!n.requires_grad) {
    for (NodeId p : n.parents)
      if (p >= 0 && nodes_[p].requires_grad) n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b, bool transpose_a, bool transpose_b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  const int n = transpose_a ? va.n_cols : va.n_rows;
  const int k = transpose_a ? va.n_rows : va.n_cols;
  const int kb = transpose_b ? vb.n_cols : vb.n_rows;
  const int m = transpose_b ? vb.n_rows : vb.n_cols;
  if (k != kb) throw std::invalid_argument("matmul: inner dimensions do not match");
  Node node;
  node.op = Op::matmul;
  node.parents = {a, b, -1};
  node.ta = transpose_a;
  node.tb = transpose_b;
  node.value = Tensor(n, m);
  kernels::matmul(va.data.data(), vb.data.data(), node.value.data.data(), n, k, m,
                  transpose_a, transpose_b);
  return push(std::move(node));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  const bool broadcast = !va.same_shape(vb);
  if (broadcast && !(vb.n_rows == 1 && vb.n_cols == va.n_cols))
    throw std::invalid_argument("add: shapes must match or b must be a 1xC row");
  Node node;
  node.op = Op::add;
  node.parents = {a, b, -1};
  node.value = va;
  for (int r = 0; r < va.n_rows; ++r)
    for (int c = 0; c < va.n_cols; ++c)
      node.value.at(r, c) += broadcast ? vb.at(0, c) : vb.at(r, c);
  return push(std::move(node));
}

Tape::NodeId Tape::multiply(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("multiply: shape mismatch");
  Node node;
  node.op = Op::multiply;
  node.parents = {a, b, -1};
  node.value = va;
  for (int64_t i = 0; i < va.size(); ++i) node.value.data[i] *= vb.data[i];
  return push(std::move(node));
}

Tape::NodeId Tape::scale(NodeId a, double s) {
  Node node;
  node.op = Op::scale;
  node.parents = {a, -1, -1};
  node.scalar_attr = s;
  node.value = value(a);
  for (double& v : node.value.data) v *= s;
  return push(std::move(node));
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
  const Tensor& va = value(a);
  Node node;
  node.op = Op::softmax_rows;
  node.parents = {a, -1, -1};
  node.value = Tensor(va.n_rows, va.n_cols);
  kernels::softmax_rows(va.data.data(), node.value.data.data(), va.n_rows, va.n_cols);
  return push(std::move(node));
}

Tape::NodeId Tape::sigmoid(NodeId a) {
  Node node;
  node.op = Op::sigmoid;
  node.parents = {a, -1, -1};
  node.value = value(a);
  for (double& v : node.value.data) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(node));
}

Tape::NodeId Tape::relu(NodeId a) {
  Node node;
  node.op = Op::relu;
  node.parents = {a, -1, -1};
  node.value = value(a);
  for (double& v : node.value.data) v = std::max(v, 0.0);
  return push(std::move(node));
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
  const Tensor& vx = value(x);
  const Tensor& vg = value(gain);
  const Tensor& vb = value(bias);
  if (vg.n_rows != 1 || vg.n_cols != vx.n_cols || vb.n_rows != 1 || vb.n_cols != vx.n_cols)
    throw std::invalid_argument("layer_norm: gain/bias must be 1xC");
  Node node;
  node.op = Op::layer_norm;
  node.parents = {x, gain, bias};
  node.scalar_attr = eps;
  node.value = Tensor(vx.n_rows, vx.n_cols);
  node.aux = Tensor(vx.n_rows, vx.n_cols);  // normalized rows
  node.aux2 = Tensor(vx.n_rows, 1);         // per-row 1/stddev
  const int c_len = vx.n_cols;
  for (int r = 0; r < vx.n_rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < c_len; ++c) mu += vx.at(r, c);
    mu /= c_len;
    double var = 0.0;
    for (int c = 0; c < c_len; ++c) {
      const double d = vx.at(r, c) - mu;
      var += d * d;
    }
    var /= c_len;
    const double rstd = 1.0 / std::sqrt(var + eps);
    node.aux2.at(r, 0) = rstd;
    for (int c = 0; c < c_len; ++c) {
      const double xhat = (vx.at(r, c) - mu) * rstd;
      node.aux.at(r, c) = xhat;
      node.value.at(r, c) = xhat * vg.at(0, c) + vb.at(0, c);
    }
  }
  return push(std::move(node));
}

Tape::NodeId Tape::embedding_gather(NodeId table, std::vector<int> ids) {
  const Tensor& vt = value(table);
  Node node;
  node.op = Op::embedding_gather;
  node.parents = {table, -1, -1};
  node.value = Tensor(static_cast<int>(ids.size()), vt.n_cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vt.n_rows)
      throw std::invalid_argument("embedding_gather: id out of range");
    for (int c = 0; c < vt.n_cols; ++c)
      node.value.at(static_cast<int>(i), c) = vt.at(ids[i], c);
  }
  node.indices = std::move(ids);
  return push(std::move(node));
}

Tape::NodeId Tape::mean(NodeId a, int axis) {
  const Tensor& va = value(a);
  if (axis != 0 && axis != 1) throw std::invalid_argument("mean: axis must be 0 or 1");
  Node node;
  node.op = Op::mean_axis;
  node.parents = {a, -1, -1};
  node.axis = axis;
  if (axis == 0) {
    node.value = Tensor(1, va.n_cols);
    for (int c = 0; c < va.n_cols; ++c) {
      double s = 0.0;
      for (int r = 0; r < va.n_rows; ++r) s += va.at(r, c);
      node.value.at(0, c) = s / va.n_rows;
    }
  } else {
    node.value = Tensor(va.n_rows, 1);
    for (int r = 0; r < va.n_rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < va.n_cols; ++c) s += va.at(r, c);
      node.value.at(r, 0) = s / va.n_cols;
    }
  }
  return push(std::move(node));
}

Tape::NodeId Tape::mean_all(NodeId a) {
  const Tensor& va = value(a);
  Node node;
  node.op = Op::mean_all;
  node.parents = {a, -1, -1};
  double s = 0.0;
  for (double v : va.data) s += v;
  node.value = Tensor::scalar(s / static_cast<double>(va.size()));
  return push(std::move(node));
}

Tape::NodeId Tape::concat(NodeId a, NodeId b, int axis) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  Node node;
  node.op = Op::concat;
  node.parents = {a, b, -1};
  node.axis = axis;
  if (axis == 1) {
    if (va.n_rows != vb.n_rows) throw std::invalid_argument("concat: row mismatch");
    node.value = Tensor(va.n_rows, va.n_cols + vb.n_cols);
    for (int r = 0; r < va.n_rows; ++r) {
      for (int c = 0; c < va.n_cols; ++c) node.value.at(r, c) = va.at(r, c);
      for (int c = 0; c < vb.n_cols; ++c) node.value.at(r, va.n_cols + c) = vb.at(r, c);
    }
  } else if (axis == 0) {
    if (va.n_cols != vb.n_cols) throw std::invalid_argument("concat: column mismatch");
    node.value = Tensor(va.n_rows + vb.n_rows, va.n_cols);
    std::copy(va.data.begin(), va.data.end(), node.value.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), node.value.data.begin() + va.size());
  } else {
    throw std::invalid_argument("concat: axis must be 0 or 1");
  }
  return push(std::move(node));
}

Tape::NodeId Tape::cross_entropy_logits(NodeId logits, std::vector<int> targets,
                                        int ignore_index) {
  const Tensor& vl = value(logits);
  if (static_cast<int>(targets.size()) != vl.n_rows)
    throw std::invalid_argument("cross_entropy_logits: one target per row required");
  Node node;
  node.op = Op::cross_entropy_logits;
  node.parents = {logits, -1, -1};
  node.axis = ignore_index;
  node.aux = Tensor(vl.n_rows, vl.n_cols);
  kernels::softmax_rows(vl.data.data(), node.aux.data.data(), vl.n_rows, vl.n_cols);
  double total = 0.0;
  int counted = 0;
  for (int r = 0; r < vl.n_rows; ++r) {
    const int t = targets[r];
    if (t == ignore_index) continue;
    if (t < 0 || t >= vl.n_cols)
      throw std::invalid_argument("cross_entropy_logits: target out of range");
    double mx = vl.at(r, 0);
    for (int c = 1; c < vl.n_cols; ++c) mx = std::max(mx, vl.at(r, c));
    double lse = 0.0;
    for (int c = 0; c < vl.n_cols; ++c) lse += std::exp(vl.at(r, c) - mx);
    total += (std::log(lse) + mx) - vl.at(r, t);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("cross_entropy_logits: all rows ignored");
  node.scalar_attr = counted;
  node.indices = std::move(targets);
  node.value = Tensor::scalar(total / counted);
  return push(std::move(node));
}

Tape::NodeId Tape::binary_cross_entropy(NodeId p, NodeId labels) {
  const Tensor& vp = value(p);
  const Tensor& vl = value(labels);
  if (!vp.same_shape(vl)) throw std::invalid_argument("binary_cross_entropy: shape mismatch");
  Node node;
  node.op = Op::binary_cross_entropy;
  node.parents = {p, labels, -1};
  double total = 0.0;
  for (int64_t i = 0; i < vp.size(); ++i) {
    const double ph = std::clamp(vp.data[i], kProbEps, 1.0 - kProbEps);
    const double l = vl.data[i];
    const double term = -(l * std::log(ph) + (1.0 - l) * std::log(1.0 - ph));
    if (!std::isfinite(term))
      throw std::runtime_error("binary_cross_entropy: non-finite loss term");
    total += term;
  }
  node.value = Tensor::scalar(total / static_cast<double>(vp.size()));
  return push(std::move(node));
}

Tape::NodeId Tape::masked_fill(NodeId a, std::vector<uint8_t> mask, double fill) {
  const Tensor& va = value(a);
  if (static_cast<int64_t>(mask.size()) != va.size())
    throw std::invalid_argument("masked_fill: mask size mismatch");
  Node node;
  node.op = Op::masked_fill;
  node.parents = {a, -1, -1};
  node.scalar_attr = fill;
  node.value = va;
  for (int64_t i = 0; i < va.size(); ++i)
    if (mask[i]) node.value.data[i] = fill;
  node.mask = std::move(mask);
  return push(std::move(node));
}

Tape::NodeId Tape::temporal_shift(NodeId seq, double shift_fraction) {
  const Tensor& vs = value(seq);
  if (shift_fraction < 0.0 || shift_fraction > 0.5)
    throw std::invalid_argument("temporal_shift: fraction must be in [0, 1/2]");
  if (!vs.all_finite()) throw std::invalid_argument("temporal_shift: non-finite input");
  Node node;
  node.op = Op::temporal_shift;
  node.parents = {seq, -1, -1};
  node.n_shift = static_cast<int>(std::floor(vs.n_cols * shift_fraction));
  node.value = Tensor(vs.n_rows, vs.n_cols);
  kernels::temporal_shift(vs.data.data(), node.value.data.data(), vs.n_rows,
                          vs.n_cols, node.n_shift, false);
  return push(std::move(node));
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = nodes_[check(id)];
  if (!n.grad_ready) throw std::logic_error("Tape::grad before backward");
  return n.grad;
}

Tensor& Tape::grad_buf(NodeId id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.n_rows, n.value.n_cols);
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::backward(NodeId loss) {
  Node& ln = nodes_[check(loss)];
  if (ln.value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  for (Node& n : nodes_) {
    n.grad_ready = false;
    n.grad = Tensor();
  }
  grad_buf(loss).data[0] = 1.0;
  for (int id = loss; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.grad_ready || !n.requires_grad || n.op == Op::leaf) continue;
    backward_node(id);
  }
}

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto wants = [this](NodeId p) { return p >= 0 && nodes_[p].requires_grad; };

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::matmul: {
      const NodeId a = n.parents[0], b = n.parents[1];
      const Tensor& va = nodes_[a].value;
      const Tensor& vb = nodes_[b].value;
      const int rows = n.value.n_rows, cols = n.value.n_cols;
      const int inner = n.ta ? va.n_rows : va.n_cols;
      if (wants(a)) {
        Tensor tmp(va.n_rows, va.n_cols);
        if (!n.ta) {
          kernels::matmul(g.data.data(), vb.data.data(), tmp.data.data(), rows, cols,
                          inner, false, !n.tb);
        } else {
          kernels::matmul(vb.data.data(), g.data.data(), tmp.data.data(), inner, cols,
                          rows, n.tb, true);
        }
        Tensor& ga = grad_buf(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += tmp.data.data()[i];
      }
      if (wants(b)) {
        Tensor tmp(vb.n_rows, vb.n_cols);
        if (!n.tb) {
          kernels::matmul(va.data.data(), g.data.data(), tmp.data.data(), inner, rows,
                          cols, !n.ta, false);
        } else {
          kernels::matmul(g.data.data(), va.data.data(), tmp.data.data(), cols, rows,
                          inner, true, n.ta);
        }
        Tensor& gb = grad_buf(b);
        for (int64_t i = 0; i < gb.size(); ++i) gb.data[i] += tmp.data.data()[i];
      }
      break;
    }
    case Op::add: {
      const NodeId a = n.parents[0], b = n.parents[1];
      const Tensor& vb = nodes_[b].value;
      const bool broadcast = !n.value.same_shape(vb);
      if (wants(a)) {
        Tensor& ga = grad_buf(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i];
      }
      if (wants(b)) {
        Tensor& gb = grad_buf(b);
        if (!broadcast) {
          for (int64_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[i];
        } else {
          for (int r = 0; r < n.value.n_rows; ++r)
            for (int c = 0; c < n.value.n_cols; ++c) gb.at(0, c) += g.at(r, c);
        }
      }
      break;
    }
    case Op::multiply: {
      const NodeId a = n.parents[0], b = n.parents[1];
      if (wants(a)) {
        Tensor& ga = grad_buf(a);
        const Tensor& vb = nodes_[b].value;
        for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
      }
      if (wants(b)) {
        Tensor& gb = grad_buf(b);
        const Tensor& va = nodes_[a].value;
        for (int64_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
      }
      break;
    }
    case Op::scale: {
      if (wants(n.parents[0])) {
        Tensor& ga = grad_buf(n.parents[0]);
        for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i] * n.scalar_attr;
      }
      break;
    }
    case Op::softmax_rows: {
      if (wants(n.parents[0])) {
        Tensor& ga = grad_buf(n.parents[0]);
        const Tensor& y = n.value;
        for (int r = 0; r < y.n_rows; ++r) {
          double dot = 0.0;
          for (int c = 0; c < y.n_cols; ++c) dot += g.at(r, c) * y.at(r, c);
          for (int c = 0; c < y.n_cols; ++c)
            ga.at(r, c) += (g.at(r, c) - dot) * y.at(r, c);
        }
      }
      break;
    }
    case Op::sigmoid: {
      if (wants(n.parents[0])) {
        Tensor& ga = grad_buf(n.parents[0]);
        for (int64_t i = 0; i < ga.size(); ++i) {
          const double y = n.value.data[i];
          ga.data[i] += g.data[i] * y * (1.0 - y);
        }
      }
      break;
    }
    case Op::relu: {
      if (wants(n.parents[0])) {
        Tensor& ga = grad_buf(n.parents[0]);
        const Tensor& vx = nodes_[n.parents[0]].value;
        for (int64_t i = 0; i < ga.size(); ++i)
          if (vx.data[i] > 0.0) ga.data[i] += g.data[i];
      }
      break;
    }
    case Op::layer_norm: {
      const NodeId x = n.parents[0], gain = n.parents[1], bias = n.parents[2];
      const Tensor& xhat = n.aux;
      const Tensor& vg = nodes_[gain].value;
      const int c_len = n.value.n_cols;
      if (wants(gain)) {
        Tensor& gg = grad_buf(gain);
        for (int r = 0; r < n.value.n_rows; ++r)
          for (int c = 0; c < c_len; ++c) gg.at(0, c) += g.at(r, c) * xhat.at(r, c);
      }
      if (wants(bias)) {
        Tensor& gb = grad_buf(bias);
        for (int r = 0; r < n.value.n_rows; ++r)
          for (int c = 0; c < c_len; ++c) gb.at(0, c) += g.at(r, c);
      }
      if (wants(x)) {
        Tensor& gx = grad_buf(x);
        for (int r = 0; r < n.value.n_rows; ++r) {
          const double rstd = n.aux2.at(r, 0);
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (int c = 0; c < c_len; ++c) {
            const double dxhat = g.at(r, c) * vg.at(0, c);
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat.at(r, c);
          }
          mean_dxhat /= c_len;
          mean_dxhat_xhat /= c_len;
          for (int c = 0; c < c_len; ++c) {
            const double dxhat = g.at(r, c) * vg.at(0, c);
            gx.at(r, c) += rstd * (dxhat - mean_dxhat - xhat.at(r, c) * mean_dxhat_xhat);
          }
        }
      }
      break;
    }
    case Op::embedding_gather: {
      if (wants(n.parents[0])) {
        Tensor& gt = grad_buf(n.parents[0]);
        for (size_t i = 0; i < n.indices.size(); ++i)
          for (int c = 0; c < n.value.n_cols; ++c)
            gt.at(n.indices[i], c) += g.at(static_cast<int>(i), c);
      }
      break;
    }
    case Op::mean_axis: {
      if (wants(n.parents[0])) {
        Tensor& ga = grad_buf(n.parents[0]);
        if (n.axis == 0) {
          const double inv = 1.0 / ga.n_rows;
          for (int r = 0; r < ga.n_rows; ++r)
            for (int c = 0; c < ga.n_cols; ++c) ga.at(r, c) += g.at(0, c) * inv;
        } else {
          const double inv = 1.0 / ga.n_cols;
          for (int r = 0; r < ga.n_rows; ++r)
            for (int c = 0; c < ga.n_cols; ++c) ga.at(r, c) += g.at(r, 0) * inv;
        }
      }
      break;
    }
    case Op::mean_all: {
      if (wants(n.parents[0])) {
        Tensor& ga = grad_buf(n.parents[0]);
        const double gv = g.data[0] / static_cast<double>(ga.size());
        for (double& v : ga.data) v += gv;
      }
      break;
    }
    case Op::concat: {
      const NodeId a = n.parents[0], b = n.parents[1];
      const Tensor& va = nodes_[a].value;
      if (n.axis == 1) {
        if (wants(a)) {
          Tensor& ga = grad_buf(a);
          for (int r = 0; r < ga.n_rows; ++r)
            for (int c = 0; c < ga.n_cols; ++c) ga.at(r, c) += g.at(r, c);
        }
        if (wants(b)) {
          Tensor& gb = grad_buf(b);
          for (int r = 0; r < gb.n_rows; ++r)
            for (int c = 0; c < gb.n_cols; ++c) gb.at(r, c) += g.at(r, va.n_cols + c);
        }
      } else {
        if (wants(a)) {
          Tensor& ga = grad_buf(a);
          for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i];
        }
        if (wants(b)) {
          Tensor& gb = grad_buf(b);
          for (int64_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[va.size() + i];
        }
      }
      break;
    }
    case Op::cross_entropy_logits: {
      if (wants(n.parents[0])) {
        Tensor& gl = grad_buf(n.parents[0]);
        const double gv = g.data[0] / n.scalar_attr;
        for (int r = 0; r < gl.n_rows; ++r) {
          const int t = n.indices[r];
          if (t == n.axis) continue;  // ignore_index
          for (int c = 0; c < gl.n_cols; ++c)
            gl.at(r, c) += gv * (n.aux.at(r, c) - (c == t ? 1.0 : 0.0));
        }
      }
      break;
    }
    case Op::binary_cross_entropy: {
      const NodeId p = n.parents[0], labels = n.parents[1];
      const Tensor& vp = nodes_[p].value;
      const Tensor& vl = nodes_[labels].value;
      const double gv = g.data[0] / static_cast<double>(vp.size());
      if (wants(p)) {
        Tensor& gp = grad_buf(p);
        for (int64_t i = 0; i < vp.size(); ++i) {
          // clamp blocks the gradient outside [eps, 1-eps]
          if (vp.data[i] <= kProbEps || vp.data[i] >= 1.0 - kProbEps) continue;
          const double ph = vp.data[i];
          gp.data[i] += gv * (ph - vl.data[i]) / (ph * (1.0 - ph));
        }
      }
      if (wants(labels)) {
        Tensor& glab = grad_buf(labels);
        for (int64_t i = 0; i < vp.size(); ++i) {
          const double ph = std::clamp(vp.data[i], kProbEps, 1.0 - kProbEps);
          glab.data[i] += gv * (std::log(1.0 - ph) - std::log(ph));
        }
      }
      break;
    }
    case Op::masked_fill: {
      if (wants(n.parents[0])) {
        Tensor& ga = grad_buf(n.parents[0]);
        for (int64_t i = 0; i < ga.size(); ++i)
          if (!n.mask[i]) ga.data[i] += g.data[i];
      }
      break;
    }
    case Op::temporal_shift: {
      if (wants(n.parents[0])) {
        Tensor& ga = grad_buf(n.parents[0]);
        Tensor tmp(ga.n_rows, ga.n_cols);
        kernels::temporal_shift(g.data.data(), tmp.data.data(), ga.n_rows, ga.n_cols,
                                n.n_shift, true);
        for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += tmp.data[i];
      }
      break;
    }
  }
}

double grad_check(
    const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>& build,
    const std::vector<Tensor>& point, double eps) {
  auto eval = [&](const std::vector<Tensor>& pt) {
    Tape tape;
    std::vector<Tape::NodeId> ids;
    ids.reserve(pt.size());
    for (const Tensor& t : pt) ids.push_back(tape.leaf(t));
    const Tape::NodeId loss = build(tape, ids);
    if (tape.value(loss).size() != 1)
      throw std::invalid_argument("grad_check: function must be scalar-valued");
    return tape.value(loss).item();
  };

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Tape::NodeId> ids;
    for (const Tensor& t : point) ids.push_back(tape.leaf(t));
    const Tape::NodeId loss = build(tape, ids);
    if (tape.value(loss).size() != 1)
      throw std::invalid_argument("grad_check: function must be scalar-valued");
    tape.backward(loss);
    for (size_t i = 0; i < ids.size(); ++i) {
      // a leaf the loss never touches gets a zero gradient
      analytic.push_back(tape.has_grad(ids[i])
                             ? tape.grad(ids[i])
                             : Tensor(point[i].n_rows, point[i].n_cols));
    }
  }

  double max_rel = 0.0;
  std::vector<Tensor> pt = point;
  for (size_t i = 0; i < pt.size(); ++i) {
    for (int64_t j = 0; j < pt[i].size(); ++j) {
      const double x0 = pt[i].data[j];
      pt[i].data[j] = x0 + eps;
      const double fp = eval(pt);
      pt[i].data[j] = x0 - eps;
      const double fm = eval(pt);
      pt[i].data[j] = x0;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i].data[j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

void adamw_step(Tensor& param, const Tensor& grad, AdamWState& state,
                const AdamWHyper& hyper) {
  if (!param.same_shape(grad)) throw std::invalid_argument("adamw_step: shape mismatch");
  if (state.m.size() == 0) {
    state.m = Tensor(param.n_rows, param.n_cols);
    state.v = Tensor(param.n_rows, param.n_cols);
  }
  state.step += 1;
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (int64_t i = 0; i < param.size(); ++i) {
    const double gi = grad.data[i];
    state.m.data[i] = b1 * state.m.data[i] + (1.0 - b1) * gi;
    state.v.data[i] = b2 * state.v.data[i] + (1.0 - b2) * gi * gi;
    const double mhat = state.m.data[i] / c1;
    const double vhat = state.v.data[i] / c2;
    param.data[i] -= hyper.lr * (mhat / (std::sqrt(vhat) + hyper.eps) +
                                 hyper.weight_decay * param.data[i]);
  }
}

double lr_schedule(int64_t step, int64_t warmup_steps, int64_t total_steps,
                   double base_lr) {
  if (total_steps <= warmup_steps)
    throw std::invalid_argument("lr_schedule: total_steps must exceed warmup_steps");
  if (step < 1) throw std::invalid_argument("lr_schedule: step starts at 1");
  if (step <= warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress = std::min(
      1.0, static_cast<double>(step - warmup_steps) /
               static_cast<double>(total_steps - warmup_steps));
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  for (const Parameter& p : params_)
    if (p.name == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
  params_.push_back(Parameter{name, std::move(init), AdamWState{}});
  return params_.back().value;
}

int64_t ParamStore::scalar_count() const {
  int64_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

namespace {
void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  return v;
}
constexpr uint32_t kMagic = 0x314b4356;  // "VCK1"
}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  write_u32(out, kMagic);
  write_u32(out, 1);
  write_u32(out, static_cast<uint32_t>(params_.size()));
  for (const Parameter& p : params_) {
    write_u32(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(out, static_cast<uint32_t>(p.value.n_rows));
    write_u32(out, static_cast<uint32_t>(p.value.n_cols));
  }
  for (const Parameter& p : params_) {
    for (double v : p.value.data) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  if (read_u32(in) != kMagic) throw std::runtime_error("checkpoint: bad magic");
  if (read_u32(in) != 1) throw std::runtime_error("checkpoint: unsupported version");
  const uint32_t count = read_u32(in);
  if (count != params_.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (Parameter& p : params_) {
    const uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t rows = read_u32(in);
    const uint32_t cols = read_u32(in);
    if (name != p.name || static_cast<int>(rows) != p.value.n_rows ||
        static_cast<int>(cols) != p.value.n_cols)
      throw std::runtime_error("checkpoint: manifest mismatch at " + p.name);
  }
  for (Parameter& p : params_) {
    for (double& v : p.value.data) {
      float f = 0.0f;
      in.read(reinterpret_cast<char*>(&f), 4);
      if (!in) throw std::runtime_error("checkpoint: truncated payload");
      v = static_cast<double>(f);  // exact widening
    }
  }
}

Tensor xavier_uniform(int rows, int cols, Rng& rng) {
  Tensor t(rows, cols);
  const double limit = std::sqrt(6.0 / (rows + cols));
  for (double& v : t.data) v = (2.0 * rng.next_double() - 1.0) * limit;
  return t;
}

}  // namespace vidchap
