#include "emomsase/graph.hpp"

#include <memory>

#include <fmt/format.h>

#include "emomsase/error.hpp"

namespace emomsase::graph {

namespace {

void require_shape(const Matrix& a, Eigen::Index rows, Eigen::Index cols, const char* op) {
  if (a.rows() != rows || a.cols() != cols) {
    throw Error(ErrorKind::ShapeMismatch,
                fmt::format("{}: got {}x{}, expected {}x{}", op, a.rows(), a.cols(), rows, cols));
  }
}

Matrix sigmoid_of(const Matrix& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

Var Tape::constant(Matrix value) {
  return push(std::move(value), {}, nullptr);
}

Var Tape::param(Param& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(it->second);
  const Var v = push(p.value, {}, nullptr);
  nodes_[v.id()].param = &p;
  nodes_[v.id()].requires_grad = !p.frozen;
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward backward) {
  if (consumed_) throw Error(ErrorKind::TapeConsumed, "cannot record onto a tape after backward()");
  if (!value.allFinite()) throw Error(ErrorKind::NonFiniteActivation, fmt::format("node {}", nodes_.size()));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || nodes_.at(in.id()).requires_grad;
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(nodes_.size() - 1);
}

void Tape::backward(Var output, double loss_grad) {
  if (consumed_) throw Error(ErrorKind::TapeConsumed, "backward() already ran on this tape");
  require_shape(value(output), 1, 1, "backward");
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad.setZero(n.value.rows(), n.value.cols());
  }
  if (nodes_[output.id()].requires_grad) nodes_[output.id()].grad(0, 0) = loss_grad;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.param != nullptr && n.requires_grad) n.param->grad += n.grad;
  }
  consumed_ = true;
}

// ---- primitives ------------------------------------------------------------

Var matmul_nt(Tape& t, Var x, Var w) {
  const auto& xv = t.value(x);
  const auto& wv = t.value(w);
  if (xv.cols() != wv.cols()) {
    throw Error(ErrorKind::ShapeMismatch, fmt::format("matmul_nt: {}x{} by ({}x{})^T", xv.rows(), xv.cols(), wv.rows(), wv.cols()));
  }
  Matrix out = xv * wv.transpose();
  const Var in[] = {x, w};
  return t.push(std::move(out), in, [x, w](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_mut(self);
    if (tp.requires_grad(x)) tp.grad_mut(x).noalias() += g * tp.value(w);
    if (tp.requires_grad(w)) tp.grad_mut(w).noalias() += g.transpose() * tp.value(x);
  });
}

Var dense(Tape& t, Var x, Var w, Var b) {
  const auto& xv = t.value(x);
  const auto& wv = t.value(w);
  const auto& bv = t.value(b);
  if (xv.cols() != wv.cols()) {
    throw Error(ErrorKind::ShapeMismatch, fmt::format("dense: input {} features, weight expects {}", xv.cols(), wv.cols()));
  }
  require_shape(bv, wv.rows(), 1, "dense bias");
  Matrix out = xv * wv.transpose();
  out.rowwise() += bv.col(0).transpose();
  const Var in[] = {x, w, b};
  return t.push(std::move(out), in, [x, w, b](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_mut(self);
    if (tp.requires_grad(x)) tp.grad_mut(x).noalias() += g * tp.value(w);
    if (tp.requires_grad(w)) tp.grad_mut(w).noalias() += g.transpose() * tp.value(x);
    if (tp.requires_grad(b)) tp.grad_mut(b).col(0) += g.colwise().sum().transpose();
  });
}

Var add(Tape& t, Var a, Var b) {
  require_shape(t.value(b), t.value(a).rows(), t.value(a).cols(), "add");
  const Var in[] = {a, b};
  return t.push(t.value(a) + t.value(b), in, [a, b](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_mut(self);
    if (tp.requires_grad(a)) tp.grad_mut(a) += g;
    if (tp.requires_grad(b)) tp.grad_mut(b) += g;
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_shape(t.value(b), t.value(a).rows(), t.value(a).cols(), "mul");
  const Var in[] = {a, b};
  return t.push(t.value(a).cwiseProduct(t.value(b)), in, [a, b](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_mut(self);
    if (tp.requires_grad(a)) tp.grad_mut(a) += g.cwiseProduct(tp.value(b));
    if (tp.requires_grad(b)) tp.grad_mut(b) += g.cwiseProduct(tp.value(a));
  });
}

Var mul_col(Tape& t, Var a, Var col) {
  const auto& av = t.value(a);
  require_shape(t.value(col), av.rows(), 1, "mul_col");
  Matrix out = av.array().colwise() * t.value(col).col(0).array();
  const Var in[] = {a, col};
  return t.push(std::move(out), in, [a, col](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_mut(self);
    if (tp.requires_grad(a)) tp.grad_mut(a).array() += g.array().colwise() * tp.value(col).col(0).array();
    if (tp.requires_grad(col)) tp.grad_mut(col).col(0) += g.cwiseProduct(tp.value(a)).rowwise().sum();
  });
}

Var sigmoid(Tape& t, Var x) {
  Matrix out = sigmoid_of(t.value(x));
  const Var in[] = {x};
  return t.push(std::move(out), in, [x](Tape& tp, std::size_t self) {
    const auto& y = tp.value(self);
    tp.grad_mut(x).array() += tp.grad_mut(self).array() * y.array() * (1.0 - y.array());
  });
}

Var tanh(Tape& t, Var x) {
  Matrix out = t.value(x).array().tanh().matrix();
  const Var in[] = {x};
  return t.push(std::move(out), in, [x](Tape& tp, std::size_t self) {
    const auto& y = tp.value(self);
    tp.grad_mut(x).array() += tp.grad_mut(self).array() * (1.0 - y.array().square());
  });
}

Var relu(Tape& t, Var x) {
  Matrix out = t.value(x).cwiseMax(0.0);
  const Var in[] = {x};
  return t.push(std::move(out), in, [x](Tape& tp, std::size_t self) {
    const auto& xv = tp.value(x);
    tp.grad_mut(x).array() += (xv.array() > 0.0).select(tp.grad_mut(self).array(), 0.0);
  });
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Var softmax_rows(Tape& t, Var x) {
  Matrix out = softmax_rows(t.value(x));
  const Var in[] = {x};
  return t.push(std::move(out), in, [x](Tape& tp, std::size_t self) {
    const auto& y = tp.value(self);
    const auto& g = tp.grad_mut(self);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    tp.grad_mut(x).array() += y.array() * (g.array().colwise() - dot.array());
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat of nothing");
  const auto rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (t.value(p).rows() != rows) throw Error(ErrorKind::ShapeMismatch, "concat_cols: row counts differ");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, t.value(p).cols()) = t.value(p);
    at += t.value(p).cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [saved](Tape& tp, std::size_t self) {
    Eigen::Index at = 0;
    for (const auto& p : saved) {
      const auto cols = tp.value(p).cols();
      if (tp.requires_grad(p)) tp.grad_mut(p) += tp.grad_mut(self).middleCols(at, cols);
      at += cols;
    }
  });
}

Var slice_cols(Tape& t, Var x, Eigen::Index start, Eigen::Index count) {
  const auto& xv = t.value(x);
  if (start < 0 || count < 1 || start + count > xv.cols()) {
    throw Error(ErrorKind::ShapeMismatch, fmt::format("slice [{}, {}) of {} columns", start, start + count, xv.cols()));
  }
  const Var in[] = {x};
  return t.push(xv.middleCols(start, count), in, [x, start, count](Tape& tp, std::size_t self) {
    tp.grad_mut(x).middleCols(start, count) += tp.grad_mut(self);
  });
}

Var sum(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "sum of nothing");
  Matrix out = t.value(parts[0]);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require_shape(t.value(parts[i]), out.rows(), out.cols(), "sum");
    out += t.value(parts[i]);
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [saved](Tape& tp, std::size_t self) {
    for (const auto& p : saved) {
      if (tp.requires_grad(p)) tp.grad_mut(p) += tp.grad_mut(self);
    }
  });
}

Var mean(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "mean of nothing");
  Matrix out = t.value(parts[0]);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require_shape(t.value(parts[i]), out.rows(), out.cols(), "mean");
    out += t.value(parts[i]);
  }
  const double scale = 1.0 / static_cast<double>(parts.size());
  out *= scale;
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [saved, scale](Tape& tp, std::size_t self) {
    for (const auto& p : saved) {
      if (tp.requires_grad(p)) tp.grad_mut(p) += scale * tp.grad_mut(self);
    }
  });
}

Var detach(Tape& t, Var x) { return t.constant(t.value(x)); }

Var lstm_cell(Tape& t, Var x, Var state, Var w, Var u, Var b) {
  const auto& xv = t.value(x);
  const auto& sv = t.value(state);
  const auto& wv = t.value(w);
  const auto& uv = t.value(u);
  const Eigen::Index hidden = uv.cols();
  require_shape(wv, 4 * hidden, xv.cols(), "lstm_cell W");
  require_shape(uv, 4 * hidden, hidden, "lstm_cell U");
  require_shape(t.value(b), 4 * hidden, 1, "lstm_cell b");
  require_shape(sv, xv.rows(), 2 * hidden, "lstm_cell state");

  struct Saved {
    Matrix i, f, g, o, c_prev, tanh_c;
  };
  auto saved = std::make_shared<Saved>();

  Matrix gates = xv * wv.transpose();
  gates.noalias() += sv.leftCols(hidden) * uv.transpose();
  gates.rowwise() += t.value(b).col(0).transpose();

  saved->i = sigmoid_of(gates.middleCols(0, hidden));
  saved->f = sigmoid_of(gates.middleCols(hidden, hidden));
  saved->g = gates.middleCols(2 * hidden, hidden).array().tanh().matrix();
  saved->o = sigmoid_of(gates.middleCols(3 * hidden, hidden));
  saved->c_prev = sv.rightCols(hidden);
  const Matrix c = saved->f.cwiseProduct(saved->c_prev) + saved->i.cwiseProduct(saved->g);
  saved->tanh_c = c.array().tanh().matrix();

  Matrix out(xv.rows(), 2 * hidden);
  out.leftCols(hidden) = saved->o.cwiseProduct(saved->tanh_c);
  out.rightCols(hidden) = c;

  const Var in[] = {x, state, w, u, b};
  return t.push(std::move(out), in, [=](Tape& tp, std::size_t self) {
    const auto& s = *saved;
    const auto& g_out = tp.grad_mut(self);
    const Matrix dh = g_out.leftCols(hidden);
    const Matrix dc = g_out.rightCols(hidden).array() +
                      dh.array() * s.o.array() * (1.0 - s.tanh_c.array().square());

    Matrix dgates(dh.rows(), 4 * hidden);
    dgates.middleCols(0, hidden) = dc.array() * s.g.array() * s.i.array() * (1.0 - s.i.array());
    dgates.middleCols(hidden, hidden) = dc.array() * s.c_prev.array() * s.f.array() * (1.0 - s.f.array());
    dgates.middleCols(2 * hidden, hidden) = dc.array() * s.i.array() * (1.0 - s.g.array().square());
    dgates.middleCols(3 * hidden, hidden) = dh.array() * s.tanh_c.array() * s.o.array() * (1.0 - s.o.array());

    if (tp.requires_grad(x)) tp.grad_mut(x).noalias() += dgates * tp.value(w);
    if (tp.requires_grad(state)) {
      auto& gs = tp.grad_mut(state);
      gs.leftCols(hidden).noalias() += dgates * tp.value(u);
      gs.rightCols(hidden) += dc.cwiseProduct(s.f);
    }
    if (tp.requires_grad(w)) tp.grad_mut(w).noalias() += dgates.transpose() * tp.value(x);
    if (tp.requires_grad(u)) tp.grad_mut(u).noalias() += dgates.transpose() * tp.value(state).leftCols(hidden);
    if (tp.requires_grad(b)) tp.grad_mut(b).col(0) += dgates.colwise().sum().transpose();
  });
}

Var cross_entropy(Tape& t, Var probs, std::span<const int> labels) {
  const auto& p = t.value(probs);
  if (static_cast<Eigen::Index>(labels.size()) != p.rows()) {
    throw Error(ErrorKind::ShapeMismatch, fmt::format("{} labels for {} rows", labels.size(), p.rows()));
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= p.cols()) throw Error(ErrorKind::InvalidClass, fmt::format("class {} of {}", y, p.cols()));
    total -= std::log(p(r, y) + kProbEpsilon);
  }
  const double n = static_cast<double>(p.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<int> saved(labels.begin(), labels.end());
  const Var in[] = {probs};
  return t.push(std::move(out), in, [probs, saved, n](Tape& tp, std::size_t self) {
    const double g = tp.grad_mut(self)(0, 0);
    const auto& pv = tp.value(probs);
    auto& gp = tp.grad_mut(probs);
    for (Eigen::Index r = 0; r < pv.rows(); ++r) {
      const int y = saved[static_cast<std::size_t>(r)];
      gp(r, y) -= g / (n * (pv(r, y) + kProbEpsilon));
    }
  });
}

}  // namespace emomsase::graph
