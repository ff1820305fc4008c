#include "protmd/tape.hpp"

#include <cmath>
#include <utility>

namespace protmd::ad {

namespace {

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": operand shapes differ");
}

}  // namespace

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw InvalidParameter("tape: dangling Var handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw InvalidParameter("tape: dangling Var handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::make(Eigen::MatrixXd value, bool requires_grad, std::function<void(Tape&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = requires_grad ? std::move(backward) : nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Eigen::MatrixXd& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!n.grad_ready) {
    n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    n.grad_ready = true;
  }
  n.grad += g;
}

Var Tape::leaf(Eigen::MatrixXd value, bool requires_grad) {
  return make(std::move(value), requires_grad, nullptr);
}

double Tape::scalar(Var v) const {
  const auto& m = node(v).value;
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("scalar: node is not 1x1");
  return m(0, 0);
}

Eigen::MatrixXd Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad_ready) return Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) throw ShapeError("backward: root must be 1x1");
  for (auto& n : nodes_) {
    n.grad_ready = false;
    n.grad.resize(0, 0);
  }
  accumulate(root, Eigen::MatrixXd::Ones(1, 1));
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad_ready && n.backward) n.backward(*this);
  }
}

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Eigen::MatrixXd out = value(a) + value(b);
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [a, b, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Eigen::MatrixXd out = value(a) - value(b);
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [a, b, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(value(a), value(b), "mul");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Eigen::MatrixXd out = value(a).cwiseProduct(value(b));
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [a, b, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    t.accumulate(a, g.cwiseProduct(t.value(b)));
    t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::scale(Var a, double s) {
  Eigen::MatrixXd out = value(a) * s;
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, s, result](Tape& t) {
    t.accumulate(a, t.grad(result) * s);
  });
}

Var Tape::add_rowvec(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw ShapeError("add_rowvec: row must be 1 x cols(a)");
  const bool rg = node(a).requires_grad || node(row).requires_grad;
  Eigen::MatrixXd out = value(a);
  out.rowwise() += value(row).row(0);
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [a, row, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var Tape::broadcast_row(Var row, int n) {
  if (value(row).rows() != 1) throw ShapeError("broadcast_row: input must be 1 x m");
  if (n < 0) throw InvalidParameter("broadcast_row: negative row count");
  Eigen::MatrixXd out = value(row).replicate(n, 1);
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(row).requires_grad, [row, result](Tape& t) {
    t.accumulate(row, t.grad(result).colwise().sum());
  });
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw ShapeError("matmul: inner dimensions differ");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Eigen::MatrixXd out = value(a) * value(b);
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [a, b, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    t.accumulate(a, g * t.value(b).transpose());
    t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var Tape::rows_dot(Var a, Var b) {
  check_same_shape(value(a), value(b), "rows_dot");
  Eigen::MatrixXd out = value(a).cwiseProduct(value(b)).rowwise().sum();
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [a, b, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);  // n x 1
    t.accumulate(a, t.value(b).array().colwise() * g.col(0).array());
    t.accumulate(b, t.value(a).array().colwise() * g.col(0).array());
  });
}

Var Tape::row_norms(Var a) {
  Eigen::MatrixXd out = value(a).rowwise().norm();
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, result](Tape& t) {
    const Eigen::MatrixXd& x = t.value(a);
    const Eigen::MatrixXd& norms = t.value(result);
    const Eigen::MatrixXd g = t.grad(result);
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
      // Subgradient 0 at coincident points; zero-length edges are legal.
      if (norms(i, 0) > 0.0) gx.row(i) = g(i, 0) / norms(i, 0) * x.row(i);
    }
    t.accumulate(a, gx);
  });
}

Var Tape::scale_rows(Var a, Var s) {
  if (value(s).cols() != 1 || value(s).rows() != value(a).rows())
    throw ShapeError("scale_rows: scale must be rows(a) x 1");
  const bool rg = node(a).requires_grad || node(s).requires_grad;
  Eigen::MatrixXd out = value(a).array().colwise() * value(s).col(0).array();
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [a, s, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    t.accumulate(a, g.array().colwise() * t.value(s).col(0).array());
    t.accumulate(s, g.cwiseProduct(t.value(a)).rowwise().sum());
  });
}

Var Tape::clamp_rows_by_norm(Var a, double max_norm) {
  if (max_norm <= 0.0) throw InvalidParameter("clamp_rows_by_norm: bound must be > 0");
  const Eigen::MatrixXd& x = value(a);
  Eigen::MatrixXd out = x;
  for (int i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n > max_norm) out.row(i) *= max_norm / n;
  }
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, max_norm, result](Tape& t) {
    const Eigen::MatrixXd& x = t.value(a);
    const Eigen::MatrixXd g = t.grad(result);
    Eigen::MatrixXd gx(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
      const double n = x.row(i).norm();
      if (n > max_norm) {
        // d/dx of c*x/||x|| = c/||x|| (I - x̂ x̂ᵀ)
        const Eigen::RowVectorXd unit = x.row(i) / n;
        gx.row(i) = max_norm / n * (g.row(i) - unit.dot(g.row(i)) * unit);
      } else {
        gx.row(i) = g.row(i);
      }
    }
    t.accumulate(a, gx);
  });
}

Var Tape::silu(Var a) {
  const Eigen::ArrayXXd x = value(a).array();
  const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-x).exp());
  Eigen::MatrixXd out = (x * sig).matrix();
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, result](Tape& t) {
    const Eigen::ArrayXXd x = t.value(a).array();
    const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-x).exp());
    const Eigen::ArrayXXd d = sig * (1.0 + x * (1.0 - sig));
    t.accumulate(a, (t.grad(result).array() * d).matrix());
  });
}

Var Tape::sigmoid(Var a) {
  Eigen::MatrixXd out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, result](Tape& t) {
    const Eigen::ArrayXXd y = t.value(result).array();
    t.accumulate(a, (t.grad(result).array() * y * (1.0 - y)).matrix());
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidParameter("concat_cols: no operands");
  const Eigen::Index rows = value(parts.front()).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += value(p).cols();
    rg = rg || node(p).requires_grad;
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [parts, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    Eigen::Index at = 0;
    for (Var p : parts) {
      const Eigen::Index w = t.value(p).cols();
      t.accumulate(p, g.middleCols(at, w));
      at += w;
    }
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidParameter("concat_rows: no operands");
  const Eigen::Index cols = value(parts.front()).cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += value(p).rows();
    rg = rg || node(p).requires_grad;
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), rg, [parts, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    Eigen::Index at = 0;
    for (Var p : parts) {
      const Eigen::Index h = t.value(p).rows();
      t.accumulate(p, g.middleRows(at, h));
      at += h;
    }
  });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Eigen::MatrixXd& x = value(a);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || idx[e] >= x.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(e)) = x.row(idx[e]);
  }
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, idx = std::move(idx), result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(t.value(a).rows(), t.value(a).cols());
    for (std::size_t e = 0; e < idx.size(); ++e)
      gx.row(idx[e]) += g.row(static_cast<Eigen::Index>(e));
    t.accumulate(a, gx);
  });
}

Var Tape::scatter_add_rows(Var a, std::vector<int> idx, int out_rows) {
  const Eigen::MatrixXd& x = value(a);
  if (static_cast<Eigen::Index>(idx.size()) != x.rows())
    throw ShapeError("scatter_add_rows: one index per input row required");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(out_rows, x.cols());
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || idx[e] >= out_rows) throw ShapeError("scatter_add_rows: index out of range");
    out.row(idx[e]) += x.row(static_cast<Eigen::Index>(e));
  }
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, idx = std::move(idx), result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);
    Eigen::MatrixXd gx(static_cast<Eigen::Index>(idx.size()), g.cols());
    for (std::size_t e = 0; e < idx.size(); ++e)
      gx.row(static_cast<Eigen::Index>(e)) = g.row(idx[e]);
    t.accumulate(a, gx);
  });
}

Var Tape::sum_all(Var a) {
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = value(a).sum();
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, result](Tape& t) {
    const double g = t.grad(result)(0, 0);
    t.accumulate(a, Eigen::MatrixXd::Constant(t.value(a).rows(), t.value(a).cols(), g));
  });
}

Var Tape::mean_all(Var a) {
  const double count = static_cast<double>(value(a).size());
  if (count == 0.0) throw EmptyInput("mean_all: empty matrix");
  return scale(sum_all(a), 1.0 / count);
}

Var Tape::col_sum(Var a) {
  Eigen::MatrixXd out = value(a).colwise().sum();
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, result](Tape& t) {
    const Eigen::MatrixXd g = t.grad(result);  // 1 x m
    t.accumulate(a, g.replicate(t.value(a).rows(), 1));
  });
}

Var Tape::col_mean(Var a) {
  if (value(a).rows() == 0) throw EmptyInput("col_mean: no rows");
  return scale(col_sum(a), 1.0 / static_cast<double>(value(a).rows()));
}

Var Tape::segment_softmax(Var scores, std::vector<int> segments, int segment_count) {
  const Eigen::MatrixXd& s = value(scores);
  if (s.cols() != 1) throw ShapeError("segment_softmax: scores must be n x 1");
  if (static_cast<Eigen::Index>(segments.size()) != s.rows())
    throw ShapeError("segment_softmax: one segment id per score required");

  // Shift by the per-segment max; softmax is shift-invariant so the max can
  // be treated as a constant in the backward pass.
  std::vector<double> seg_max(static_cast<std::size_t>(segment_count),
                              -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < segments.size(); ++e) {
    const int g = segments[e];
    if (g < 0 || g >= segment_count) throw ShapeError("segment_softmax: segment id out of range");
    seg_max[static_cast<std::size_t>(g)] =
        std::max(seg_max[static_cast<std::size_t>(g)], s(static_cast<Eigen::Index>(e), 0));
  }
  std::vector<double> seg_sum(static_cast<std::size_t>(segment_count), 0.0);
  Eigen::MatrixXd out(s.rows(), 1);
  for (std::size_t e = 0; e < segments.size(); ++e) {
    const auto g = static_cast<std::size_t>(segments[e]);
    out(static_cast<Eigen::Index>(e), 0) = std::exp(s(static_cast<Eigen::Index>(e), 0) - seg_max[g]);
    seg_sum[g] += out(static_cast<Eigen::Index>(e), 0);
  }
  for (std::size_t e = 0; e < segments.size(); ++e)
    out(static_cast<Eigen::Index>(e), 0) /= seg_sum[static_cast<std::size_t>(segments[e])];

  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(scores).requires_grad,
              [scores, segments = std::move(segments), segment_count, result](Tape& t) {
                const Eigen::MatrixXd& w = t.value(result);
                const Eigen::MatrixXd g = t.grad(result);
                std::vector<double> seg_dot(static_cast<std::size_t>(segment_count), 0.0);
                for (std::size_t e = 0; e < segments.size(); ++e)
                  seg_dot[static_cast<std::size_t>(segments[e])] +=
                      w(static_cast<Eigen::Index>(e), 0) * g(static_cast<Eigen::Index>(e), 0);
                Eigen::MatrixXd gs(w.rows(), 1);
                for (std::size_t e = 0; e < segments.size(); ++e) {
                  const auto i = static_cast<Eigen::Index>(e);
                  gs(i, 0) = w(i, 0) * (g(i, 0) - seg_dot[static_cast<std::size_t>(segments[e])]);
                }
                t.accumulate(scores, gs);
              });
}

Var Tape::sqrt_scalar(Var a) {
  const double v = scalar(a);
  if (v < 0.0) throw NumericalError("sqrt_scalar: negative input");
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = std::sqrt(v);
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(a).requires_grad, [a, result](Tape& t) {
    const double y = t.value(result)(0, 0);
    const double d = y > 0.0 ? 0.5 / y : 0.0;
    t.accumulate(a, t.grad(result) * d);
  });
}

Var Tape::bce_with_logits_mean(Var logits, Eigen::VectorXd labels) {
  const Eigen::MatrixXd& z = value(logits);
  if (z.cols() != 1 || z.rows() != labels.size())
    throw ShapeError("bce_with_logits_mean: logits must be n x 1 matching labels");
  if (z.rows() == 0) throw EmptyInput("bce_with_logits_mean: no samples");
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double zi = z(i, 0);
    total += std::max(zi, 0.0) - zi * labels(i) + std::log1p(std::exp(-std::abs(zi)));
  }
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = total / static_cast<double>(z.rows());
  Var result{static_cast<int>(nodes_.size())};
  return make(std::move(out), node(logits).requires_grad,
              [logits, labels = std::move(labels), result](Tape& t) {
                const Eigen::MatrixXd& z = t.value(logits);
                const double g = t.grad(result)(0, 0) / static_cast<double>(z.rows());
                Eigen::MatrixXd gz(z.rows(), 1);
                for (Eigen::Index i = 0; i < z.rows(); ++i) {
                  const double p = 1.0 / (1.0 + std::exp(-z(i, 0)));
                  gz(i, 0) = g * (p - labels(i));
                }
                t.accumulate(logits, gz);
              });
}

Var Tape::dropout(Var a, double rate, bool train, RngStream& rng) {
  if (rate < 0.0 || rate >= 1.0) throw InvalidParameter("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  const Eigen::MatrixXd& x = value(a);
  Eigen::MatrixXd mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      mask(i, j) = rng.uniform() < rate ? 0.0 : keep_scale;
  Var m = leaf(std::move(mask), false);
  return mul(a, m);
}

}  // namespace protmd::ad
