#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "protmd/errors.hpp"
#include "protmd/rng.hpp"

namespace protmd::ad {

// Handle to a node on a Tape. Plain index; cheap to copy.
struct Var {
  int id = -1;
};

// Reverse-mode differentiation tape over dense double matrices. Every
// operation appends one node; backward() walks the nodes in reverse creation
// order, which makes gradient accumulation order deterministic.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Eigen::MatrixXd value, bool requires_grad = false);

  const Eigen::MatrixXd& value(Var v) const { return node(v).value; }
  double scalar(Var v) const;
  // Gradient of the last backward() root with respect to v. Zero matrix if
  // the node was never touched by the sweep.
  Eigen::MatrixXd grad(Var v) const;

  void backward(Var root);  // root must be 1x1

  // Elementwise / broadcast arithmetic.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_rowvec(Var a, Var row);   // a: n x m, row: 1 x m
  Var broadcast_row(Var row, int n);

  // Linear algebra.
  Var matmul(Var a, Var b);
  Var rows_dot(Var a, Var b);       // n x m, n x m -> n x 1
  Var row_norms(Var a);             // n x m -> n x 1 (Euclidean)
  Var scale_rows(Var a, Var s);     // a: n x m, s: n x 1
  Var clamp_rows_by_norm(Var a, double max_norm);

  // Nonlinearities.
  Var silu(Var a);
  Var sigmoid(Var a);

  // Shape plumbing.
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var gather_rows(Var a, std::vector<int> idx);
  Var scatter_add_rows(Var a, std::vector<int> idx, int out_rows);

  // Reductions.
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var col_sum(Var a);
  Var col_mean(Var a);

  // Grouped softmax over rows of an n x 1 score column; segment ids pick the
  // group each row belongs to. Rows of an empty segment do not exist, so
  // every weight column sums to 1 within its segment.
  Var segment_softmax(Var scores, std::vector<int> segments, int segment_count);

  Var sqrt_scalar(Var a);  // 1x1

  // Mean binary cross-entropy against fixed 0/1 labels, numerically stable
  // formulation on logits.
  Var bce_with_logits_mean(Var logits, Eigen::VectorXd labels);

  // Inverted-dropout; identity when train is false or rate is 0.
  Var dropout(Var a, double rate, bool train, RngStream& rng);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::function<void(Tape&)> backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var make(Eigen::MatrixXd value, bool requires_grad, std::function<void(Tape&)> backward);
  void accumulate(Var v, const Eigen::MatrixXd& g);

  std::vector<Node> nodes_;
};

}  // namespace protmd::ad
