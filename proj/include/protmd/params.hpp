#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "protmd/errors.hpp"
#include "protmd/rng.hpp"
#include "protmd/tape.hpp"

namespace protmd {

// Named groups of trainable arrays, each with a gradient slot of the same
// shape. Groups keep their insertion order, which fixes checkpoint layout
// and gradient accumulation order.
class ParamSet {
 public:
  Eigen::MatrixXd& add(const std::string& name, int rows, int cols);
  Eigen::MatrixXd& add_uniform(const std::string& name, int rows, int cols, RngStream& rng);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Eigen::MatrixXd& value(const std::string& name);
  const Eigen::MatrixXd& value(const std::string& name) const;
  Eigen::MatrixXd& grad(const std::string& name);
  const Eigen::MatrixXd& grad(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  void zero_grads();
  std::size_t scalar_count() const;
  std::size_t scalar_count(const std::vector<std::string>& groups) const;

  // Versioned binary checkpoint: magic "EGMN", u32 version, then per group
  // u32 name length, name bytes, u32 rows, u32 cols, row-major LE doubles.
  void save(const std::filesystem::path& path) const;
  static ParamSet load(const std::filesystem::path& path);

 private:
  struct Group {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
  };
  std::vector<std::string> order_;
  std::map<std::string, Group> index_;
};

// Parameter groups registered as gradient leaves on one tape.
struct BoundParams {
  ad::Tape* tape = nullptr;
  std::map<std::string, ad::Var> vars;

  ad::Var at(const std::string& name) const;
};

BoundParams bind_params(ad::Tape& tape, const ParamSet& params, bool requires_grad = true);

using LossBuilder = std::function<ad::Var(ad::Tape&, const BoundParams&)>;

// Runs the builder forward, backpropagates, and stores d loss / d param into
// every gradient slot. Returns the loss value.
double compute_gradients(ParamSet& params, const LossBuilder& build);

// Forward-only evaluation of the same builder.
double loss_value(const ParamSet& params, const LossBuilder& build);

// Central-difference check of the gradients currently stored in `params`
// against the plain loss evaluation. Returns the worst relative error with
// denominator max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(ParamSet& params, const std::function<double(const ParamSet&)>& loss,
                               double eps);
double finite_difference_check(ParamSet& params, const std::function<double(const ParamSet&)>& loss,
                               double eps, const std::vector<std::string>& groups);

// Fully-connected block: alternating affine maps with SiLU between layers
// and no activation after the last. Parameters live in a ParamSet under
// "<prefix>.w<i>" / "<prefix>.b<i>".
struct Mlp {
  std::string prefix;
  std::vector<int> dims;  // dims[0] = fan-in, dims.back() = fan-out

  Mlp() = default;
  Mlp(std::string prefix, std::vector<int> dims);

  int fan_in() const { return dims.front(); }
  int fan_out() const { return dims.back(); }

  void init(ParamSet& params, RngStream& rng) const;
  ad::Var apply(ad::Tape& tape, const BoundParams& bound, ad::Var input) const;

  // Convenience for plain vectors: runs the block on a private tape.
  Eigen::VectorXd apply(const ParamSet& params, const Eigen::VectorXd& input) const;
};

}  // namespace protmd
