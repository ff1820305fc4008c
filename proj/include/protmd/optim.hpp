#pragma once

#include <Eigen/Dense>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "protmd/params.hpp"
#include "protmd/rng.hpp"

namespace protmd {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a ParamSet, first/second moments per group.
class AdamState {
 public:
  AdamState(const ParamSet& params, AdamConfig config);

  // Applies one step from the gradients currently stored in `params`.
  void step(ParamSet& params);
  void step(ParamSet& params, const std::vector<std::string>& trainable);

  double learning_rate() const { return config_.lr; }
  void set_learning_rate(double lr) { config_.lr = lr; }
  long step_count() const { return step_count_; }

 private:
  struct Moments {
    Eigen::MatrixXd m;
    Eigen::MatrixXd v;
  };
  AdamConfig config_;
  std::map<std::string, Moments> moments_;
  long step_count_ = 0;
};

// Reduce-on-plateau: when the validation loss fails to improve for more than
// `patience` consecutive updates, the learning rate is multiplied by `factor`
// (floored at min_lr) and the counter resets.
struct PlateauScheduler {
  double factor = 0.6;
  int patience = 10;
  double min_lr = 5e-6;

  double best = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;

  PlateauScheduler() = default;
  PlateauScheduler(double factor, int patience, double min_lr);

  double update(double validation_loss, double lr);
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

Eigen::VectorXd dropout_apply(const Eigen::VectorXd& x, double rate, bool train, RngStream& rng);

}  // namespace protmd
