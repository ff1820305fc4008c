#include "protmd/optim.hpp"

#include <cmath>

namespace protmd {

AdamState::AdamState(const ParamSet& params, AdamConfig config) : config_(config) {
  if (config_.lr <= 0.0) throw InvalidParameter("adam lr must be > 0");
  for (const auto& name : params.names()) {
    const auto& v = params.value(name);
    Moments m;
    m.m = Eigen::MatrixXd::Zero(v.rows(), v.cols());
    m.v = Eigen::MatrixXd::Zero(v.rows(), v.cols());
    moments_.emplace(name, std::move(m));
  }
}

void AdamState::step(ParamSet& params) { step(params, params.names()); }

void AdamState::step(ParamSet& params, const std::vector<std::string>& trainable) {
  for (const auto& name : trainable) {
    if (!params.grad(name).allFinite()) throw NumericalError("non-finite gradient in " + name);
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (const auto& name : trainable) {
    auto it = moments_.find(name);
    if (it == moments_.end()) throw InvalidParameter("adam has no moments for " + name);
    const Eigen::MatrixXd& g = params.grad(name);
    Moments& mom = it->second;
    mom.m = config_.beta1 * mom.m + (1.0 - config_.beta1) * g;
    mom.v = config_.beta2 * mom.v.array().matrix() + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const Eigen::ArrayXXd m_hat = mom.m.array() / bc1;
    const Eigen::ArrayXXd v_hat = mom.v.array() / bc2;
    Eigen::MatrixXd& p = params.value(name);
    p.array() -= config_.lr * m_hat / (v_hat.sqrt() + config_.eps);
    if (!p.allFinite()) throw NumericalError("non-finite parameter after update in " + name);
  }
}

PlateauScheduler::PlateauScheduler(double factor, int patience, double min_lr)
    : factor(factor), patience(patience), min_lr(min_lr) {
  if (factor <= 0.0 || factor >= 1.0) throw InvalidParameter("plateau factor must be in (0, 1)");
  if (patience < 1) throw InvalidParameter("plateau patience must be >= 1");
}

double PlateauScheduler::update(double validation_loss, double lr) {
  if (!std::isfinite(validation_loss)) throw NumericalError("validation loss is not finite");
  if (validation_loss < best) {
    best = validation_loss;
    epochs_since_improvement = 0;
    return lr;
  }
  ++epochs_since_improvement;
  if (epochs_since_improvement > patience) {
    lr = std::max(lr * factor, min_lr);
    epochs_since_improvement = 0;
  }
  return lr;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) throw InvalidParameter("softmax: empty input");
  if (!logits.allFinite()) throw NumericalError("softmax: non-finite logits");
  const Eigen::ArrayXd shifted = logits.array() - logits.maxCoeff();
  const Eigen::ArrayXd e = shifted.exp();
  return (e / e.sum()).matrix();
}

Eigen::VectorXd dropout_apply(const Eigen::VectorXd& x, double rate, bool train, RngStream& rng) {
  if (rate < 0.0 || rate >= 1.0) throw InvalidParameter("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) return x;
  Eigen::VectorXd out(x.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out(i) = rng.uniform() < rate ? 0.0 : x(i) * keep_scale;
  return out;
}

}  // namespace protmd
