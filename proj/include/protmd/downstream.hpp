#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "protmd/metrics.hpp"
#include "protmd/pretrain.hpp"

namespace protmd {

enum class DownstreamMode { kProbe, kFinetune };
enum class DownstreamTask { kAffinity, kEfficacy };

// Mean (or sum) of per-atom encoder features across the whole complex.
Eigen::VectorXd pool_embedding(const Eigen::MatrixXd& features, PoolMode mode = PoolMode::kMean);
ad::Var pool_on_tape(ad::Tape& tape, ad::Var features, PoolMode mode);

// pK = -log10(K), binding constant in molar units.
double pk_from_binding_constant(double binding_constant);

// Prediction heads: one affine map per task, sigmoid on top for efficacy.
void init_heads(ParamSet& params, int pooled_width, RngStream& rng);
double predict_affinity(const ParamSet& params, const Eigen::VectorXd& pooled);
double predict_efficacy(const ParamSet& params, const Eigen::VectorXd& pooled);

// One snapshot (pocket + ligand) with its downstream label.
struct LabeledComplex {
  ComplexSnapshot snapshot;
  double affinity = 0.0;
  int efficacy = 0;
  std::string id;
};

struct DownstreamOptions {
  DownstreamMode mode = DownstreamMode::kFinetune;
  DownstreamTask task = DownstreamTask::kAffinity;
  int epochs = 30;
  int batch_size = 16;
  AdamConfig adam;
  double scheduler_factor = 0.6;
  int scheduler_patience = 10;
  double min_lr = 5e-6;
  PoolMode pool = PoolMode::kMean;
  int atom_cap = 600;
  std::uint64_t seed = 1234;
};

struct DownstreamResult {
  ParamSet params;  // best-by-validation model
  metrics::RegressionReport regression;          // test metrics, affinity task
  metrics::ClassificationReport classification;  // test metrics, efficacy task
  double train_rmse = 0.0;      // affinity task, best model on the train split
  double best_validation = 0.0;
  std::size_t trainable_scalars = 0;
  std::vector<std::string> trainable_groups;
};

// Attaches the fine-tuning prompt to every input and trains with RMSE
// (affinity) or binary cross-entropy (efficacy). Probe mode updates only the
// task head and the fine-tuning prompt; the encoder stays bitwise unchanged.
DownstreamResult train_downstream(const std::vector<LabeledComplex>& train,
                                  const std::vector<LabeledComplex>& val,
                                  const std::vector<LabeledComplex>& test,
                                  const ParamSet& pretrained, const Egmn& egmn,
                                  const PromptTable& table, const DownstreamOptions& options);

}  // namespace protmd
