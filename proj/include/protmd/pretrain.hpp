#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "protmd/egmn.hpp"
#include "protmd/geom.hpp"
#include "protmd/optim.hpp"
#include "protmd/params.hpp"

namespace protmd {

enum class PoolMode { kMean, kSum };

// Learnable per-interval prompt embeddings plus the shared (no-prompt
// ablation) and downstream fine-tuning embeddings.
struct PromptTable {
  std::vector<int> intervals{1, 5, 10};
  int width = 128;  // psi_prompt

  static constexpr const char* kSharedGroup = "prompt.shared";
  static constexpr const char* kFinetuneGroup = "prompt.finetune";
  static constexpr int kFinetuneDt = 0;  // sentinel interval for the downstream prompt

  void validate() const;
  void init(ParamSet& params, RngStream& rng) const;
  bool has_interval(int dt) const;
  std::string group_for(int dt) const;  // throws UnknownInterval; kFinetuneDt maps to kFinetuneGroup
};

// Widens every atom's feature by the interval's embedding; geometry untouched.
ComplexSnapshot attach_prompt(const ComplexSnapshot& snapshot, int dt, const PromptTable& table,
                              const ParamSet& params);

// Same augmentation on a tape, so the embedding receives gradients; the
// prompt group name selects interval / shared / fine-tune embedding.
ad::Var attach_prompt_on_tape(ad::Tape& tape, const BoundParams& bound,
                              const Eigen::MatrixXd& base_features, const std::string& prompt_group);

// Prompt-augmented encode over one snapshot.
Egmn::TapeOutput encode_with_prompt(ad::Tape& tape, const BoundParams& bound, const Egmn& egmn,
                                    const ComplexSnapshot& snapshot, const std::string& prompt_group,
                                    Mode mode, RngStream* dropout_rng);

struct GenerativeSample {
  ComplexSnapshot input;   // frame at t
  Eigen::MatrixXd target;  // coordinates at t + dt
  int dt = 1;
};

// Builds the (frame t, frame t+dt) pair; throws FrameOutOfRange when the
// target frame does not exist.
GenerativeSample make_generative_sample(const Trajectory& trajectory, int frame_index, int dt);

// Mean over atoms of squared Euclidean distance between the predicted and
// target coordinates, after noising the input and attaching the dt prompt.
ad::Var generative_loss_on_tape(ad::Tape& tape, const BoundParams& bound, const Egmn& egmn,
                                const PromptTable& table, const GenerativeSample& sample,
                                double sigma, bool prompt_enabled, Mode mode,
                                RngStream& noise_rng, RngStream* dropout_rng);
double generative_loss(const ParamSet& params, const Egmn& egmn, const PromptTable& table,
                       const GenerativeSample& sample, double sigma, RngStream& noise_rng,
                       bool prompt_enabled = true);

struct OrderingSample {
  std::vector<ComplexSnapshot> snapshots;  // presentation order (shuffled)
  std::vector<int> true_timesteps;         // aligned with presentation order
};
OrderingSample make_ordering_sample(const Trajectory& trajectory,
                                    const std::vector<int>& frame_indices);

// The pair classifier operates on concatenated pooled embeddings [H_i, H_j];
// logit > 0 reads "i precedes j" for presentation pairs i < j.
Mlp make_order_classifier(int pooled_width, int hidden_width);
Eigen::VectorXd pairwise_order_logits(const ParamSet& params, const Mlp& classifier,
                                      const std::vector<Eigen::VectorXd>& pooled);
ad::Var pairwise_order_logits_on_tape(ad::Tape& tape, const BoundParams& bound,
                                      const Mlp& classifier, const std::vector<ad::Var>& pooled);

// Mean binary cross-entropy over the C(n,2) presentation pairs.
double ordering_loss(const Eigen::VectorXd& logits, const std::vector<int>& true_timesteps);
ad::Var ordering_loss_on_tape(ad::Tape& tape, ad::Var logits,
                              const std::vector<int>& true_timesteps);

struct PairDecision {
  int first = 0;   // presentation index, first < second
  int second = 0;
  double p_first_before_second = 0.5;
};

struct OrderingResult {
  std::vector<int> order;    // presentation indices, earliest first
  bool cycle_broken = false;
};

// Kahn's algorithm over thresholded pair decisions; in-degree ties break by
// presentation index, cycles resolve by dropping the lowest-confidence edge
// among the still-queued nodes.
OrderingResult topological_order(int n, const std::vector<PairDecision>& decisions);

struct PretrainConfig {
  double sigma = 1e-3;
  int context_window = 1;  // Markov horizon; fixed at 1
  bool generative = true;
  bool noise = true;
  bool prompt = true;
  bool ordering = true;
  double ordering_weight = 1.0;  // lambda
  int ordering_n = 4;

  void validate() const;
};

struct PretrainBatch {
  std::vector<GenerativeSample> generative;
  std::vector<OrderingSample> ordering;
};

struct LossReport {
  double generative = 0.0;
  double ordering = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

// One joint objective evaluation + Adam step. A non-finite loss aborts the
// step with NumericalError and leaves the parameters unchanged.
LossReport pretrain_step(const PretrainBatch& batch, const PretrainConfig& config, const Egmn& egmn,
                         const PromptTable& table, const Mlp& order_classifier, ParamSet& params,
                         AdamState& optimizer, PoolMode pool, RngStream& rng);

struct TrainerOptions {
  int epochs = 20;
  int batch_size = 8;
  int ordering_samples_per_batch = 2;
  int steps_per_epoch = 0;  // 0 -> ceil(train frames / batch size)
  double split_ratio = 0.9;
  AdamConfig adam;
  double scheduler_factor = 0.6;
  int scheduler_patience = 10;
  double min_lr = 5e-6;
  PoolMode pool = PoolMode::kMean;
  std::uint64_t seed = 1234;
};

struct EpochReport {
  int epoch = 0;
  double generative = 0.0;
  double ordering = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double validation = 0.0;
};

struct PretrainResult {
  ParamSet best_params;
  double best_validation = 0.0;
  std::vector<EpochReport> epochs;
};

// Full pre-training loop over a set of trajectories: per-trajectory 9:1
// frame split, joint generative + ordering objective, plateau scheduling,
// best checkpoint by validation loss.
PretrainResult pretrain_run(const std::vector<Trajectory>& trajectories, const Egmn& egmn,
                            const PromptTable& table, const PretrainConfig& config,
                            const TrainerOptions& options);

}  // namespace protmd
