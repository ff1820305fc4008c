#include "protmd/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace protmd {

Eigen::VectorXd pool_embedding(const Eigen::MatrixXd& features, PoolMode mode) {
  if (features.rows() == 0) throw EmptyInput("pool_embedding: no atoms");
  if (mode == PoolMode::kSum) return features.colwise().sum().transpose();
  return (features.colwise().sum() / static_cast<double>(features.rows())).transpose();
}

ad::Var pool_on_tape(ad::Tape& tape, ad::Var features, PoolMode mode) {
  return mode == PoolMode::kSum ? tape.col_sum(features) : tape.col_mean(features);
}

double pk_from_binding_constant(double binding_constant) {
  if (!(binding_constant > 0.0)) throw InvalidParameter("binding constant must be > 0");
  return -std::log10(binding_constant);
}

namespace {

std::string head_prefix(DownstreamTask task) {
  return task == DownstreamTask::kAffinity ? "head.affinity" : "head.efficacy";
}

double affine_head(const ParamSet& params, const std::string& prefix, const Eigen::VectorXd& pooled) {
  const Eigen::MatrixXd& w = params.value(prefix + ".w");
  const Eigen::MatrixXd& b = params.value(prefix + ".b");
  if (pooled.size() != w.rows()) throw ShapeError(prefix + ": pooled width != head fan-in");
  return (pooled.transpose() * w)(0, 0) + b(0, 0);
}

}  // namespace

void init_heads(ParamSet& params, int pooled_width, RngStream& rng) {
  params.add_uniform("head.affinity.w", pooled_width, 1, rng);
  params.add("head.affinity.b", 1, 1);
  params.add_uniform("head.efficacy.w", pooled_width, 1, rng);
  params.add("head.efficacy.b", 1, 1);
}

double predict_affinity(const ParamSet& params, const Eigen::VectorXd& pooled) {
  return affine_head(params, "head.affinity", pooled);
}

double predict_efficacy(const ParamSet& params, const Eigen::VectorXd& pooled) {
  return 1.0 / (1.0 + std::exp(-affine_head(params, "head.efficacy", pooled)));
}

namespace {

void validate_dataset(const std::vector<LabeledComplex>& set, DownstreamTask task, int atom_cap,
                      const char* split_name) {
  if (set.empty()) throw InvalidDataset(std::string(split_name) + " split is empty");
  for (const auto& sample : set) {
    if (sample.snapshot.atom_count() > atom_cap)
      throw InvalidDataset("complex exceeds the downstream atom cap");
    if (sample.snapshot.ligand_count() < 1 || sample.snapshot.receptor_count() < 1)
      throw InvalidDataset("complex needs both partitions");
    if (task == DownstreamTask::kAffinity && !std::isfinite(sample.affinity))
      throw InvalidDataset("affinity label must be finite");
    if (task == DownstreamTask::kEfficacy && sample.efficacy != 0 && sample.efficacy != 1)
      throw InvalidDataset("efficacy label must be 0 or 1");
  }
}

// Pooled embedding of one complex with the fine-tuning prompt attached.
ad::Var embed_on_tape(ad::Tape& tape, const BoundParams& bound, const Egmn& egmn,
                      const ComplexSnapshot& snapshot, PoolMode pool, Mode mode,
                      RngStream* dropout_rng) {
  const Egmn::TapeOutput enc = encode_with_prompt(tape, bound, egmn, snapshot,
                                                  PromptTable::kFinetuneGroup, mode, dropout_rng);
  return pool_on_tape(tape, enc.h, pool);
}

ad::Var batch_loss(ad::Tape& tape, const BoundParams& bound, const Egmn& egmn,
                   const std::vector<const LabeledComplex*>& batch, DownstreamTask task,
                   PoolMode pool, Mode mode, RngStream* dropout_rng) {
  std::vector<ad::Var> outputs;
  Eigen::VectorXd labels(static_cast<Eigen::Index>(batch.size()));
  const std::string prefix = head_prefix(task);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ad::Var pooled =
        embed_on_tape(tape, bound, egmn, batch[i]->snapshot, pool, mode, dropout_rng);
    outputs.push_back(tape.add(tape.matmul(pooled, bound.at(prefix + ".w")),
                               bound.at(prefix + ".b")));
    labels(static_cast<Eigen::Index>(i)) =
        task == DownstreamTask::kAffinity ? batch[i]->affinity
                                          : static_cast<double>(batch[i]->efficacy);
  }
  const ad::Var stacked = tape.concat_rows(outputs);
  if (task == DownstreamTask::kEfficacy) return tape.bce_with_logits_mean(stacked, labels);
  const ad::Var diff = tape.sub(stacked, tape.leaf(labels, false));
  return tape.sqrt_scalar(tape.mean_all(tape.mul(diff, diff)));
}

Eigen::VectorXd predict_set(const ParamSet& params, const Egmn& egmn, const PromptTable& table,
                            const std::vector<LabeledComplex>& set, DownstreamTask task,
                            PoolMode pool) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const ComplexSnapshot augmented =
        attach_prompt(set[i].snapshot, PromptTable::kFinetuneDt, table, params);
    const EncoderOutput enc = egmn.encode(params, augmented);
    const Eigen::VectorXd pooled = pool_embedding(enc.features, pool);
    out(static_cast<Eigen::Index>(i)) = task == DownstreamTask::kAffinity
                                            ? predict_affinity(params, pooled)
                                            : predict_efficacy(params, pooled);
  }
  return out;
}

double selection_metric(const ParamSet& params, const Egmn& egmn, const PromptTable& table,
                        const std::vector<LabeledComplex>& set, DownstreamTask task, PoolMode pool) {
  const Eigen::VectorXd preds = predict_set(params, egmn, table, set, task, pool);
  if (task == DownstreamTask::kAffinity) {
    Eigen::VectorXd truth(preds.size());
    for (Eigen::Index i = 0; i < preds.size(); ++i)
      truth(i) = set[static_cast<std::size_t>(i)].affinity;
    return metrics::rmse(preds, truth);
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < preds.size(); ++i) {
    const double p = std::clamp(preds(i), 1e-12, 1.0 - 1e-12);
    const int y = set[static_cast<std::size_t>(i)].efficacy;
    total += y == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(preds.size());
}

}  // namespace

DownstreamResult train_downstream(const std::vector<LabeledComplex>& train,
                                  const std::vector<LabeledComplex>& val,
                                  const std::vector<LabeledComplex>& test,
                                  const ParamSet& pretrained, const Egmn& egmn,
                                  const PromptTable& table, const DownstreamOptions& options) {
  validate_dataset(train, options.task, options.atom_cap, "train");
  validate_dataset(val, options.task, options.atom_cap, "validation");
  validate_dataset(test, options.task, options.atom_cap, "test");
  if (options.task == DownstreamTask::kAffinity && test.size() < 2)
    throw InvalidDataset("affinity metrics need at least 2 test samples");

  ParamSet params = pretrained;
  RngStream rng(options.seed);
  if (!params.has("head.affinity.w")) init_heads(params, egmn.config().feature_width, rng);

  std::vector<std::string> trainable;
  if (options.mode == DownstreamMode::kFinetune) {
    trainable = params.names();
  } else {
    trainable = {head_prefix(options.task) + ".w", head_prefix(options.task) + ".b",
                 PromptTable::kFinetuneGroup};
  }

  AdamState optimizer(params, options.adam);
  PlateauScheduler scheduler(options.scheduler_factor, options.scheduler_patience, options.min_lr);

  DownstreamResult result;
  result.trainable_groups = trainable;
  result.trainable_scalars = params.scalar_count(trainable);
  result.best_validation = std::numeric_limits<double>::infinity();
  ParamSet best = params;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  RngStream run_rng = rng.fork(0x444f574eULL);
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    RngStream epoch_rng = run_rng.fork(static_cast<std::uint64_t>(epoch));
    epoch_rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(options.batch_size)) {
      std::vector<const LabeledComplex*> batch;
      for (std::size_t i = at;
           i < std::min(order.size(), at + static_cast<std::size_t>(options.batch_size)); ++i)
        batch.push_back(&train[order[i]]);

      RngStream dropout_rng = epoch_rng.fork(0x64726fULL + at);
      params.zero_grads();
      ad::Tape tape;
      const BoundParams bound = bind_params(tape, params, true);
      const ad::Var loss = batch_loss(tape, bound, egmn, batch, options.task, options.pool,
                                      Mode::kTrain, &dropout_rng);
      if (!std::isfinite(tape.scalar(loss)))
        throw NumericalError("downstream loss is not finite");
      tape.backward(loss);
      for (const auto& name : params.names()) params.grad(name) += tape.grad(bound.at(name));
      optimizer.step(params, trainable);
    }

    const double val_metric = selection_metric(params, egmn, table, val, options.task, options.pool);
    optimizer.set_learning_rate(scheduler.update(val_metric, optimizer.learning_rate()));
    if (val_metric < result.best_validation) {
      result.best_validation = val_metric;
      best = params;
    }
  }

  result.params = std::move(best);

  const Eigen::VectorXd test_preds =
      predict_set(result.params, egmn, table, test, options.task, options.pool);
  if (options.task == DownstreamTask::kAffinity) {
    Eigen::VectorXd truth(test_preds.size());
    for (Eigen::Index i = 0; i < test_preds.size(); ++i)
      truth(i) = test[static_cast<std::size_t>(i)].affinity;
    result.regression = metrics::regression_report(test_preds, truth);

    const Eigen::VectorXd train_preds =
        predict_set(result.params, egmn, table, train, options.task, options.pool);
    Eigen::VectorXd train_truth(train_preds.size());
    for (Eigen::Index i = 0; i < train_preds.size(); ++i)
      train_truth(i) = train[static_cast<std::size_t>(i)].affinity;
    result.train_rmse = metrics::rmse(train_preds, train_truth);
  } else {
    std::vector<int> labels;
    labels.reserve(test.size());
    for (const auto& sample : test) labels.push_back(sample.efficacy);
    result.classification = metrics::ranking_metrics(test_preds, labels);
  }
  return result;
}

}  // namespace protmd
