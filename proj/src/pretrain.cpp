#include "protmd/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "protmd/config.hpp"
#include "protmd/downstream.hpp"

namespace protmd {

void PromptTable::validate() const {
  if (width < 1) throw InvalidParameter("prompt width must be >= 1");
  if (intervals.empty()) throw InvalidParameter("prompt table needs at least one interval");
  std::set<int> seen;
  for (int dt : intervals) {
    if (dt < 1) throw InvalidParameter("prompt intervals must be >= 1");
    if (!seen.insert(dt).second) throw InvalidParameter("prompt intervals must be unique");
  }
}

void PromptTable::init(ParamSet& params, RngStream& rng) const {
  validate();
  for (int dt : intervals) params.add_uniform(group_for(dt), 1, width, rng);
  params.add_uniform(kSharedGroup, 1, width, rng);
  params.add_uniform(kFinetuneGroup, 1, width, rng);
}

bool PromptTable::has_interval(int dt) const {
  return std::find(intervals.begin(), intervals.end(), dt) != intervals.end();
}

std::string PromptTable::group_for(int dt) const {
  if (dt == kFinetuneDt) return kFinetuneGroup;
  if (!has_interval(dt)) throw UnknownInterval("no prompt for interval " + std::to_string(dt));
  return "prompt.interval_" + std::to_string(dt);
}

ComplexSnapshot attach_prompt(const ComplexSnapshot& snapshot, int dt, const PromptTable& table,
                              const ParamSet& params) {
  const Eigen::MatrixXd& embedding = params.value(table.group_for(dt));
  ComplexSnapshot out = snapshot;
  for (auto& atom : out.atoms) {
    Eigen::VectorXd widened(atom.feature.size() + table.width);
    widened << atom.feature, embedding.row(0).transpose();
    atom.feature = std::move(widened);
  }
  return out;
}

ad::Var attach_prompt_on_tape(ad::Tape& tape, const BoundParams& bound,
                              const Eigen::MatrixXd& base_features,
                              const std::string& prompt_group) {
  const ad::Var base = tape.leaf(base_features, false);
  const ad::Var prompt = tape.broadcast_row(bound.at(prompt_group),
                                            static_cast<int>(base_features.rows()));
  return tape.concat_cols({base, prompt});
}

Egmn::TapeOutput encode_with_prompt(ad::Tape& tape, const BoundParams& bound, const Egmn& egmn,
                                    const ComplexSnapshot& snapshot, const std::string& prompt_group,
                                    Mode mode, RngStream* dropout_rng) {
  const ad::Var h0 = attach_prompt_on_tape(tape, bound, snapshot.features(), prompt_group);
  const ad::Var x0 = tape.leaf(snapshot.positions(), false);
  const Egmn::EdgeArrays edges = Egmn::prepare_edges(snapshot);
  return egmn.encode(tape, bound, h0, x0, edges, mode, dropout_rng);
}

GenerativeSample make_generative_sample(const Trajectory& trajectory, int frame_index, int dt) {
  if (dt < 1) throw InvalidParameter("generative dt must be >= 1");
  const int t_count = trajectory.frame_count();
  if (frame_index < 0 || frame_index >= t_count)
    throw FrameOutOfRange("input frame index out of range");
  if (frame_index + dt >= t_count)
    throw FrameOutOfRange("target frame t+dt exceeds the trajectory");
  GenerativeSample sample;
  sample.input = trajectory.snapshots[static_cast<std::size_t>(frame_index)];
  sample.target = trajectory.snapshots[static_cast<std::size_t>(frame_index + dt)].positions();
  sample.dt = dt;
  return sample;
}

ad::Var generative_loss_on_tape(ad::Tape& tape, const BoundParams& bound, const Egmn& egmn,
                                const PromptTable& table, const GenerativeSample& sample,
                                double sigma, bool prompt_enabled, Mode mode,
                                RngStream& noise_rng, RngStream* dropout_rng) {
  const int atoms = sample.input.atom_count();
  if (sample.target.rows() != atoms || sample.target.cols() != 3)
    throw ShapeError("generative target does not match the input atom count");
  const ComplexSnapshot noisy = perturb_coordinates(sample.input, sigma, noise_rng);
  const std::string group =
      prompt_enabled ? table.group_for(sample.dt) : std::string(PromptTable::kSharedGroup);
  const Egmn::TapeOutput out =
      encode_with_prompt(tape, bound, egmn, noisy, group, mode, dropout_rng);
  const ad::Var diff = tape.sub(out.x, tape.leaf(sample.target, false));
  return tape.scale(tape.sum_all(tape.mul(diff, diff)), 1.0 / static_cast<double>(atoms));
}

double generative_loss(const ParamSet& params, const Egmn& egmn, const PromptTable& table,
                       const GenerativeSample& sample, double sigma, RngStream& noise_rng,
                       bool prompt_enabled) {
  ad::Tape tape;
  const BoundParams bound = bind_params(tape, params, false);
  const ad::Var loss = generative_loss_on_tape(tape, bound, egmn, table, sample, sigma,
                                               prompt_enabled, Mode::kEval, noise_rng, nullptr);
  return tape.scalar(loss);
}

OrderingSample make_ordering_sample(const Trajectory& trajectory,
                                    const std::vector<int>& frame_indices) {
  if (frame_indices.size() < 2) throw InvalidSample("ordering needs at least 2 snapshots");
  std::set<int> seen;
  OrderingSample sample;
  for (int fi : frame_indices) {
    if (fi < 0 || fi >= trajectory.frame_count()) throw InvalidSample("frame index out of range");
    if (!seen.insert(fi).second) throw InvalidSample("ordering frames must be distinct");
    sample.snapshots.push_back(trajectory.snapshots[static_cast<std::size_t>(fi)]);
    sample.true_timesteps.push_back(trajectory.snapshots[static_cast<std::size_t>(fi)].timestep);
  }
  return sample;
}

Mlp make_order_classifier(int pooled_width, int hidden_width) {
  return Mlp("order_cls", {2 * pooled_width, hidden_width, 1});
}

ad::Var pairwise_order_logits_on_tape(ad::Tape& tape, const BoundParams& bound,
                                      const Mlp& classifier, const std::vector<ad::Var>& pooled) {
  const int n = static_cast<int>(pooled.size());
  if (n < 2) throw InvalidSample("pairwise logits need n >= 2 embeddings");
  const ad::Var stacked = tape.concat_rows(pooled);
  std::vector<int> first, second;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      first.push_back(i);
      second.push_back(j);
    }
  const ad::Var pair_input = tape.concat_cols(
      {tape.gather_rows(stacked, first), tape.gather_rows(stacked, second)});
  return classifier.apply(tape, bound, pair_input);
}

Eigen::VectorXd pairwise_order_logits(const ParamSet& params, const Mlp& classifier,
                                      const std::vector<Eigen::VectorXd>& pooled) {
  ad::Tape tape;
  const BoundParams bound = bind_params(tape, params, false);
  std::vector<ad::Var> vars;
  vars.reserve(pooled.size());
  for (const auto& h : pooled) vars.push_back(tape.leaf(h.transpose(), false));
  return tape.value(pairwise_order_logits_on_tape(tape, bound, classifier, vars)).col(0);
}

namespace {

Eigen::VectorXd pair_labels(int logit_count, const std::vector<int>& true_timesteps) {
  const int n = static_cast<int>(true_timesteps.size());
  if (n < 2) throw InvalidSample("ordering needs at least 2 snapshots");
  if (logit_count != n * (n - 1) / 2)
    throw ShapeError("logit count does not match C(n,2) for the given order");
  Eigen::VectorXd labels(logit_count);
  int e = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      labels(e++) = true_timesteps[static_cast<std::size_t>(i)] <
                            true_timesteps[static_cast<std::size_t>(j)]
                        ? 1.0
                        : 0.0;
  return labels;
}

}  // namespace

double ordering_loss(const Eigen::VectorXd& logits, const std::vector<int>& true_timesteps) {
  const Eigen::VectorXd labels = pair_labels(static_cast<int>(logits.size()), true_timesteps);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double z = logits(i);
    total += std::max(z, 0.0) - z * labels(i) + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(logits.size());
}

ad::Var ordering_loss_on_tape(ad::Tape& tape, ad::Var logits,
                              const std::vector<int>& true_timesteps) {
  return tape.bce_with_logits_mean(
      logits, pair_labels(static_cast<int>(tape.value(logits).rows()), true_timesteps));
}

OrderingResult topological_order(int n, const std::vector<PairDecision>& decisions) {
  if (n < 2) throw InvalidSample("ordering needs n >= 2");
  std::vector<std::vector<char>> covered(static_cast<std::size_t>(n),
                                         std::vector<char>(static_cast<std::size_t>(n), 0));
  struct Edge {
    int src, dst;
    double confidence;
    bool alive = true;
  };
  std::vector<Edge> edges;
  for (const auto& d : decisions) {
    if (d.first < 0 || d.second < 0 || d.first >= n || d.second >= n || d.first >= d.second)
      throw InvalidSample("pair decisions must use presentation indices i < j");
    if (covered[static_cast<std::size_t>(d.first)][static_cast<std::size_t>(d.second)])
      throw InvalidSample("duplicate pair decision");
    covered[static_cast<std::size_t>(d.first)][static_cast<std::size_t>(d.second)] = 1;
    if (d.p_first_before_second > 0.5)
      edges.push_back({d.first, d.second, d.p_first_before_second, true});
    else if (d.p_first_before_second < 0.5)
      edges.push_back({d.second, d.first, 1.0 - d.p_first_before_second, true});
    // p == 0.5 constrains nothing.
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!covered[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
        throw InvalidSample("missing pair decision");

  OrderingResult result;
  std::vector<char> placed(static_cast<std::size_t>(n), 0);
  std::vector<int> indegree(static_cast<std::size_t>(n), 0);
  auto recount = [&] {
    std::fill(indegree.begin(), indegree.end(), 0);
    for (const Edge& e : edges)
      if (e.alive && !placed[static_cast<std::size_t>(e.src)] &&
          !placed[static_cast<std::size_t>(e.dst)])
        ++indegree[static_cast<std::size_t>(e.dst)];
  };
  recount();

  while (static_cast<int>(result.order.size()) < n) {
    int next = -1;
    for (int i = 0; i < n; ++i) {
      if (!placed[static_cast<std::size_t>(i)] && indegree[static_cast<std::size_t>(i)] == 0) {
        next = i;  // scan order = presentation-index tie break
        break;
      }
    }
    if (next < 0) {
      // Cycle among the remaining nodes: drop the least confident live edge.
      int weakest = -1;
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const Edge& edge = edges[e];
        if (!edge.alive || placed[static_cast<std::size_t>(edge.src)] ||
            placed[static_cast<std::size_t>(edge.dst)])
          continue;
        if (weakest < 0 || edge.confidence < edges[static_cast<std::size_t>(weakest)].confidence)
          weakest = static_cast<int>(e);
      }
      if (weakest < 0) throw InvalidSample("ordering stalled without live edges");
      edges[static_cast<std::size_t>(weakest)].alive = false;
      result.cycle_broken = true;
      recount();
      continue;
    }
    result.order.push_back(next);
    placed[static_cast<std::size_t>(next)] = 1;
    recount();
  }
  return result;
}

void PretrainConfig::validate() const {
  if (sigma < 0.0) throw InvalidParameter("sigma must be >= 0");
  if (context_window != 1) throw InvalidParameter("context window is fixed at 1");
  if (ordering_weight < 0.0) throw InvalidParameter("ordering weight must be >= 0");
  if (ordering_n < 2) throw InvalidParameter("ordering sample size must be >= 2");
  if (!generative && !ordering) throw InvalidParameter("at least one pre-training task must be on");
}

namespace {

struct BatchLosses {
  ad::Var total;
  double generative = 0.0;
  double ordering = 0.0;
  bool has_any = false;
};

BatchLosses build_batch_losses(ad::Tape& tape, const BoundParams& bound, const PretrainBatch& batch,
                               const PretrainConfig& config, const Egmn& egmn,
                               const PromptTable& table, const Mlp& order_classifier, Mode mode,
                               PoolMode pool, RngStream& noise_rng, RngStream* dropout_rng) {
  BatchLosses out;
  const double sigma_eff = config.noise ? config.sigma : 0.0;
  const std::string ordering_prompt =
      config.prompt ? table.group_for(table.intervals.front())
                    : std::string(PromptTable::kSharedGroup);

  ad::Var gen_mean{};
  bool has_gen = false;
  if (config.generative && !batch.generative.empty()) {
    ad::Var sum{};
    for (std::size_t i = 0; i < batch.generative.size(); ++i) {
      const ad::Var l = generative_loss_on_tape(tape, bound, egmn, table, batch.generative[i],
                                                sigma_eff, config.prompt, mode, noise_rng,
                                                dropout_rng);
      sum = i == 0 ? l : tape.add(sum, l);
    }
    gen_mean = tape.scale(sum, 1.0 / static_cast<double>(batch.generative.size()));
    out.generative = tape.scalar(gen_mean);
    has_gen = true;
  }

  ad::Var ord_mean{};
  bool has_ord = false;
  if (config.ordering && !batch.ordering.empty()) {
    ad::Var sum{};
    for (std::size_t s = 0; s < batch.ordering.size(); ++s) {
      const OrderingSample& sample = batch.ordering[s];
      std::vector<ad::Var> pooled;
      pooled.reserve(sample.snapshots.size());
      for (const auto& snap : sample.snapshots) {
        const Egmn::TapeOutput enc =
            encode_with_prompt(tape, bound, egmn, snap, ordering_prompt, mode, dropout_rng);
        pooled.push_back(pool_on_tape(tape, enc.h, pool));
      }
      const ad::Var logits = pairwise_order_logits_on_tape(tape, bound, order_classifier, pooled);
      const ad::Var l = ordering_loss_on_tape(tape, logits, sample.true_timesteps);
      sum = s == 0 ? l : tape.add(sum, l);
    }
    ord_mean = tape.scale(sum, 1.0 / static_cast<double>(batch.ordering.size()));
    out.ordering = tape.scalar(ord_mean);
    has_ord = true;
  }

  if (has_gen && has_ord)
    out.total = tape.add(gen_mean, tape.scale(ord_mean, config.ordering_weight));
  else if (has_gen)
    out.total = gen_mean;
  else if (has_ord)
    out.total = tape.scale(ord_mean, config.ordering_weight);
  out.has_any = has_gen || has_ord;
  return out;
}

}  // namespace

LossReport pretrain_step(const PretrainBatch& batch, const PretrainConfig& config, const Egmn& egmn,
                         const PromptTable& table, const Mlp& order_classifier, ParamSet& params,
                         AdamState& optimizer, PoolMode pool, RngStream& rng) {
  config.validate();
  if (batch.generative.empty() && batch.ordering.empty())
    throw InvalidSample("pretrain batch is empty");

  RngStream noise_rng = rng.fork(1);
  RngStream dropout_rng = rng.fork(2);

  params.zero_grads();
  ad::Tape tape;
  const BoundParams bound = bind_params(tape, params, true);
  const BatchLosses losses =
      build_batch_losses(tape, bound, batch, config, egmn, table, order_classifier, Mode::kTrain,
                         pool, noise_rng, &dropout_rng);
  if (!losses.has_any) throw InvalidSample("enabled tasks have no samples in this batch");

  LossReport report;
  report.generative = losses.generative;
  report.ordering = losses.ordering;
  report.total = tape.scalar(losses.total);
  report.lr = optimizer.learning_rate();
  if (!std::isfinite(report.total))
    throw NumericalError("pretrain loss is not finite; step aborted");

  tape.backward(losses.total);
  for (const auto& name : params.names()) params.grad(name) += tape.grad(bound.at(name));
  optimizer.step(params);
  return report;
}

namespace {

struct TrajectorySplit {
  std::vector<int> train;  // 0-based frame indices
  std::vector<int> val;
};

PretrainBatch sample_train_batch(const std::vector<Trajectory>& trajectories,
                                 const std::vector<TrajectorySplit>& splits,
                                 const PretrainConfig& config, const PromptTable& table,
                                 const TrainerOptions& options, RngStream& rng) {
  PretrainBatch batch;
  const int n_traj = static_cast<int>(trajectories.size());
  if (config.generative) {
    for (int b = 0; b < options.batch_size; ++b) {
      const int ti = rng.uniform_int(0, n_traj - 1);
      const int dt =
          table.intervals[static_cast<std::size_t>(rng.uniform_int(
              0, static_cast<int>(table.intervals.size()) - 1))];
      // Keep both endpoints inside the train prefix so the held-out tail
      // stays unseen.
      const int train_count = static_cast<int>(splits[static_cast<std::size_t>(ti)].train.size());
      const int max_input = train_count - 1 - dt;
      if (max_input < 0) continue;
      const int fi = rng.uniform_int(0, max_input);
      batch.generative.push_back(
          make_generative_sample(trajectories[static_cast<std::size_t>(ti)], fi, dt));
    }
  }
  if (config.ordering) {
    for (int s = 0; s < options.ordering_samples_per_batch; ++s) {
      const int ti = rng.uniform_int(0, n_traj - 1);
      const auto& train_frames = splits[static_cast<std::size_t>(ti)].train;
      if (static_cast<int>(train_frames.size()) < config.ordering_n) continue;
      std::vector<int> pool_indices = train_frames;
      rng.shuffle(pool_indices);
      pool_indices.resize(static_cast<std::size_t>(config.ordering_n));
      batch.ordering.push_back(
          make_ordering_sample(trajectories[static_cast<std::size_t>(ti)], pool_indices));
    }
  }
  return batch;
}

double validation_loss(const std::vector<Trajectory>& trajectories,
                       const std::vector<TrajectorySplit>& splits, const PretrainConfig& config,
                       const Egmn& egmn, const PromptTable& table, const Mlp& order_classifier,
                       const ParamSet& params, PoolMode pool, std::uint64_t seed) {
  ad::Tape tape;
  const BoundParams bound = bind_params(tape, params, false);
  // Fixed seed: the same noise and the same ordering draws every epoch keep
  // validation losses comparable.
  RngStream noise_rng(seed ^ 0x56414cULL);
  RngStream sample_rng(seed ^ 0x53414dULL);

  PretrainBatch batch;
  for (std::size_t ti = 0; ti < trajectories.size(); ++ti) {
    const Trajectory& traj = trajectories[ti];
    for (int fi : splits[ti].val) {
      for (int dt : table.intervals) {
        if (fi + dt < traj.frame_count())
          batch.generative.push_back(make_generative_sample(traj, fi, dt));
      }
    }
    if (config.ordering && static_cast<int>(splits[ti].val.size()) >= config.ordering_n) {
      std::vector<int> pool_indices = splits[ti].val;
      sample_rng.shuffle(pool_indices);
      pool_indices.resize(static_cast<std::size_t>(config.ordering_n));
      batch.ordering.push_back(make_ordering_sample(traj, pool_indices));
    }
  }
  if (batch.generative.empty() && batch.ordering.empty())
    throw InvalidDataset("no validation samples; trajectories too short for the intervals");

  const BatchLosses losses = build_batch_losses(tape, bound, batch, config, egmn, table,
                                                order_classifier, Mode::kEval, pool, noise_rng,
                                                nullptr);
  return tape.scalar(losses.total);
}

}  // namespace

PretrainResult pretrain_run(const std::vector<Trajectory>& trajectories, const Egmn& egmn,
                            const PromptTable& table, const PretrainConfig& config,
                            const TrainerOptions& options) {
  config.validate();
  table.validate();
  if (trajectories.empty()) throw InvalidDataset("no trajectories to pre-train on");
  int total_train_frames = 0;
  std::vector<TrajectorySplit> splits;
  for (const auto& traj : trajectories) {
    traj.validate();
    for (int dt : table.intervals)
      if (dt > traj.frame_count() - 1)
        throw InvalidDataset("prompt interval exceeds trajectory length");
    auto [train, val] = split_trajectory_frames(traj, options.split_ratio);
    total_train_frames += static_cast<int>(train.size());
    splits.push_back({std::move(train), std::move(val)});
  }

  RngStream init_rng(options.seed);
  ParamSet params;
  egmn.init(params, init_rng);
  table.init(params, init_rng);
  const Mlp classifier =
      make_order_classifier(egmn.config().feature_width, egmn.config().hidden_width);
  classifier.init(params, init_rng);

  AdamState optimizer(params, options.adam);
  PlateauScheduler scheduler(options.scheduler_factor, options.scheduler_patience, options.min_lr);

  const int steps_per_epoch =
      options.steps_per_epoch > 0
          ? options.steps_per_epoch
          : std::max(1, (total_train_frames + options.batch_size - 1) / options.batch_size);

  PretrainResult result;
  result.best_validation = std::numeric_limits<double>::infinity();
  RngStream run_rng = RngStream(options.seed).fork(0x505245ULL);

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    RngStream epoch_rng = run_rng.fork(static_cast<std::uint64_t>(epoch));
    EpochReport report;
    report.epoch = epoch;
    int steps_done = 0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      RngStream step_rng = epoch_rng.fork(static_cast<std::uint64_t>(step));
      const PretrainBatch batch =
          sample_train_batch(trajectories, splits, config, table, options, step_rng);
      if (batch.generative.empty() && batch.ordering.empty()) continue;
      const LossReport step_report = pretrain_step(batch, config, egmn, table, classifier, params,
                                                   optimizer, options.pool, step_rng);
      report.generative += step_report.generative;
      report.ordering += step_report.ordering;
      report.total += step_report.total;
      ++steps_done;
    }
    if (steps_done == 0) throw InvalidDataset("no usable pre-training batches");
    report.generative /= steps_done;
    report.ordering /= steps_done;
    report.total /= steps_done;

    report.validation = validation_loss(trajectories, splits, config, egmn, table, classifier,
                                        params, options.pool, options.seed);
    const double lr = scheduler.update(report.validation, optimizer.learning_rate());
    optimizer.set_learning_rate(lr);
    report.lr = lr;
    result.epochs.push_back(report);

    if (report.validation < result.best_validation) {
      result.best_validation = report.validation;
      result.best_params = params;
    }
  }
  return result;
}

}  // namespace protmd
