#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "protmd/downstream.hpp"
#include "protmd/pretrain.hpp"
#include "protmd/synthmd.hpp"

using namespace protmd;

namespace {

struct TinyModel {
  EgmnConfig cfg;
  Egmn egmn;
  PromptTable table;
  Mlp classifier;
  ParamSet params;

  explicit TinyModel(std::uint64_t seed, int psi_h = 4, int psi_prompt = 4, int layers = 1,
                     int hidden = 6)
      : cfg{}, egmn{make_cfg(psi_h + psi_prompt, layers, hidden)},
        table{{1, 5, 10}, psi_prompt}, classifier{make_order_classifier(psi_h + psi_prompt, hidden)} {
    cfg = egmn.config();
    RngStream rng(seed);
    egmn.init(params, rng);
    table.init(params, rng);
    classifier.init(params, rng);
  }

  static EgmnConfig make_cfg(int feature, int layers, int hidden) {
    EgmnConfig c;
    c.layers = layers;
    c.feature_width = feature;
    c.hidden_width = hidden;
    c.attention_width = hidden;
    c.dropout_rate = 0.0;
    c.coord_clamp = 2.0;
    c.normalize_coord_updates = true;
    return c;
  }

  void zero_coordinate_gates() {
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string prefix = "egmn.layer" + std::to_string(l);
      params.value(prefix + ".phi_m.w1").setZero();
      params.value(prefix + ".phi_m.b1").setZero();
      params.value(prefix + ".phi_mu.w1").setZero();
      params.value(prefix + ".phi_mu.b1").setZero();
    }
  }
};

Trajectory tiny_trajectory(std::uint64_t seed, int frames = 24) {
  ToyComplexSpec spec;
  spec.ligand_atoms = 3;
  spec.receptor_atoms = 6;
  spec.frames = frames;
  spec.seed = seed;
  spec.feature_width = 4;  // psi_h of the tiny model
  spec.temperature = 0.02;
  return generate_trajectory(spec);
}

}  // namespace

TEST_CASE("attach_prompt widens features and leaves geometry alone") {
  TinyModel model(1);
  const Trajectory traj = tiny_trajectory(5, 12);
  const ComplexSnapshot& snap = traj.snapshots.front();

  const ComplexSnapshot widened = attach_prompt(snap, 5, model.table, model.params);
  CHECK(widened.atoms.front().feature.size() == 4 + 4);
  CHECK(widened.positions() == snap.positions());
  CHECK(widened.edges.intra == snap.edges.intra);

  // Full-scale widths: psi_h = psi_prompt = 128 concatenate to 256.
  PromptTable full;
  full.width = 128;
  ParamSet full_params;
  RngStream rng(3);
  full.init(full_params, rng);
  ComplexSnapshot wide_snap = snap;
  for (auto& a : wide_snap.atoms) a.feature = Eigen::VectorXd::Zero(128);
  CHECK(attach_prompt(wide_snap, 1, full, full_params).atoms.front().feature.size() == 256);

  CHECK_THROWS_AS(attach_prompt(snap, 7, model.table, model.params), UnknownInterval);

  const ComplexSnapshot again = attach_prompt(snap, 5, model.table, model.params);
  CHECK(again.features() == widened.features());
}

TEST_CASE("make_generative_sample guards the frame range") {
  const Trajectory traj = tiny_trajectory(8, 12);
  CHECK_NOTHROW(make_generative_sample(traj, 0, 5));
  CHECK_THROWS_AS(make_generative_sample(traj, 8, 5), FrameOutOfRange);
  CHECK_THROWS_AS(make_generative_sample(traj, 12, 1), FrameOutOfRange);
  CHECK_THROWS_AS(make_generative_sample(traj, -1, 1), FrameOutOfRange);
}

TEST_CASE("generative loss: zero at an exact prediction, 1.0 for a unit miss") {
  TinyModel model(2);
  model.zero_coordinate_gates();  // encoder now reproduces the input coords

  // Single-atom system.
  ComplexSnapshot atom;
  atom.timestep = 1;
  Atom a;
  a.element = "C";
  a.partition = Partition::kLigand;
  a.feature = Eigen::VectorXd::Zero(4);
  a.position = Eigen::Vector3d(0.5, -1.0, 2.0);
  atom.atoms.push_back(a);

  GenerativeSample sample;
  sample.input = atom;
  sample.target = atom.positions();
  sample.dt = 1;

  RngStream noise(3);
  CHECK(generative_loss(model.params, model.egmn, model.table, sample, 0.0, noise) ==
        doctest::Approx(0.0));

  sample.target(0, 0) += 1.0;  // off by (1, 0, 0)
  CHECK(generative_loss(model.params, model.egmn, model.table, sample, 0.0, noise) ==
        doctest::Approx(1.0));
}

TEST_CASE("generative loss is invariant under a joint rigid motion") {
  TinyModel model(4);
  const Trajectory traj = tiny_trajectory(9, 16);
  const GenerativeSample sample = make_generative_sample(traj, 2, 5);

  RngStream noise_a(77);
  const double base =
      generative_loss(model.params, model.egmn, model.table, sample, 0.0, noise_a);

  RngStream rot_rng(5);
  const Eigen::Matrix3d rot = oracles::random_orthogonal(rot_rng);
  const Eigen::RowVector3d shift(1.0, -2.0, 0.5);
  GenerativeSample moved = sample;
  moved.input.set_positions(((sample.input.positions() * rot.transpose()).rowwise() + shift).eval());
  moved.input.rebuild_edges({4.0, 4.0});
  moved.target = (sample.target * rot.transpose()).rowwise() + shift;

  RngStream noise_b(77);
  const double transformed =
      generative_loss(model.params, model.egmn, model.table, moved, 0.0, noise_b);
  CHECK(transformed == doctest::Approx(base).epsilon(1e-8));

  // At the transformed ground truth the minimum is still zero.
  TinyModel frozen(4);
  frozen.zero_coordinate_gates();
  GenerativeSample still = moved;
  still.target = still.input.positions();
  RngStream noise_c(77);
  CHECK(generative_loss(frozen.params, frozen.egmn, frozen.table, still, 0.0, noise_c) ==
        doctest::Approx(0.0));
}

TEST_CASE("pairwise logits: counts and the zero-classifier baseline") {
  TinyModel model(6);
  std::vector<Eigen::VectorXd> pooled;
  for (int i = 0; i < 4; ++i) pooled.push_back(Eigen::VectorXd::Constant(8, 0.1 * i));

  CHECK(pairwise_order_logits(model.params, model.classifier,
                              {pooled[0], pooled[1]})
            .size() == 1);
  CHECK(pairwise_order_logits(model.params, model.classifier, pooled).size() == 6);

  model.params.value("order_cls.w0").setZero();
  model.params.value("order_cls.w1").setZero();
  model.params.value("order_cls.b0").setZero();
  model.params.value("order_cls.b1").setZero();
  const Eigen::VectorXd logits = pairwise_order_logits(model.params, model.classifier, pooled);
  CHECK(logits.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ordering loss: frozen values") {
  // All-zero logits: BCE at p = 0.5 is ln 2.
  CHECK(ordering_loss(Eigen::VectorXd::Zero(6), {4, 1, 9, 2}) == doctest::Approx(std::log(2.0)));

  // Saturated correct logits drive the loss to zero.
  Eigen::VectorXd sure(3);
  sure << 50, 50, 50;
  CHECK(ordering_loss(sure, {1, 2, 3}) < 1e-20);

  // n = 3, logits (2, -1, 0.5), true order s1 < s0 < s2; hand-evaluated BCE.
  Eigen::VectorXd logits(3);
  logits << 2.0, -1.0, 0.5;
  const double loss = ordering_loss(logits, {2, 1, 3});
  CHECK(loss == doctest::Approx(1.3047555609137672).epsilon(1e-12));

  CHECK_THROWS_AS(ordering_loss(Eigen::VectorXd::Zero(5), {1, 2, 3}), ShapeError);
}

TEST_CASE("topological order: clean chains, the documented cycle, validation") {
  {
    // Consistent decisions a < b < c.
    const OrderingResult r = topological_order(
        3, {{0, 1, 0.9}, {0, 2, 0.8}, {1, 2, 0.7}});
    CHECK(r.order == std::vector<int>{0, 1, 2});
    CHECK_FALSE(r.cycle_broken);
  }
  {
    const OrderingResult r = topological_order(2, {{0, 1, 0.2}});
    CHECK(r.order == std::vector<int>{1, 0});
    CHECK_FALSE(r.cycle_broken);
  }
  {
    // Cycle a->b (0.9), b->c (0.8), c->a (0.6): the 0.6 edge goes.
    const OrderingResult r = topological_order(
        3, {{0, 1, 0.9}, {0, 2, 0.4}, {1, 2, 0.8}});
    CHECK(r.order == std::vector<int>{0, 1, 2});
    CHECK(r.cycle_broken);
  }
  CHECK_THROWS_AS(topological_order(3, {{0, 1, 0.9}}), InvalidSample);
  CHECK_THROWS_AS(topological_order(3, {{0, 1, 0.9}, {0, 1, 0.8}, {1, 2, 0.7}}), InvalidSample);
}

TEST_CASE("topological order agrees with the n! oracle on consistent instances") {
  RngStream rng(55);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = rng.uniform_int(2, 5);
    // Random strict tournament probabilities.
    std::vector<std::vector<double>> p(static_cast<std::size_t>(n),
                                       std::vector<double>(static_cast<std::size_t>(n), 0.5));
    std::vector<PairDecision> decisions;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double prob = rng.uniform(0.05, 0.95);
        if (std::abs(prob - 0.5) < 0.02) prob = 0.6;
        p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = prob;
        decisions.push_back({i, j, prob});
      }

    const OrderingResult got = topological_order(n, decisions);
    // Always a permutation, cycles or not.
    std::vector<int> sorted = got.order;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);

    if (got.cycle_broken) continue;  // consistency check only on acyclic instances
    ++checked;
    CHECK(got.order == oracles::best_order_bruteforce(n, p));
  }
  CHECK(checked > 50);
}

TEST_CASE("pretrain step: lambda wiring, descent, and abort on non-finite loss") {
  TinyModel model(7);
  const Trajectory traj = tiny_trajectory(21, 24);

  PretrainBatch batch;
  batch.generative.push_back(make_generative_sample(traj, 0, 1));
  batch.generative.push_back(make_generative_sample(traj, 3, 5));
  batch.ordering.push_back(make_ordering_sample(traj, {7, 2, 11, 5}));

  PretrainConfig config;
  config.sigma = 1e-3;
  config.ordering_weight = 0.0;

  {
    ParamSet params = model.params;
    AdamState opt(params, {});
    RngStream rng(1);
    const LossReport r = pretrain_step(batch, config, model.egmn, model.table, model.classifier,
                                       params, opt, PoolMode::kMean, rng);
    CHECK(r.total == doctest::Approx(r.generative));  // lambda = 0
    CHECK(r.ordering > 0.0);
  }

  {
    // A small enough step must not increase the loss on the same batch.
    ParamSet params = model.params;
    AdamConfig small;
    small.lr = 1e-5;
    AdamState opt(params, small);
    PretrainConfig joint = config;
    joint.ordering_weight = 1.0;

    auto eval_batch = [&](const ParamSet& p) {
      ad::Tape tape;
      const BoundParams bound = bind_params(tape, p, false);
      RngStream noise(42);
      ad::Var total{};
      for (std::size_t i = 0; i < batch.generative.size(); ++i) {
        const ad::Var l = generative_loss_on_tape(tape, bound, model.egmn, model.table,
                                                  batch.generative[i], 0.0, true, Mode::kEval,
                                                  noise, nullptr);
        total = i == 0 ? l : tape.add(total, l);
      }
      return tape.scalar(total) / static_cast<double>(batch.generative.size());
    };

    const double before = eval_batch(params);
    PretrainBatch noiseless = batch;
    PretrainConfig quiet = joint;
    quiet.noise = false;
    RngStream rng(2);
    pretrain_step(noiseless, quiet, model.egmn, model.table, model.classifier, params, opt,
                  PoolMode::kMean, rng);
    const double after = eval_batch(params);
    CHECK(after <= before);
  }

  {
    // Non-finite loss aborts the step and leaves parameters untouched.
    ParamSet params = model.params;
    AdamState opt(params, {});
    PretrainBatch poisoned = batch;
    poisoned.generative[0].target(0, 0) = std::numeric_limits<double>::infinity();
    RngStream rng(3);
    CHECK_THROWS_AS(pretrain_step(poisoned, config, model.egmn, model.table, model.classifier,
                                  params, opt, PoolMode::kMean, rng),
                    NumericalError);
    for (const auto& name : params.names()) CHECK(params.value(name) == model.params.value(name));
  }
}

TEST_CASE("naive-DG toggles route gradients to the shared prompt and ignore sigma") {
  TinyModel model(9);
  const Trajectory traj = tiny_trajectory(31, 24);
  PretrainBatch batch;
  batch.generative.push_back(make_generative_sample(traj, 1, 1));

  PretrainConfig naive;
  naive.noise = false;
  naive.prompt = false;
  naive.ordering = false;
  naive.sigma = 123.0;  // must be ignored when noise is off

  ParamSet params = model.params;
  AdamState opt(params, {});
  RngStream rng(4);
  const LossReport r = pretrain_step(batch, naive, model.egmn, model.table, model.classifier,
                                     params, opt, PoolMode::kMean, rng);
  CHECK(r.ordering == 0.0);

  // Gradient flowed into the shared prompt, not the interval prompts.
  CHECK(params.grad(PromptTable::kSharedGroup).cwiseAbs().maxCoeff() > 0.0);
  CHECK(params.grad(model.table.group_for(1)).cwiseAbs().maxCoeff() == 0.0);

  RngStream noise(9);
  const GenerativeSample& sample = batch.generative[0];
  const double quiet =
      generative_loss(model.params, model.egmn, model.table, sample, 0.0, noise, false);
  CHECK(r.generative == doctest::Approx(quiet));  // sigma ignored under noise=false
}

TEST_CASE("pretrain_run: epochs reported, pair counts, and loss monotone in lambda") {
  TinyModel model(10);
  std::vector<Trajectory> data{tiny_trajectory(41, 24), tiny_trajectory(42, 24)};

  PretrainConfig config;
  config.ordering_n = 3;
  TrainerOptions options;
  options.epochs = 2;
  options.batch_size = 3;
  options.ordering_samples_per_batch = 1;
  options.steps_per_epoch = 4;
  options.adam.lr = 1e-3;
  options.seed = 77;

  const PretrainResult result = pretrain_run(data, model.egmn, model.table, config, options);
  REQUIRE(result.epochs.size() == 2);
  for (const auto& e : result.epochs) {
    CHECK(std::isfinite(e.total));
    CHECK(e.total >= 0.0);
    CHECK(e.generative >= 0.0);
    CHECK(e.ordering >= 0.0);
    // lambda = 1: total is the sum of the parts.
    CHECK(e.total == doctest::Approx(e.generative + e.ordering).epsilon(1e-9));
  }
  CHECK(result.best_params.has("egmn.layer0.phi_e.w0"));
  CHECK(std::isfinite(result.best_validation));
}
