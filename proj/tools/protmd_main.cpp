// Command-line driver: synthetic trajectory generation, pre-training,
// probing/fine-tuning, evaluation, the space-shift analysis, and the
// ablation grid.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protmd/bundle.hpp"
#include "protmd/config.hpp"
#include "protmd/downstream.hpp"
#include "protmd/egmn.hpp"
#include "protmd/metrics.hpp"
#include "protmd/pretrain.hpp"
#include "protmd/synthmd.hpp"

namespace fs = std::filesystem;
using namespace protmd;

namespace {

std::string fmt(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.15g", v);
  return buffer;
}

std::vector<fs::path> sorted_bundle_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw InvalidDataset("data directory not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
      dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw InvalidDataset("no trajectory bundles under " + root.string());
  return dirs;
}

std::vector<Trajectory> load_trajectories(const fs::path& root, int node_cap) {
  std::vector<Trajectory> out;
  for (const auto& dir : sorted_bundle_dirs(root)) {
    Trajectory traj = load_bundle(dir);
    if (traj.snapshots.front().atom_count() > node_cap)
      throw InvalidDataset("bundle exceeds the node cap: " + dir.string());
    out.push_back(std::move(traj));
  }
  return out;
}

ParamSet fresh_params(const Egmn& egmn, const PromptTable& table, std::uint64_t seed) {
  ParamSet params;
  RngStream rng(seed);
  egmn.init(params, rng);
  table.init(params, rng);
  make_order_classifier(egmn.config().feature_width, egmn.config().hidden_width).init(params, rng);
  return params;
}

struct Dataset {
  std::vector<LabeledComplex> train, val, test;
};

std::vector<LabeledComplex> load_labeled(const fs::path& root, const RunConfig& config,
                                         DownstreamTask task, int frame) {
  std::vector<LabeledComplex> set;
  const double radius = task == DownstreamTask::kAffinity ? config.pocket_radius_affinity
                                                          : config.pocket_radius_efficacy;
  for (const auto& dir : sorted_bundle_dirs(root)) {
    const Trajectory traj = load_bundle(dir);
    if (frame < 0 || frame >= traj.frame_count())
      throw InvalidDataset("frame index out of range for " + dir.string());
    LabeledComplex sample;
    sample.snapshot = extract_pocket(traj.snapshots[static_cast<std::size_t>(frame)], radius,
                                     config.cutoffs());
    if (sample.snapshot.atom_count() > config.downstream_atom_cap)
      throw InvalidDataset("pocket exceeds the downstream atom cap: " + dir.string());
    if (task == DownstreamTask::kAffinity) {
      if (!traj.affinity_label) throw InvalidDataset("missing affinity label: " + dir.string());
      sample.affinity = *traj.affinity_label;
    } else {
      if (!traj.efficacy_label) throw InvalidDataset("missing efficacy label: " + dir.string());
      sample.efficacy = *traj.efficacy_label;
    }
    sample.id = dir.filename().string();
    set.push_back(std::move(sample));
  }
  return set;
}

Dataset split_labeled(std::vector<LabeledComplex> set, std::uint64_t seed) {
  if (set.size() < 3) throw InvalidDataset("need at least 3 labeled complexes to split");
  RngStream rng(seed ^ 0x53504c4954ULL);
  rng.shuffle(set);
  const std::size_t n = set.size();
  std::size_t n_test = std::max<std::size_t>(1, n * 15 / 100);
  std::size_t n_val = std::max<std::size_t>(1, n * 15 / 100);
  if (n_test + n_val >= n) {
    n_test = 1;
    n_val = 1;
  }
  Dataset out;
  out.train.assign(set.begin(), set.end() - static_cast<long>(n_val + n_test));
  out.val.assign(set.end() - static_cast<long>(n_val + n_test), set.end() - static_cast<long>(n_test));
  out.test.assign(set.end() - static_cast<long>(n_test), set.end());
  return out;
}

DownstreamOptions downstream_options(const RunConfig& config, DownstreamMode mode,
                                     DownstreamTask task) {
  DownstreamOptions options;
  options.mode = mode;
  options.task = task;
  options.epochs = config.epochs;
  options.batch_size = config.downstream_batch;
  options.adam.lr = config.lr;
  options.scheduler_factor = config.scheduler_factor;
  options.scheduler_patience = config.scheduler_patience;
  options.min_lr = config.min_lr;
  options.pool = config.pool_mode();
  options.atom_cap = config.downstream_atom_cap;
  options.seed = config.seed;
  return options;
}

void write_metrics_csv(const fs::path& path, const std::string& task, const std::string& mode,
                       std::uint64_t seed, const DownstreamResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write metrics csv: " + path.string());
  out << "task,mode,seed,rmse,pearson,spearman,auroc,auprc\n";
  out << task << "," << mode << "," << seed << ",";
  if (task == "affinity") {
    out << fmt(result.regression.rmse) << "," << fmt(result.regression.pearson) << ","
        << fmt(result.regression.spearman) << ",,";
  } else {
    out << ",,," << fmt(result.classification.auroc) << "," << fmt(result.classification.auprc);
  }
  out << "\n";
}

DownstreamTask parse_task(const std::string& name) {
  if (name == "affinity") return DownstreamTask::kAffinity;
  if (name == "efficacy") return DownstreamTask::kEfficacy;
  throw InvalidParameter("task must be affinity or efficacy");
}

// --config is applied before the remaining flags so explicit flags win.
RunConfig preload_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") return RunConfig::load(argv[i + 1]);
  }
  return RunConfig{};
}

void add_config_flags(CLI::App* cmd, RunConfig& config) {
  cmd->add_option("--config", "path to a JSON config; explicit flags override it")
      ->expected(1);
  cmd->add_option("--layers", config.layers);
  cmd->add_option("--hidden", config.hidden);
  cmd->add_option("--psi-h", config.psi_h);
  cmd->add_option("--psi-prompt", config.psi_prompt);
  cmd->add_option("--attention", config.attention);
  cmd->add_option("--dropout", config.dropout);
  cmd->add_option("--clamp", config.clamp);
  cmd->add_flag("--coord-norm,!--no-coord-norm", config.coord_norm);
  cmd->add_option("--intervals", config.intervals);
  cmd->add_option("--lr", config.lr);
  cmd->add_option("--min-lr", config.min_lr);
  cmd->add_option("--scheduler-factor", config.scheduler_factor);
  cmd->add_option("--scheduler-patience", config.scheduler_patience);
  cmd->add_option("--pretrain-batch", config.pretrain_batch);
  cmd->add_option("--downstream-batch", config.downstream_batch);
  cmd->add_option("--epochs", config.epochs);
  cmd->add_option("--steps-per-epoch", config.steps_per_epoch);
  cmd->add_option("--seed", config.seed);
  cmd->add_option("--pretrain-node-cap", config.pretrain_node_cap);
  cmd->add_option("--downstream-atom-cap", config.downstream_atom_cap);
  cmd->add_option("--pocket-radius-affinity", config.pocket_radius_affinity);
  cmd->add_option("--pocket-radius-efficacy", config.pocket_radius_efficacy);
  cmd->add_option("--sigma", config.sigma);
  cmd->add_option("--split-ratio", config.split_ratio);
  cmd->add_option("--intra-cutoff", config.intra_cutoff);
  cmd->add_option("--cross-cutoff", config.cross_cutoff);
  cmd->add_option("--lambda-ordering", config.lambda_ordering);
  cmd->add_option("--ordering-n", config.ordering_n);
  cmd->add_option("--ordering-samples-per-batch", config.ordering_samples_per_batch);
  cmd->add_option("--pool", config.pool)->check(CLI::IsMember({"mean", "sum"}));
  cmd->add_flag("--task-generative,!--no-task-generative", config.task_generative);
  cmd->add_flag("--task-noise,!--no-task-noise", config.task_noise);
  cmd->add_flag("--task-prompt,!--no-task-prompt", config.task_prompt);
  cmd->add_flag("--task-ordering,!--no-task-ordering", config.task_ordering);
}

int run_gen_synthetic(const RunConfig& config, const std::string& out_dir, int count, double k_min,
                      double k_max, double bond_k, int ligand_atoms, int receptor_atoms,
                      int frames, double temperature, double dt, bool drift) {
  if (count < 1) throw InvalidParameter("need a positive complex count");
  if (k_min <= 0.0 || k_max < k_min) throw InvalidParameter("need 0 < k-min <= k-max");
  const fs::path root(out_dir);
  fs::create_directories(root);
  RngStream rng(config.seed ^ 0x47454eULL);
  for (int i = 0; i < count; ++i) {
    ToyComplexSpec spec;
    spec.ligand_atoms = ligand_atoms;
    spec.receptor_atoms = receptor_atoms;
    spec.frames = frames;
    spec.bond_k = bond_k;
    spec.temperature = temperature;
    spec.dt = dt;
    spec.drift_mode = drift;
    spec.feature_width = config.psi_h;
    spec.seed = config.seed + static_cast<std::uint64_t>(i) * 7919ULL;
    // Log-uniform stiffness so the synthetic pK spans its range evenly.
    spec.tether_k = k_min * std::exp(rng.uniform() * std::log(k_max / k_min));

    const Trajectory traj = generate_trajectory(spec, config.cutoffs());
    nlohmann::json provenance;
    provenance["ligand_atoms"] = spec.ligand_atoms;
    provenance["receptor_atoms"] = spec.receptor_atoms;
    provenance["tether_k"] = spec.tether_k;
    provenance["bond_k"] = spec.bond_k;
    provenance["temperature"] = spec.temperature;
    provenance["dt"] = spec.dt;
    provenance["frames"] = spec.frames;
    provenance["drift_mode"] = spec.drift_mode;
    provenance["seed"] = spec.seed;
    provenance["feature_width"] = spec.feature_width;

    char name[32];
    std::snprintf(name, sizeof(name), "complex_%04d", i);
    save_bundle(root / name, traj, config.cutoffs(), provenance.dump());
  }
  std::cout << "wrote " << count << " bundles under " << root.string() << "\n";
  return 0;
}

int run_pretrain(const RunConfig& config, const std::string& data_dir,
                 const std::string& checkpoint_path, const std::string& losses_path) {
  const std::vector<Trajectory> trajectories =
      load_trajectories(data_dir, config.pretrain_node_cap);
  const Egmn egmn(config.egmn_config());
  const PromptTable table = config.prompt_table();
  const PretrainResult result =
      pretrain_run(trajectories, egmn, table, config.pretrain_config(), config.trainer_options());

  result.best_params.save(checkpoint_path);
  std::ofstream out(losses_path, std::ios::trunc);
  if (!out) throw IoError("cannot write loss csv: " + losses_path);
  out << "epoch,L_gen,L_ord,total,lr\n";
  for (const auto& e : result.epochs)
    out << e.epoch << "," << fmt(e.generative) << "," << fmt(e.ordering) << "," << fmt(e.total)
        << "," << fmt(e.lr) << "\n";
  std::cout << "best validation loss " << fmt(result.best_validation) << "; checkpoint at "
            << checkpoint_path << "\n";
  return 0;
}

int run_downstream_cmd(const RunConfig& config, DownstreamMode mode, const std::string& data_dir,
                       const std::string& checkpoint_path, const std::string& task_name, int frame,
                       const std::string& model_path, const std::string& metrics_path) {
  const DownstreamTask task = parse_task(task_name);
  const Egmn egmn(config.egmn_config());
  const PromptTable table = config.prompt_table();
  ParamSet params = checkpoint_path.empty()
                        ? fresh_params(egmn, table, config.seed)
                        : ParamSet::load(checkpoint_path);
  const Dataset dataset = split_labeled(load_labeled(data_dir, config, task, frame), config.seed);
  const DownstreamResult result =
      train_downstream(dataset.train, dataset.val, dataset.test, params, egmn, table,
                       downstream_options(config, mode, task));
  result.params.save(model_path);
  write_metrics_csv(metrics_path, task_name,
                    mode == DownstreamMode::kProbe ? "probe" : "finetune", config.seed, result);
  std::cout << "trainable scalars: " << result.trainable_scalars << "\n";
  if (task == DownstreamTask::kAffinity)
    std::cout << "test rmse " << fmt(result.regression.rmse) << "\n";
  else
    std::cout << "test auroc " << fmt(result.classification.auroc) << "\n";
  return 0;
}

int run_eval(const RunConfig& config, const std::string& data_dir, const std::string& model_path,
             const std::string& task_name, int frame, const std::string& metrics_path) {
  const DownstreamTask task = parse_task(task_name);
  const Egmn egmn(config.egmn_config());
  const PromptTable table = config.prompt_table();
  const ParamSet params = ParamSet::load(model_path);
  const std::vector<LabeledComplex> set = load_labeled(data_dir, config, task, frame);

  Eigen::VectorXd preds(static_cast<Eigen::Index>(set.size()));
  Eigen::VectorXd truth(static_cast<Eigen::Index>(set.size()));
  std::vector<int> labels;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const ComplexSnapshot prompted =
        attach_prompt(set[i].snapshot, PromptTable::kFinetuneDt, table, params);
    const Eigen::VectorXd pooled =
        pool_embedding(egmn.encode(params, prompted).features, config.pool_mode());
    if (task == DownstreamTask::kAffinity) {
      preds(static_cast<Eigen::Index>(i)) = predict_affinity(params, pooled);
      truth(static_cast<Eigen::Index>(i)) = set[i].affinity;
    } else {
      preds(static_cast<Eigen::Index>(i)) = predict_efficacy(params, pooled);
      labels.push_back(set[i].efficacy);
    }
  }

  std::ofstream out(metrics_path, std::ios::trunc);
  if (!out) throw IoError("cannot write metrics csv: " + metrics_path);
  out << "task,mode,seed,rmse,pearson,spearman,auroc,auprc\n";
  out << task_name << ",eval," << config.seed << ",";
  if (task == DownstreamTask::kAffinity) {
    const auto report = metrics::regression_report(preds, truth);
    out << fmt(report.rmse) << "," << fmt(report.pearson) << "," << fmt(report.spearman) << ",,";
  } else {
    const auto report = metrics::ranking_metrics(preds, labels);
    out << ",,," << fmt(report.auroc) << "," << fmt(report.auprc);
  }
  out << "\n";
  return 0;
}

int run_analyze(const RunConfig& config, const std::string& data_dir,
                const std::string& checkpoint_path, int frame, const std::string& shift_path,
                const std::string& fit_path, const std::string& pca_path) {
  const Egmn egmn(config.egmn_config());
  const PromptTable table = config.prompt_table();
  const ParamSet params = ParamSet::load(checkpoint_path);

  std::vector<std::string> ids;
  std::vector<double> shifts, labels;
  std::vector<Eigen::VectorXd> pooled_rows;
  for (const auto& dir : sorted_bundle_dirs(data_dir)) {
    const Trajectory traj = load_bundle(dir);
    if (!traj.affinity_label) throw InvalidDataset("missing affinity label: " + dir.string());
    if (frame < 0 || frame >= traj.frame_count())
      throw InvalidDataset("frame index out of range for " + dir.string());
    const ComplexSnapshot pocket =
        extract_pocket(traj.snapshots[static_cast<std::size_t>(frame)],
                       config.pocket_radius_affinity, config.cutoffs());
    // Motion predicted for the shortest configured horizon.
    const ComplexSnapshot prompted =
        attach_prompt(pocket, table.intervals.front(), table, params);
    const EncoderOutput enc = egmn.encode(params, prompted);
    ids.push_back(dir.filename().string());
    shifts.push_back(metrics::space_shift(pocket.positions(), enc.coordinates));
    labels.push_back(*traj.affinity_label);
    pooled_rows.push_back(pool_embedding(enc.features, config.pool_mode()));
  }

  {
    std::ofstream out(shift_path, std::ios::trunc);
    if (!out) throw IoError("cannot write shift csv: " + shift_path);
    out << "complex_id,space_shift,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
      out << ids[i] << "," << fmt(shifts[i]) << "," << fmt(labels[i]) << "\n";
  }
  {
    const Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(shifts.data(),
                                                          static_cast<Eigen::Index>(shifts.size()));
    const Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(labels.data(),
                                                          static_cast<Eigen::Index>(labels.size()));
    const metrics::LinearFit fit = metrics::least_squares_fit(x, y);
    std::ofstream out(fit_path, std::ios::trunc);
    if (!out) throw IoError("cannot write fit csv: " + fit_path);
    out << "slope,intercept,r_squared\n";
    out << fmt(fit.slope) << "," << fmt(fit.intercept) << "," << fmt(fit.r_squared) << "\n";
  }
  {
    Eigen::MatrixXd embedding(static_cast<Eigen::Index>(pooled_rows.size()),
                              pooled_rows.front().size());
    for (std::size_t i = 0; i < pooled_rows.size(); ++i)
      embedding.row(static_cast<Eigen::Index>(i)) = pooled_rows[i];
    const Eigen::MatrixXd projected =
        metrics::pca_project(embedding, std::min<int>(2, static_cast<int>(embedding.cols())));
    std::ofstream out(pca_path, std::ios::trunc);
    if (!out) throw IoError("cannot write pca csv: " + pca_path);
    out << "complex_id,pc1,pc2,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(i);
      out << ids[i] << "," << fmt(projected(row, 0)) << ","
          << fmt(projected.cols() > 1 ? projected(row, 1) : 0.0) << "," << fmt(labels[i]) << "\n";
    }
  }
  std::cout << "analyzed " << ids.size() << " complexes\n";
  return 0;
}

struct AblationRow {
  std::string name;
  bool pretrain = true;
  bool noise = false;
  bool prompt = false;
  bool ordering = false;
};

int run_ablate(const RunConfig& base_config, const std::string& data_dir,
               const std::string& out_csv, const std::vector<std::uint64_t>& seeds,
               const std::string& task_name, int frame, int downstream_epochs) {
  const DownstreamTask task = parse_task(task_name);
  const std::vector<AblationRow> rows = {
      {"no_pretrain", false, false, false, false},
      {"dg", true, false, false, false},
      {"dg_noise", true, true, false, false},
      {"dg_noise_prompt", true, true, true, false},
      {"dg_noise_prompt_so", true, true, true, true},
  };

  std::ofstream out(out_csv, std::ios::trunc);
  if (!out) throw IoError("cannot write ablation csv: " + out_csv);
  out << "configuration,mode,seed,rmse,pearson,spearman,val_metric\n";

  for (const std::uint64_t seed : seeds) {
    RunConfig config = base_config;
    config.seed = seed;
    const Egmn egmn(config.egmn_config());
    const PromptTable table = config.prompt_table();
    const std::vector<Trajectory> trajectories =
        load_trajectories(data_dir, config.pretrain_node_cap);
    const Dataset dataset =
        split_labeled(load_labeled(data_dir, config, task, frame), config.seed);

    for (const AblationRow& row : rows) {
      ParamSet params;
      if (row.pretrain) {
        PretrainConfig tasks = config.pretrain_config();
        tasks.noise = row.noise;
        tasks.prompt = row.prompt;
        tasks.ordering = row.ordering;
        params = pretrain_run(trajectories, egmn, table, tasks, config.trainer_options())
                     .best_params;
      } else {
        params = fresh_params(egmn, table, config.seed);
      }
      const std::vector<DownstreamMode> modes =
          row.pretrain ? std::vector<DownstreamMode>{DownstreamMode::kProbe,
                                                     DownstreamMode::kFinetune}
                       : std::vector<DownstreamMode>{DownstreamMode::kFinetune};
      for (const DownstreamMode mode : modes) {
        DownstreamOptions options = downstream_options(config, mode, task);
        if (downstream_epochs > 0) options.epochs = downstream_epochs;
        const DownstreamResult result = train_downstream(dataset.train, dataset.val, dataset.test,
                                                         params, egmn, table, options);
        out << row.name << "," << (mode == DownstreamMode::kProbe ? "probe" : "finetune") << ","
            << seed << "," << fmt(result.regression.rmse) << "," << fmt(result.regression.pearson)
            << "," << fmt(result.regression.spearman) << "," << fmt(result.best_validation)
            << "\n";
      }
    }
  }
  std::cout << "ablation grid written to " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    RunConfig config = preload_config(argc, argv);

    CLI::App app{"equivariant graph matching engine for drug-binding trajectories"};
    app.require_subcommand(1);

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "generate synthetic trajectory bundles");
    std::string gen_out = "data";
    int gen_count = 8, gen_lig = 8, gen_rec = 24, gen_frames = 200;
    double gen_kmin = 0.25, gen_kmax = 8.0, gen_bond = 4.0, gen_temp = 0.05, gen_dt = 0.02;
    bool gen_drift = false;
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--count", gen_count);
    gen->add_option("--ligand-atoms", gen_lig);
    gen->add_option("--receptor-atoms", gen_rec);
    gen->add_option("--frames", gen_frames);
    gen->add_option("--k-min", gen_kmin);
    gen->add_option("--k-max", gen_kmax);
    gen->add_option("--bond-k", gen_bond);
    gen->add_option("--temperature", gen_temp);
    gen->add_option("--dt", gen_dt);
    gen->add_flag("--drift", gen_drift);
    add_config_flags(gen, config);

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "run the self-supervised pre-training");
    std::string pre_data, pre_ckpt = "pretrained.egmn", pre_losses = "losses.csv";
    pre->add_option("--data", pre_data)->required();
    pre->add_option("--out-checkpoint", pre_ckpt);
    pre->add_option("--out-losses", pre_losses);
    add_config_flags(pre, config);

    // probe / finetune
    std::string ds_data, ds_ckpt, ds_task = "affinity", ds_model = "model.egmn",
                ds_metrics = "metrics.csv";
    int ds_frame = 0;
    auto add_downstream_flags = [&](CLI::App* cmd) {
      cmd->add_option("--data", ds_data)->required();
      cmd->add_option("--checkpoint", ds_ckpt);
      cmd->add_option("--task", ds_task)->check(CLI::IsMember({"affinity", "efficacy"}));
      cmd->add_option("--frame", ds_frame);
      cmd->add_option("--out-model", ds_model);
      cmd->add_option("--out-metrics", ds_metrics);
      add_config_flags(cmd, config);
    };
    auto* probe = app.add_subcommand("probe", "linear probing on a frozen encoder");
    add_downstream_flags(probe);
    auto* finetune = app.add_subcommand("finetune", "fine-tune the whole model");
    add_downstream_flags(finetune);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a trained model");
    std::string ev_data, ev_model, ev_task = "affinity", ev_metrics = "metrics.csv";
    int ev_frame = 0;
    eval->add_option("--data", ev_data)->required();
    eval->add_option("--model", ev_model)->required();
    eval->add_option("--task", ev_task)->check(CLI::IsMember({"affinity", "efficacy"}));
    eval->add_option("--frame", ev_frame);
    eval->add_option("--out-metrics", ev_metrics);
    add_config_flags(eval, config);

    // analyze
    auto* analyze = app.add_subcommand("analyze", "space-shift analysis and PCA projection");
    std::string an_data, an_ckpt, an_shift = "shift.csv", an_fit = "fit.csv", an_pca = "pca.csv";
    int an_frame = 0;
    analyze->add_option("--data", an_data)->required();
    analyze->add_option("--checkpoint", an_ckpt)->required();
    analyze->add_option("--frame", an_frame);
    analyze->add_option("--out-shift", an_shift);
    analyze->add_option("--out-fit", an_fit);
    analyze->add_option("--out-pca", an_pca);
    add_config_flags(analyze, config);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run the pre-training ablation grid");
    std::string ab_data, ab_out = "ablation.csv", ab_task = "affinity";
    std::vector<std::uint64_t> ab_seeds{1, 2, 3};
    int ab_frame = 0, ab_downstream_epochs = 0;
    ablate->add_option("--data", ab_data)->required();
    ablate->add_option("--out", ab_out);
    ablate->add_option("--seeds", ab_seeds);
    ablate->add_option("--task", ab_task)->check(CLI::IsMember({"affinity", "efficacy"}));
    ablate->add_option("--frame", ab_frame);
    ablate->add_option("--downstream-epochs", ab_downstream_epochs,
                       "override the downstream epoch count (0: use --epochs)");
    add_config_flags(ablate, config);

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 2;
    }

    config.validate();
    if (gen->parsed())
      return run_gen_synthetic(config, gen_out, gen_count, gen_kmin, gen_kmax, gen_bond, gen_lig,
                               gen_rec, gen_frames, gen_temp, gen_dt, gen_drift);
    if (pre->parsed()) return run_pretrain(config, pre_data, pre_ckpt, pre_losses);
    if (probe->parsed())
      return run_downstream_cmd(config, DownstreamMode::kProbe, ds_data, ds_ckpt, ds_task,
                                ds_frame, ds_model, ds_metrics);
    if (finetune->parsed())
      return run_downstream_cmd(config, DownstreamMode::kFinetune, ds_data, ds_ckpt, ds_task,
                                ds_frame, ds_model, ds_metrics);
    if (eval->parsed()) return run_eval(config, ev_data, ev_model, ev_task, ev_frame, ev_metrics);
    if (analyze->parsed())
      return run_analyze(config, an_data, an_ckpt, an_frame, an_shift, an_fit, an_pca);
    if (ablate->parsed())
      return run_ablate(config, ab_data, ab_out, ab_seeds, ab_task, ab_frame,
                        ab_downstream_epochs);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kNumerical ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
