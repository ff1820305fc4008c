#include "protmd/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace protmd {

void RunConfig::validate() const {
  if (layers < 1) throw InvalidParameter("layers must be >= 1");
  if (hidden < 1 || psi_h < 1 || psi_prompt < 1) throw InvalidParameter("widths must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidParameter("dropout must be in [0, 1)");
  if (clamp <= 0.0) throw InvalidParameter("clamp must be > 0");
  if (intervals.empty()) throw InvalidParameter("at least one prompt interval required");
  if (lr <= 0.0 || min_lr <= 0.0 || min_lr > lr) throw InvalidParameter("need 0 < min_lr <= lr");
  if (scheduler_factor <= 0.0 || scheduler_factor >= 1.0)
    throw InvalidParameter("scheduler factor must be in (0, 1)");
  if (scheduler_patience < 1) throw InvalidParameter("scheduler patience must be >= 1");
  if (pretrain_batch < 1 || downstream_batch < 1) throw InvalidParameter("batch sizes must be >= 1");
  if (epochs < 1) throw InvalidParameter("epochs must be >= 1");
  if (pretrain_node_cap < 2 || downstream_atom_cap < 2) throw InvalidParameter("node caps too small");
  if (pocket_radius_affinity <= 0.0 || pocket_radius_efficacy <= 0.0)
    throw InvalidParameter("pocket radii must be > 0");
  if (sigma < 0.0) throw InvalidParameter("sigma must be >= 0");
  if (split_ratio <= 0.0 || split_ratio >= 1.0) throw InvalidParameter("split ratio must be in (0, 1)");
  if (intra_cutoff <= 0.0 || cross_cutoff <= 0.0) throw InvalidParameter("cutoffs must be > 0");
  if (lambda_ordering < 0.0) throw InvalidParameter("ordering weight must be >= 0");
  if (ordering_n < 2) throw InvalidParameter("ordering n must be >= 2");
  if (pool != "mean" && pool != "sum") throw InvalidParameter("pool must be mean or sum");
}

namespace {

using nlohmann::json;

json to_json(const RunConfig& c) {
  return json{{"layers", c.layers},
              {"hidden", c.hidden},
              {"psi_h", c.psi_h},
              {"psi_prompt", c.psi_prompt},
              {"attention", c.attention},
              {"dropout", c.dropout},
              {"clamp", c.clamp},
              {"coord_norm", c.coord_norm},
              {"intervals", c.intervals},
              {"lr", c.lr},
              {"min_lr", c.min_lr},
              {"scheduler_factor", c.scheduler_factor},
              {"scheduler_patience", c.scheduler_patience},
              {"pretrain_batch", c.pretrain_batch},
              {"downstream_batch", c.downstream_batch},
              {"epochs", c.epochs},
              {"steps_per_epoch", c.steps_per_epoch},
              {"seed", c.seed},
              {"pretrain_node_cap", c.pretrain_node_cap},
              {"downstream_atom_cap", c.downstream_atom_cap},
              {"pocket_radius_affinity", c.pocket_radius_affinity},
              {"pocket_radius_efficacy", c.pocket_radius_efficacy},
              {"sigma", c.sigma},
              {"sigma_grid", c.sigma_grid},
              {"split_ratio", c.split_ratio},
              {"intra_cutoff", c.intra_cutoff},
              {"cross_cutoff", c.cross_cutoff},
              {"lambda_ordering", c.lambda_ordering},
              {"ordering_n", c.ordering_n},
              {"ordering_samples_per_batch", c.ordering_samples_per_batch},
              {"pool", c.pool},
              {"task_generative", c.task_generative},
              {"task_noise", c.task_noise},
              {"task_prompt", c.task_prompt},
              {"task_ordering", c.task_ordering}};
}

RunConfig from_json(const json& j) {
  RunConfig c;
  const json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw InvalidParameter("unknown config key: " + key);
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("layers", c.layers);
  get("hidden", c.hidden);
  get("psi_h", c.psi_h);
  get("psi_prompt", c.psi_prompt);
  get("attention", c.attention);
  get("dropout", c.dropout);
  get("clamp", c.clamp);
  get("coord_norm", c.coord_norm);
  get("intervals", c.intervals);
  get("lr", c.lr);
  get("min_lr", c.min_lr);
  get("scheduler_factor", c.scheduler_factor);
  get("scheduler_patience", c.scheduler_patience);
  get("pretrain_batch", c.pretrain_batch);
  get("downstream_batch", c.downstream_batch);
  get("epochs", c.epochs);
  get("steps_per_epoch", c.steps_per_epoch);
  get("seed", c.seed);
  get("pretrain_node_cap", c.pretrain_node_cap);
  get("downstream_atom_cap", c.downstream_atom_cap);
  get("pocket_radius_affinity", c.pocket_radius_affinity);
  get("pocket_radius_efficacy", c.pocket_radius_efficacy);
  get("sigma", c.sigma);
  get("sigma_grid", c.sigma_grid);
  get("split_ratio", c.split_ratio);
  get("intra_cutoff", c.intra_cutoff);
  get("cross_cutoff", c.cross_cutoff);
  get("lambda_ordering", c.lambda_ordering);
  get("ordering_n", c.ordering_n);
  get("ordering_samples_per_batch", c.ordering_samples_per_batch);
  get("pool", c.pool);
  get("task_generative", c.task_generative);
  get("task_noise", c.task_noise);
  get("task_prompt", c.task_prompt);
  get("task_ordering", c.task_ordering);
  c.validate();
  return c;
}

}  // namespace

std::string RunConfig::to_json_text() const { return to_json(*this).dump(2) + "\n"; }

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidParameter(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw InvalidParameter(std::string("bad config value: ") + e.what());
  }
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config: " + path);
  out << to_json_text();
}

EgmnConfig RunConfig::egmn_config() const {
  EgmnConfig e;
  e.layers = layers;
  e.feature_width = psi_h + psi_prompt;
  e.hidden_width = hidden;
  e.attention_width = attention;
  e.dropout_rate = dropout;
  e.coord_clamp = clamp;
  e.normalize_coord_updates = coord_norm;
  return e;
}

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig p;
  p.sigma = sigma;
  p.generative = task_generative;
  p.noise = task_noise;
  p.prompt = task_prompt;
  p.ordering = task_ordering;
  p.ordering_weight = lambda_ordering;
  p.ordering_n = ordering_n;
  return p;
}

PromptTable RunConfig::prompt_table() const {
  PromptTable t;
  t.intervals = intervals;
  t.width = psi_prompt;
  return t;
}

TrainerOptions RunConfig::trainer_options() const {
  TrainerOptions o;
  o.epochs = epochs;
  o.batch_size = pretrain_batch;
  o.ordering_samples_per_batch = ordering_samples_per_batch;
  o.steps_per_epoch = steps_per_epoch;
  o.split_ratio = split_ratio;
  o.adam.lr = lr;
  o.scheduler_factor = scheduler_factor;
  o.scheduler_patience = scheduler_patience;
  o.min_lr = min_lr;
  o.pool = pool_mode();
  o.seed = seed;
  return o;
}

PoolMode RunConfig::pool_mode() const {
  return pool == "sum" ? PoolMode::kSum : PoolMode::kMean;
}

std::pair<std::vector<int>, std::vector<int>> split_trajectory_frames(const Trajectory& trajectory,
                                                                      double ratio) {
  if (ratio <= 0.0 || ratio >= 1.0) throw InvalidParameter("split ratio must be in (0, 1)");
  const int frames = trajectory.frame_count();
  if (frames < 2) throw InvalidDataset("cannot split a trajectory with fewer than 2 frames");
  int val_count = static_cast<int>(std::ceil(frames * (1.0 - ratio)));
  val_count = std::min(std::max(val_count, 1), frames - 1);
  std::vector<int> train, val;
  for (int i = 0; i < frames - val_count; ++i) train.push_back(i);
  for (int i = frames - val_count; i < frames; ++i) val.push_back(i);
  return {train, val};
}

}  // namespace protmd
