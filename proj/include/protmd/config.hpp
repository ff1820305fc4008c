#pragma once

#include <string>
#include <utility>
#include <vector>

#include "protmd/egmn.hpp"
#include "protmd/geom.hpp"
#include "protmd/pretrain.hpp"

namespace protmd {

// Every tunable of the engine with its full-scale defaults. Desk-scale runs
// shrink the widths and epochs through the same knobs.
struct RunConfig {
  int layers = 6;
  int hidden = 256;
  int psi_h = 128;
  int psi_prompt = 128;
  int attention = 0;  // 0 -> hidden
  double dropout = 0.15;
  double clamp = 2.0;
  bool coord_norm = true;
  std::vector<int> intervals{1, 5, 10};

  double lr = 1e-4;
  double min_lr = 5e-6;
  double scheduler_factor = 0.6;
  int scheduler_patience = 10;
  int pretrain_batch = 32;
  int downstream_batch = 64;
  int epochs = 200;
  int steps_per_epoch = 0;  // 0 -> derive from the dataset
  std::uint64_t seed = 1234;

  int pretrain_node_cap = 10000;
  int downstream_atom_cap = 600;
  double pocket_radius_affinity = 6.0;
  double pocket_radius_efficacy = 5.5;

  double sigma = 1e-3;
  std::vector<double> sigma_grid{1e-5, 1e-3, 1e-1, 1.0};  // sweep range, kept with the config
  double split_ratio = 0.9;
  double intra_cutoff = 4.0;
  double cross_cutoff = 4.0;

  double lambda_ordering = 1.0;
  int ordering_n = 4;
  int ordering_samples_per_batch = 2;
  std::string pool = "mean";  // "mean" | "sum"

  bool task_generative = true;
  bool task_noise = true;
  bool task_prompt = true;
  bool task_ordering = true;

  void validate() const;

  std::string to_json_text() const;                      // sorted keys, round-trip stable
  static RunConfig from_json_text(const std::string&);   // strict: unknown keys rejected
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  EgmnConfig egmn_config() const;
  PretrainConfig pretrain_config() const;
  PromptTable prompt_table() const;
  TrainerOptions trainer_options() const;
  EdgeCutoffs cutoffs() const { return {intra_cutoff, cross_cutoff}; }
  PoolMode pool_mode() const;
};

// Contiguous 9:1-style split: the last ceil(T * (1 - ratio)) frames are the
// validation tail. Returns 0-based frame indices.
std::pair<std::vector<int>, std::vector<int>> split_trajectory_frames(const Trajectory& trajectory,
                                                                      double ratio);

}  // namespace protmd
