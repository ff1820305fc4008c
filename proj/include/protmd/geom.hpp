#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "protmd/errors.hpp"
#include "protmd/rng.hpp"

namespace protmd {

enum class Partition { kLigand, kReceptor };

// One atom of a ligand/receptor complex. `feature` is roto-translationally
// invariant by construction (element one-hots and the like); `position` is
// the only frame-dependent quantity.
struct Atom {
  std::string element;
  Partition partition = Partition::kLigand;
  Eigen::VectorXd feature;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

// Intra edges are unordered pairs of global atom indices (stored once with
// i < j, both endpoints in the same partition). Cross edges are ordered
// (ligand-local, receptor-local) index pairs.
struct EdgeSet {
  std::vector<std::pair<int, int>> intra;
  std::vector<std::pair<int, int>> cross;
};

struct EdgeCutoffs {
  double intra = 4.0;
  double cross = 4.0;
};

// One timeframe of a complex. Atoms are stored ligand-first so that global
// index n maps to receptor-local index n - ligand_count().
struct ComplexSnapshot {
  std::vector<Atom> atoms;
  EdgeSet edges;
  int timestep = 0;

  int ligand_count() const;
  int receptor_count() const;
  int atom_count() const { return static_cast<int>(atoms.size()); }

  Eigen::MatrixXd positions() const;   // (N+M) x 3
  Eigen::MatrixXd features() const;    // (N+M) x psi
  void set_positions(const Eigen::MatrixXd& x);

  void rebuild_edges(const EdgeCutoffs& cutoffs);
};

// Ordered sequence of snapshots of one complex; timesteps run 1..T and atom
// identity (element, partition, feature) is constant across frames.
struct Trajectory {
  std::vector<ComplexSnapshot> snapshots;
  std::optional<double> affinity_label;
  std::optional<int> efficacy_label;

  int frame_count() const { return static_cast<int>(snapshots.size()); }
  void validate() const;
};

// Pairs (i, j), i < j, same partition, d(i, j) <= cutoff. Indices are global.
std::vector<std::pair<int, int>> build_intra_edges(const Eigen::MatrixXd& positions,
                                                   const std::vector<Partition>& partitions,
                                                   double cutoff);

// Ordered pairs (ligand-local i, receptor-local j) with d <= cutoff.
std::vector<std::pair<int, int>> build_cross_edges(const Eigen::MatrixXd& ligand_positions,
                                                   const Eigen::MatrixXd& receptor_positions,
                                                   double cutoff);

// Keeps every ligand atom plus the receptor atoms whose minimum distance to
// any ligand atom is <= radius; edges are rebuilt on the retained atoms.
// Throws NoPocket if no receptor atom survives.
ComplexSnapshot extract_pocket(const ComplexSnapshot& snapshot, double radius,
                               const EdgeCutoffs& cutoffs = {});

// Adds i.i.d. N(0, sigma^2) noise to every coordinate component. Features,
// edges and timestep are untouched.
ComplexSnapshot perturb_coordinates(const ComplexSnapshot& snapshot, double sigma, RngStream& rng);

}  // namespace protmd
