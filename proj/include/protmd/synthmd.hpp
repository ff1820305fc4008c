#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "protmd/geom.hpp"
#include "protmd/rng.hpp"

namespace protmd {

// Toy ligand-pocket system driven by overdamped Langevin dynamics; the
// stand-in for MD production runs. Stiffer ligand-pocket tethers move less
// between saved frames, which is what the synthetic affinity label encodes.
struct ToyComplexSpec {
  int ligand_atoms = 8;
  int receptor_atoms = 24;
  double tether_k = 2.0;      // ligand-pocket coupling stiffness
  double bond_k = 4.0;        // intra-molecular bond + receptor anchor stiffness
  double temperature = 0.05;
  double dt = 0.02;
  int frames = 200;           // T
  bool drift_mode = false;    // slides the ligand along +x so frame order is geometric
  std::uint64_t seed = 1234;
  int feature_width = 16;     // psi_h of the emitted atoms

  void validate() const;
};

struct LangevinState {
  Eigen::MatrixXd positions;  // (N+M) x 3
  int frame_index = 0;
};

// Integration steps between saved frames, mirroring MD snapshot cadence.
inline constexpr int kStepsPerFrame = 10;
// Ligand displacement added per saved frame in drift mode.
inline constexpr double kDriftPerFrame = 0.05;

// Deterministic realization of a ToyComplexSpec: initial geometry, chain
// bonds within each molecule, receptor position anchors, and one
// ligand-pocket tether per ligand atom.
class SynthSystem {
 public:
  static SynthSystem build(const ToyComplexSpec& spec);

  const ToyComplexSpec& spec() const { return spec_; }
  LangevinState initial_state() const;

  Eigen::MatrixXd potential_gradient(const Eigen::MatrixXd& positions) const;

  // One Euler-Maruyama step: x <- x - dt * grad U + sqrt(2 temp dt) * xi.
  LangevinState step(const LangevinState& state, RngStream& rng) const;

  // T frames at kStepsPerFrame integrator steps apart; frame 0 is the
  // initial configuration bitwise.
  Trajectory generate(const EdgeCutoffs& cutoffs = {}) const;

 private:
  struct Spring {
    int i = -1;
    int j = -1;  // -1: anchor to fixed point `rest_point`
    double rest_length = 0.0;
    double stiffness = 0.0;
    Eigen::Vector3d rest_point = Eigen::Vector3d::Zero();
  };

  ToyComplexSpec spec_;
  std::vector<Atom> template_atoms;
  std::vector<Spring> springs_;
};

Trajectory generate_trajectory(const ToyComplexSpec& spec, const EdgeCutoffs& cutoffs = {});

// pK_synth = a + b * ln(1 + k): stiffer tether, less mobility, higher label.
double synthetic_affinity_label(const ToyComplexSpec& spec, double a = 4.0, double b = 2.0);

// Binary companion label: 1 when the synthetic pK clears the threshold.
int synthetic_efficacy_label(const ToyComplexSpec& spec, double pk_threshold = 6.0);

}  // namespace protmd
