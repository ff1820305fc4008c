#include "protmd/synthmd.hpp"

#include <cmath>

namespace protmd {

void ToyComplexSpec::validate() const {
  if (ligand_atoms < 1 || receptor_atoms < 1) throw InvalidParameter("both molecules need atoms");
  if (tether_k < 0.0) throw InvalidParameter("tether stiffness must be >= 0");
  if (bond_k < 0.0) throw InvalidParameter("bond stiffness must be >= 0");
  if (temperature < 0.0) throw InvalidParameter("temperature must be >= 0");
  if (dt <= 0.0) throw InvalidParameter("timestep must be > 0");
  if (frames < 1) throw InvalidParameter("frame count must be >= 1");
  if (feature_width < 2) throw InvalidParameter("feature width must be >= 2");
}

namespace {

const char* kElements[] = {"C", "N", "O", "S"};

// Deterministic, roughly uniform points on a sphere (Fibonacci spiral).
Eigen::Vector3d fibonacci_point(int index, int count, double radius) {
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const double y = count == 1 ? 0.0 : 1.0 - 2.0 * index / static_cast<double>(count - 1);
  const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
  const double theta = golden * index;
  return radius * Eigen::Vector3d(r * std::cos(theta), y, r * std::sin(theta));
}

// Channel 0 marks the partition; the rest carry the element one-hot,
// wrapped when the width is small.
Eigen::VectorXd atom_feature(int element_index, Partition partition, int width) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(width);
  f(0) = partition == Partition::kLigand ? 1.0 : -1.0;
  f(1 + element_index % (width - 1)) = 1.0;
  return f;
}

}  // namespace

SynthSystem SynthSystem::build(const ToyComplexSpec& spec) {
  spec.validate();
  SynthSystem system;
  system.spec_ = spec;
  RngStream rng(spec.seed);

  const int n = spec.ligand_atoms;
  const int m = spec.receptor_atoms;
  const double ligand_radius = 1.2;
  const double shell_radius = 4.0;

  for (int i = 0; i < n; ++i) {
    Atom atom;
    atom.element = kElements[i % 4];
    atom.partition = Partition::kLigand;
    atom.feature = atom_feature(i, Partition::kLigand, spec.feature_width);
    atom.position = fibonacci_point(i, n, ligand_radius);
    for (int k = 0; k < 3; ++k) atom.position[k] += rng.normal(0.0, 0.05);
    system.template_atoms.push_back(std::move(atom));
  }
  for (int j = 0; j < m; ++j) {
    Atom atom;
    atom.element = kElements[(j + 1) % 4];
    atom.partition = Partition::kReceptor;
    atom.feature = atom_feature(j + 1, Partition::kReceptor, spec.feature_width);
    atom.position = fibonacci_point(j, m, shell_radius);
    for (int k = 0; k < 3; ++k) atom.position[k] += rng.normal(0.0, 0.05);
    system.template_atoms.push_back(std::move(atom));
  }

  auto chain = [&](int begin, int count) {
    for (int i = begin; i + 1 < begin + count; ++i) {
      Spring s;
      s.i = i;
      s.j = i + 1;
      s.rest_length = (system.template_atoms[static_cast<std::size_t>(i)].position -
                       system.template_atoms[static_cast<std::size_t>(i + 1)].position)
                          .norm();
      s.stiffness = spec.bond_k;
      system.springs_.push_back(s);
    }
  };
  chain(0, n);
  chain(n, m);

  // The pocket sits in a larger protein: anchor receptor atoms to their
  // initial positions.
  for (int j = n; j < n + m; ++j) {
    Spring s;
    s.i = j;
    s.j = -1;
    s.stiffness = spec.bond_k;
    s.rest_point = system.template_atoms[static_cast<std::size_t>(j)].position;
    system.springs_.push_back(s);
  }

  // Ligand-pocket tether: each ligand atom to its nearest receptor atom.
  for (int i = 0; i < n; ++i) {
    int nearest = n;
    double best = std::numeric_limits<double>::infinity();
    for (int j = n; j < n + m; ++j) {
      const double d = (system.template_atoms[static_cast<std::size_t>(i)].position -
                        system.template_atoms[static_cast<std::size_t>(j)].position)
                           .norm();
      if (d < best) {
        best = d;
        nearest = j;
      }
    }
    Spring s;
    s.i = i;
    s.j = nearest;
    s.rest_length = best;
    s.stiffness = spec.tether_k;
    system.springs_.push_back(s);
  }
  return system;
}

LangevinState SynthSystem::initial_state() const {
  LangevinState state;
  state.positions.resize(static_cast<Eigen::Index>(template_atoms.size()), 3);
  for (std::size_t i = 0; i < template_atoms.size(); ++i)
    state.positions.row(static_cast<Eigen::Index>(i)) = template_atoms[i].position;
  state.frame_index = 0;
  return state;
}

Eigen::MatrixXd SynthSystem::potential_gradient(const Eigen::MatrixXd& positions) const {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(positions.rows(), positions.cols());
  for (const Spring& s : springs_) {
    if (s.j < 0) {
      // Position anchor: U = k/2 ||x - p||^2.
      grad.row(s.i) += s.stiffness * (positions.row(s.i) - s.rest_point.transpose());
      continue;
    }
    const Eigen::RowVector3d delta = positions.row(s.i) - positions.row(s.j);
    const double length = delta.norm();
    if (length < 1e-12) continue;  // coincident endpoints exert no force direction
    const Eigen::RowVector3d force = s.stiffness * (length - s.rest_length) / length * delta;
    grad.row(s.i) += force;
    grad.row(s.j) -= force;
  }
  return grad;
}

LangevinState SynthSystem::step(const LangevinState& state, RngStream& rng) const {
  if (!state.positions.allFinite())
    throw NumericalError("langevin state diverged; reduce dt or stiffness");
  LangevinState next;
  next.frame_index = state.frame_index;
  const double noise_scale = std::sqrt(2.0 * spec_.temperature * spec_.dt);
  Eigen::MatrixXd noise(state.positions.rows(), 3);
  for (Eigen::Index i = 0; i < noise.rows(); ++i)
    for (int k = 0; k < 3; ++k) noise(i, k) = noise_scale * rng.normal();
  next.positions = state.positions - spec_.dt * potential_gradient(state.positions) + noise;
  if (!next.positions.allFinite())
    throw NumericalError("langevin step produced non-finite coordinates; dt too large");
  return next;
}

Trajectory SynthSystem::generate(const EdgeCutoffs& cutoffs) const {
  RngStream rng(spec_.seed ^ 0x54524aULL);
  Trajectory trajectory;
  LangevinState state = initial_state();

  for (int frame = 0; frame < spec_.frames; ++frame) {
    if (frame > 0) {
      for (int s = 0; s < kStepsPerFrame; ++s) state = step(state, rng);
      state.frame_index = frame;
    }
    ComplexSnapshot snapshot;
    snapshot.atoms = template_atoms;
    snapshot.timestep = frame + 1;
    Eigen::MatrixXd x = state.positions;
    if (spec_.drift_mode) {
      // Progressive slide of the ligand along +x; recoverable from geometry.
      const double shift = kDriftPerFrame * frame;
      for (int i = 0; i < spec_.ligand_atoms; ++i) x(i, 0) += shift;
    }
    snapshot.set_positions(x);
    snapshot.rebuild_edges(cutoffs);
    trajectory.snapshots.push_back(std::move(snapshot));
  }
  trajectory.affinity_label = synthetic_affinity_label(spec_);
  trajectory.efficacy_label = synthetic_efficacy_label(spec_);
  trajectory.validate();
  return trajectory;
}

Trajectory generate_trajectory(const ToyComplexSpec& spec, const EdgeCutoffs& cutoffs) {
  return SynthSystem::build(spec).generate(cutoffs);
}

double synthetic_affinity_label(const ToyComplexSpec& spec, double a, double b) {
  if (spec.tether_k < 0.0) throw InvalidParameter("tether stiffness must be >= 0");
  return a + b * std::log1p(spec.tether_k);
}

int synthetic_efficacy_label(const ToyComplexSpec& spec, double pk_threshold) {
  return synthetic_affinity_label(spec) >= pk_threshold ? 1 : 0;
}

}  // namespace protmd
