#include "protmd/geom.hpp"

#include <cmath>

namespace protmd {

namespace {

void require_finite(const Eigen::MatrixXd& positions) {
  if (!positions.allFinite()) throw InvalidGeometry("non-finite coordinate");
}

}  // namespace

int ComplexSnapshot::ligand_count() const {
  int n = 0;
  for (const auto& a : atoms) {
    if (a.partition != Partition::kLigand) break;
    ++n;
  }
  return n;
}

int ComplexSnapshot::receptor_count() const { return atom_count() - ligand_count(); }

Eigen::MatrixXd ComplexSnapshot::positions() const {
  Eigen::MatrixXd x(atom_count(), 3);
  for (int i = 0; i < atom_count(); ++i) x.row(i) = atoms[static_cast<std::size_t>(i)].position;
  return x;
}

Eigen::MatrixXd ComplexSnapshot::features() const {
  if (atoms.empty()) return Eigen::MatrixXd(0, 0);
  const auto width = atoms.front().feature.size();
  Eigen::MatrixXd h(atom_count(), width);
  for (int i = 0; i < atom_count(); ++i) {
    const auto& f = atoms[static_cast<std::size_t>(i)].feature;
    if (f.size() != width) throw ShapeError("inconsistent feature widths within a snapshot");
    h.row(i) = f;
  }
  return h;
}

void ComplexSnapshot::set_positions(const Eigen::MatrixXd& x) {
  if (x.rows() != atom_count() || x.cols() != 3) throw ShapeError("set_positions: bad shape");
  for (int i = 0; i < atom_count(); ++i) atoms[static_cast<std::size_t>(i)].position = x.row(i);
}

void ComplexSnapshot::rebuild_edges(const EdgeCutoffs& cutoffs) {
  const int n = ligand_count();
  const int m = receptor_count();
  std::vector<Partition> parts(static_cast<std::size_t>(atom_count()));
  for (int i = 0; i < atom_count(); ++i) parts[static_cast<std::size_t>(i)] = atoms[static_cast<std::size_t>(i)].partition;
  const Eigen::MatrixXd x = positions();
  edges.intra = build_intra_edges(x, parts, cutoffs.intra);
  edges.cross = build_cross_edges(x.topRows(n), x.bottomRows(m), cutoffs.cross);
}

void Trajectory::validate() const {
  if (snapshots.empty()) throw InvalidDataset("trajectory has no frames");
  const auto& first = snapshots.front();
  int expected_t = 1;
  for (const auto& s : snapshots) {
    if (s.timestep != expected_t) throw InvalidDataset("timesteps must run 1..T");
    ++expected_t;
    if (s.atom_count() != first.atom_count()) throw InvalidDataset("atom count changed between frames");
    for (int i = 0; i < s.atom_count(); ++i) {
      const auto& a = s.atoms[static_cast<std::size_t>(i)];
      const auto& b = first.atoms[static_cast<std::size_t>(i)];
      if (a.element != b.element || a.partition != b.partition || a.feature != b.feature)
        throw InvalidDataset("atom identity changed between frames");
    }
  }
}

std::vector<std::pair<int, int>> build_intra_edges(const Eigen::MatrixXd& positions,
                                                   const std::vector<Partition>& partitions,
                                                   double cutoff) {
  if (cutoff <= 0.0) throw InvalidParameter("intra cutoff must be > 0");
  if (positions.cols() != 3) throw ShapeError("positions must be n x 3");
  if (static_cast<std::size_t>(positions.rows()) != partitions.size())
    throw ShapeError("positions/partitions length mismatch");
  require_finite(positions);

  std::vector<std::pair<int, int>> out;
  const int n = static_cast<int>(positions.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (partitions[static_cast<std::size_t>(i)] != partitions[static_cast<std::size_t>(j)]) continue;
      const double d = (positions.row(i) - positions.row(j)).norm();
      if (d <= cutoff) out.emplace_back(i, j);
    }
  }
  return out;
}

std::vector<std::pair<int, int>> build_cross_edges(const Eigen::MatrixXd& ligand_positions,
                                                   const Eigen::MatrixXd& receptor_positions,
                                                   double cutoff) {
  if (cutoff <= 0.0) throw InvalidParameter("cross cutoff must be > 0");
  if (ligand_positions.rows() == 0 || receptor_positions.rows() == 0)
    throw EmptyPartition("both partitions must be nonempty");
  if (ligand_positions.cols() != 3 || receptor_positions.cols() != 3)
    throw ShapeError("positions must be n x 3");
  require_finite(ligand_positions);
  require_finite(receptor_positions);

  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < ligand_positions.rows(); ++i) {
    for (int j = 0; j < receptor_positions.rows(); ++j) {
      const double d = (ligand_positions.row(i) - receptor_positions.row(j)).norm();
      if (d <= cutoff) out.emplace_back(i, j);
    }
  }
  return out;
}

ComplexSnapshot extract_pocket(const ComplexSnapshot& snapshot, double radius,
                               const EdgeCutoffs& cutoffs) {
  if (radius <= 0.0) throw InvalidParameter("pocket radius must be > 0");
  const int n = snapshot.ligand_count();
  const int m = snapshot.receptor_count();
  if (n == 0) throw EmptyPartition("snapshot has no ligand atoms");

  ComplexSnapshot out;
  out.timestep = snapshot.timestep;
  for (int i = 0; i < n; ++i) out.atoms.push_back(snapshot.atoms[static_cast<std::size_t>(i)]);

  int kept = 0;
  for (int j = 0; j < m; ++j) {
    const auto& rec = snapshot.atoms[static_cast<std::size_t>(n + j)];
    double min_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const double d = (rec.position - snapshot.atoms[static_cast<std::size_t>(i)].position).norm();
      min_d = std::min(min_d, d);
    }
    if (min_d <= radius) {
      out.atoms.push_back(rec);
      ++kept;
    }
  }
  if (kept == 0) throw NoPocket("no receptor atom within the pocket radius");
  out.rebuild_edges(cutoffs);
  return out;
}

ComplexSnapshot perturb_coordinates(const ComplexSnapshot& snapshot, double sigma, RngStream& rng) {
  if (sigma < 0.0) throw InvalidParameter("noise sigma must be >= 0");
  ComplexSnapshot out = snapshot;
  if (sigma == 0.0) return out;
  for (auto& atom : out.atoms) {
    for (int k = 0; k < 3; ++k) atom.position[k] += rng.normal(0.0, sigma);
  }
  return out;
}

}  // namespace protmd
