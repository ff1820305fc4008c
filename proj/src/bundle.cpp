#include "protmd/bundle.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace protmd {

namespace {

using nlohmann::json;

constexpr char kFramesMagic[4] = {'T', 'R', 'J', '1'};
constexpr std::uint32_t kFramesVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("frames.bin truncated");
  return v;
}

json load_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open manifest: " + (dir / "manifest.json").string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest is not valid JSON: ") + e.what());
  }
  return manifest;
}

}  // namespace

void save_bundle(const std::filesystem::path& dir, const Trajectory& trajectory,
                 const EdgeCutoffs& cutoffs, const std::string& provenance_json) {
  trajectory.validate();
  std::filesystem::create_directories(dir);

  const ComplexSnapshot& first = trajectory.snapshots.front();
  const int atoms = first.atom_count();
  if (first.ligand_count() < 1 || first.receptor_count() < 1)
    throw InvalidDataset("bundle needs both partitions");
  // Ligand-first layout is the on-disk contract.
  for (int i = first.ligand_count(); i < atoms; ++i)
    if (first.atoms[static_cast<std::size_t>(i)].partition != Partition::kReceptor)
      throw InvalidDataset("bundle atoms must be ligand-first");

  json atom_table = json::array();
  for (const Atom& a : first.atoms) {
    json row;
    row["element"] = a.element;
    row["partition"] = a.partition == Partition::kLigand ? "ligand" : "receptor";
    row["feature"] = std::vector<double>(a.feature.data(), a.feature.data() + a.feature.size());
    atom_table.push_back(std::move(row));
  }
  json manifest;
  manifest["format_version"] = 1;
  manifest["frames"] = trajectory.frame_count();
  manifest["atoms"] = std::move(atom_table);
  manifest["affinity_label"] =
      trajectory.affinity_label ? json(*trajectory.affinity_label) : json(nullptr);
  manifest["efficacy_label"] =
      trajectory.efficacy_label ? json(*trajectory.efficacy_label) : json(nullptr);
  manifest["cutoffs"] = {{"intra", cutoffs.intra}, {"cross", cutoffs.cross}};
  try {
    manifest["provenance"] = json::parse(provenance_json);
  } catch (const json::exception& e) {
    throw InvalidParameter(std::string("provenance must be JSON: ") + e.what());
  }

  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest");
    out << manifest.dump(2) << "\n";
  }

  std::ofstream out(dir / "frames.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write frames.bin");
  out.write(kFramesMagic, 4);
  write_u32(out, kFramesVersion);
  write_u32(out, static_cast<std::uint32_t>(trajectory.frame_count()));
  write_u32(out, static_cast<std::uint32_t>(atoms));
  for (const ComplexSnapshot& snap : trajectory.snapshots) {
    for (const Atom& a : snap.atoms) {
      for (int k = 0; k < 3; ++k) {
        const double d = a.position[k];
        out.write(reinterpret_cast<const char*>(&d), sizeof(d));
      }
    }
  }
  if (!out) throw IoError("frames.bin write failed");
}

EdgeCutoffs bundle_cutoffs(const std::filesystem::path& dir) {
  const json manifest = load_manifest(dir);
  EdgeCutoffs cutoffs;
  cutoffs.intra = manifest.at("cutoffs").at("intra").get<double>();
  cutoffs.cross = manifest.at("cutoffs").at("cross").get<double>();
  return cutoffs;
}

std::string bundle_provenance(const std::filesystem::path& dir) {
  return load_manifest(dir).at("provenance").dump();
}

Trajectory load_bundle(const std::filesystem::path& dir) {
  const json manifest = load_manifest(dir);
  if (manifest.at("format_version").get<int>() != 1) throw IoError("unsupported bundle version");
  const int frames = manifest.at("frames").get<int>();
  EdgeCutoffs cutoffs;
  cutoffs.intra = manifest.at("cutoffs").at("intra").get<double>();
  cutoffs.cross = manifest.at("cutoffs").at("cross").get<double>();

  std::vector<Atom> template_atoms;
  for (const auto& row : manifest.at("atoms")) {
    Atom a;
    a.element = row.at("element").get<std::string>();
    const std::string partition = row.at("partition").get<std::string>();
    if (partition == "ligand")
      a.partition = Partition::kLigand;
    else if (partition == "receptor")
      a.partition = Partition::kReceptor;
    else
      throw IoError("unknown partition in manifest: " + partition);
    const auto feature = row.at("feature").get<std::vector<double>>();
    a.feature = Eigen::Map<const Eigen::VectorXd>(feature.data(),
                                                  static_cast<Eigen::Index>(feature.size()));
    template_atoms.push_back(std::move(a));
  }
  const int atoms = static_cast<int>(template_atoms.size());
  if (atoms < 2) throw IoError("bundle has too few atoms");

  std::ifstream in(dir / "frames.bin", std::ios::binary);
  if (!in) throw IoError("cannot open frames.bin");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFramesMagic, 4) != 0) throw IoError("bad frames.bin magic");
  if (read_u32(in) != kFramesVersion) throw IoError("unsupported frames.bin version");
  if (static_cast<int>(read_u32(in)) != frames)
    throw IoError("frames.bin frame count disagrees with manifest");
  if (static_cast<int>(read_u32(in)) != atoms)
    throw IoError("frames.bin atom count disagrees with manifest");

  Trajectory trajectory;
  for (int t = 0; t < frames; ++t) {
    ComplexSnapshot snap;
    snap.atoms = template_atoms;
    snap.timestep = t + 1;
    for (int i = 0; i < atoms; ++i) {
      for (int k = 0; k < 3; ++k) {
        double d = 0.0;
        in.read(reinterpret_cast<char*>(&d), sizeof(d));
        snap.atoms[static_cast<std::size_t>(i)].position[k] = d;
      }
    }
    if (!in) throw IoError("frames.bin truncated");
    snap.rebuild_edges(cutoffs);
    trajectory.snapshots.push_back(std::move(snap));
  }
  if (!manifest.at("affinity_label").is_null())
    trajectory.affinity_label = manifest.at("affinity_label").get<double>();
  if (!manifest.at("efficacy_label").is_null())
    trajectory.efficacy_label = manifest.at("efficacy_label").get<int>();
  trajectory.validate();
  return trajectory;
}

}  // namespace protmd
