#pragma once

#include <filesystem>
#include <string>

#include "protmd/geom.hpp"

namespace protmd {

// Trajectory bundle: a directory holding `manifest.json` (atom table,
// labels, cutoffs, provenance) and `frames.bin` (magic "TRJ1", u32 version,
// u32 T, u32 atom count, then T x atoms x 3 little-endian doubles).
void save_bundle(const std::filesystem::path& dir, const Trajectory& trajectory,
                 const EdgeCutoffs& cutoffs, const std::string& provenance_json = "{}");

Trajectory load_bundle(const std::filesystem::path& dir);

// The cutoffs recorded in a bundle's manifest.
EdgeCutoffs bundle_cutoffs(const std::filesystem::path& dir);

// Provenance blob as stored (JSON text).
std::string bundle_provenance(const std::filesystem::path& dir);

}  // namespace protmd
