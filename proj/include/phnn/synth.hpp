#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "phnn/ctdata.hpp"
#include "phnn/volume.hpp"

namespace phnn {

// Synthetic chest-like phantom: two ellipsoidal low-density "lungs"
// (around -850 HU, with noise and bright consolidation blobs) inside a
// soft-tissue body shell (around +40 HU) surrounded by air. The mask is
// the clean lung ellipsoids. A fraction of the cases have a single lung.
struct SynthCase {
  VolumeCT volume;
  MaskVolume mask;
};

struct SynthSpec {
  int nx = 64, ny = 64, nz = 32;
  double sx = 1.0, sy = 1.0, sz = 2.0;
  double single_lung_fraction = 0.2;
  std::string dataset_id = "synth";
};

SynthCase make_synth_case(uint64_t seed, int case_index, const SynthSpec& spec = {});

// Writes case####.svl1 / case####_mask.svl1 pairs plus manifest.csv;
// byte-deterministic in the seed.
std::vector<ManifestRow> write_synth_corpus(const std::filesystem::path& out_dir, int cases,
                                            uint64_t seed, const SynthSpec& spec = {});

}  // namespace phnn
