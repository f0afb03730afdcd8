#include "phnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "phnn/error.hpp"
#include "phnn/rng.hpp"

namespace phnn {

namespace {

struct Ellipsoid {
  double cx, cy, cz;
  double rx, ry, rz;

  bool contains(int x, int y, int z) const {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    const double dz = (z - cz) / rz;
    return dx * dx + dy * dy + dz * dz <= 1.0;
  }
};

int16_t clamp_hu(double v) {
  return static_cast<int16_t>(std::clamp(v, -1024.0, 3071.0));
}

}  // namespace

SynthCase make_synth_case(uint64_t seed, int case_index, const SynthSpec& spec) {
  Rng rng(mix_seed(seed, static_cast<uint64_t>(case_index)));
  const int nx = spec.nx, ny = spec.ny, nz = spec.nz;

  const bool single_lung = rng.uniform() < spec.single_lung_fraction;
  const bool drop_left = single_lung && rng.uniform() < 0.5;

  // Body: large soft-tissue ellipsoid roughly filling the grid.
  Ellipsoid body{nx * 0.5 + rng.uniform(-1.5, 1.5),
                 ny * 0.5 + rng.uniform(-1.5, 1.5),
                 nz * 0.5,
                 nx * 0.42 + rng.uniform(-2.0, 2.0),
                 ny * 0.42 + rng.uniform(-2.0, 2.0),
                 nz * 0.48 + rng.uniform(-1.0, 1.0)};

  auto lung_shape = [&](double center_frac) {
    return Ellipsoid{nx * center_frac + rng.uniform(-2.0, 2.0),
                     ny * 0.5 + rng.uniform(-3.0, 3.0),
                     nz * 0.5 + rng.uniform(-2.0, 2.0),
                     nx * 0.16 + rng.uniform(-1.5, 1.5),
                     ny * 0.24 + rng.uniform(-2.0, 2.0),
                     nz * 0.34 + rng.uniform(-2.0, 2.0)};
  };
  std::vector<Ellipsoid> lungs;
  Ellipsoid left = lung_shape(0.30);
  Ellipsoid right = lung_shape(0.70);
  if (!single_lung) {
    lungs = {left, right};
  } else {
    lungs = {drop_left ? right : left};
  }

  // Consolidation blobs inside the lungs (bright pathology, still lung).
  struct Blob {
    double cx, cy, cz, r;
  };
  std::vector<Blob> blobs;
  for (const auto& lung : lungs) {
    const int n_blobs = static_cast<int>(rng.below(4));
    for (int i = 0; i < n_blobs; ++i) {
      blobs.push_back({lung.cx + rng.uniform(-0.5, 0.5) * lung.rx,
                       lung.cy + rng.uniform(-0.5, 0.5) * lung.ry,
                       lung.cz + rng.uniform(-0.5, 0.5) * lung.rz, rng.uniform(1.5, 4.0)});
    }
  }

  SynthCase out;
  out.volume.nx = out.mask.nx = nx;
  out.volume.ny = out.mask.ny = ny;
  out.volume.nz = out.mask.nz = nz;
  out.volume.sx = out.mask.sx = spec.sx;
  out.volume.sy = out.mask.sy = spec.sy;
  out.volume.sz = out.mask.sz = spec.sz;
  out.volume.dataset_id = spec.dataset_id;
  out.volume.voxels.resize(static_cast<size_t>(out.volume.size()));
  out.mask.voxels.assign(static_cast<size_t>(out.mask.size()), 0);

  size_t i = 0;
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x, ++i) {
        double hu = -1000.0;  // air
        if (body.contains(x, y, z)) hu = 40.0 + rng.normal() * 15.0;
        bool in_lung = false;
        for (const auto& lung : lungs) {
          if (lung.contains(x, y, z)) {
            in_lung = true;
            break;
          }
        }
        if (in_lung) {
          hu = -850.0 + rng.normal() * 30.0;
          for (const auto& b : blobs) {
            const double dx = x - b.cx, dy = y - b.cy, dz = z - b.cz;
            if (dx * dx + dy * dy + dz * dz <= b.r * b.r) {
              hu = 0.0 + rng.normal() * 20.0;
              break;
            }
          }
          out.mask.voxels[i] = 1;
        }
        out.volume.voxels[i] = clamp_hu(hu);
      }
    }
  }
  return out;
}

std::vector<ManifestRow> write_synth_corpus(const std::filesystem::path& out_dir, int cases,
                                            uint64_t seed, const SynthSpec& spec) {
  if (cases < 1) throw ConfigError("synth: cases must be >= 1");
  std::filesystem::create_directories(out_dir);

  // The manifest carries bare filenames so the corpus is relocatable and
  // its bytes depend only on the seed; load_manifest resolves relative
  // entries against the manifest's directory.
  std::vector<ManifestRow> relative;
  for (int c = 0; c < cases; ++c) {
    char name[32];
    std::snprintf(name, sizeof(name), "case%04d", c);
    SynthCase sc = make_synth_case(seed, c, spec);
    sc.volume.patient_id = name;

    const std::string vol_name = std::string(name) + ".svl1";
    const std::string mask_name = std::string(name) + "_mask.svl1";
    save_volume(out_dir / vol_name, sc.volume);
    save_mask(out_dir / mask_name, sc.mask);
    relative.push_back({name, spec.dataset_id, vol_name, mask_name});
  }
  save_manifest(out_dir / "manifest.csv", relative);

  std::vector<ManifestRow> rows = relative;
  for (auto& r : rows) {
    r.volume_path = out_dir / r.volume_path;
    r.mask_path = out_dir / r.mask_path;
  }
  return rows;
}

}  // namespace phnn
