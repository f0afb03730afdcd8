#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "phnn/volume.hpp"

namespace phnn {

// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty, 0.0 when exactly
// one is.
double dice(const MaskVolume& a, const MaskVolume& b);

// Symmetric average surface distance in mm between the boundary voxel
// sets (voxel centres, physical spacing). A surface voxel is foreground
// with a 6-neighbour background face or a volume-border face.
// Throws StateError when either surface is empty.
double asd_mm(const MaskVolume& a, const MaskVolume& b);

std::vector<uint8_t> surface_voxels(const MaskVolume& m);

struct EvalRecord {
  std::string patient_id;
  double dice = 0.0;
  double asd_mm = 0.0;
  bool asd_defined = false;
  long long pred_voxels = 0;
  long long gt_voxels = 0;
};

// (edge, fraction of records with dice <= edge) per bin edge.
std::vector<std::pair<double, double>> cumulative_histogram(const std::vector<EvalRecord>& records,
                                                            const std::vector<double>& edges);

// CSV: patient_id,dice,asd_mm,pred_voxels,gt_voxels followed by a
// summary row (mean±sd over the defined values).
void write_report(const std::filesystem::path& path, std::vector<EvalRecord> records);
void write_histogram(const std::filesystem::path& path, const std::vector<EvalRecord>& records,
                     const std::vector<double>& edges);

}  // namespace phnn
