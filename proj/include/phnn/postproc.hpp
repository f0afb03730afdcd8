#pragma once

#include <cstdint>
#include <vector>

#include "phnn/volume.hpp"

namespace phnn {

struct ProbabilityVolume {
  std::vector<double> voxels;  // x-fastest, values in [0, 1]
  int nx = 0, ny = 0, nz = 0;
  double sx = 1.0, sy = 1.0, sz = 1.0;

  long long size() const { return static_cast<long long>(nx) * ny * nz; }
};

// voxel = 1 iff p >= t; t must lie strictly inside (0, 1).
MaskVolume threshold(const ProbabilityVolume& pv, double t);

struct ComponentInfo {
  int label = 0;        // 1-based, descending voxel count
  long long voxels = 0;
  double mm3 = 0.0;
  long long min_index = 0;  // smallest linear voxel index, tie-break key
};

// Foreground components under 26-connectivity. Labels are ordered by
// descending voxel count, ties broken by smallest minimum linear index.
struct Components {
  std::vector<int32_t> labels;  // 0 = background
  int nx = 0, ny = 0, nz = 0;
  std::vector<ComponentInfo> components;
};

Components connected_components(const MaskVolume& mask);

// Background is flood-filled from every boundary voxel under
// 6-connectivity; unreached background voxels become foreground.
MaskVolume fill_holes(const MaskVolume& mask);

// fill_holes, then keep the largest component, plus the second-largest
// when vol(1)/vol(2) < 5.
MaskVolume keep_lungs(const MaskVolume& mask);

}  // namespace phnn
