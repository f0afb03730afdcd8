#include "phnn/postproc.hpp"

#include <algorithm>
#include <numeric>

#include "phnn/error.hpp"

namespace phnn {

MaskVolume threshold(const ProbabilityVolume& pv, double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw ConfigError("threshold: t must lie strictly inside (0, 1), got " + std::to_string(t));
  }
  MaskVolume out;
  out.nx = pv.nx;
  out.ny = pv.ny;
  out.nz = pv.nz;
  out.sx = pv.sx;
  out.sy = pv.sy;
  out.sz = pv.sz;
  out.voxels.resize(pv.voxels.size());
  for (size_t i = 0; i < pv.voxels.size(); ++i) out.voxels[i] = pv.voxels[i] >= t ? 1 : 0;
  return out;
}

namespace {

// Union-find with path compression.
struct DisjointSet {
  std::vector<int32_t> parent;
  int32_t make() {
    parent.push_back(static_cast<int32_t>(parent.size()));
    return parent.back();
  }
  int32_t find(int32_t a) {
    while (parent[static_cast<size_t>(a)] != a) {
      parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
      a = parent[static_cast<size_t>(a)];
    }
    return a;
  }
  void unite(int32_t a, int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

Components connected_components(const MaskVolume& mask) {
  const int nx = mask.nx, ny = mask.ny, nz = mask.nz;
  Components out;
  out.nx = nx;
  out.ny = ny;
  out.nz = nz;
  out.labels.assign(static_cast<size_t>(mask.size()), 0);

  // Two-pass labeling: raster scan unioning with the 13 already-visited
  // 26-neighbours, then relabel by root.
  DisjointSet ds;
  ds.make();  // slot 0 = background, never united
  auto idx = [&](int x, int y, int z) {
    return static_cast<size_t>(x) + static_cast<size_t>(nx) * (y + static_cast<size_t>(ny) * z);
  };

  std::vector<int32_t> provisional(static_cast<size_t>(mask.size()), 0);
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        if (!mask.voxels[idx(x, y, z)]) continue;
        int32_t label = 0;
        for (int dz = -1; dz <= 0; ++dz) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;  // forward neighbours
              const int px = x + dx, py = y + dy, pz = z + dz;
              if (px < 0 || px >= nx || py < 0 || py >= ny || pz < 0 || pz >= nz) continue;
              const int32_t n = provisional[idx(px, py, pz)];
              if (n == 0) continue;
              if (label == 0) {
                label = n;
              } else {
                ds.unite(label, n);
              }
            }
          }
        }
        if (label == 0) label = ds.make();
        provisional[idx(x, y, z)] = label;
      }
    }
  }

  // Gather per-root statistics in scan order.
  std::vector<int32_t> root_of(ds.parent.size(), 0);
  std::vector<long long> count;
  std::vector<long long> min_index;
  std::vector<int32_t> compact(ds.parent.size(), 0);
  int32_t n_components = 0;
  for (long long i = 0; i < mask.size(); ++i) {
    const int32_t p = provisional[static_cast<size_t>(i)];
    if (p == 0) continue;
    const int32_t root = ds.find(p);
    if (compact[static_cast<size_t>(root)] == 0) {
      compact[static_cast<size_t>(root)] = ++n_components;
      count.push_back(0);
      min_index.push_back(i);
    }
    const int32_t c = compact[static_cast<size_t>(root)];
    root_of[static_cast<size_t>(p)] = c;
    ++count[static_cast<size_t>(c - 1)];
  }

  // Order components by (count desc, min_index asc) and build the final map.
  std::vector<int32_t> order(static_cast<size_t>(n_components));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (count[static_cast<size_t>(a)] != count[static_cast<size_t>(b)]) {
      return count[static_cast<size_t>(a)] > count[static_cast<size_t>(b)];
    }
    return min_index[static_cast<size_t>(a)] < min_index[static_cast<size_t>(b)];
  });
  std::vector<int32_t> final_label(static_cast<size_t>(n_components) + 1, 0);
  const double voxel_mm3 = mask.sx * mask.sy * mask.sz;
  for (int32_t rank = 0; rank < n_components; ++rank) {
    const int32_t c = order[static_cast<size_t>(rank)];
    final_label[static_cast<size_t>(c + 1)] = rank + 1;
    out.components.push_back({rank + 1, count[static_cast<size_t>(c)],
                              static_cast<double>(count[static_cast<size_t>(c)]) * voxel_mm3,
                              min_index[static_cast<size_t>(c)]});
  }
  for (long long i = 0; i < mask.size(); ++i) {
    const int32_t p = provisional[static_cast<size_t>(i)];
    if (p == 0) continue;
    out.labels[static_cast<size_t>(i)] = final_label[static_cast<size_t>(root_of[static_cast<size_t>(p)])];
  }
  return out;
}

MaskVolume fill_holes(const MaskVolume& mask) {
  const int nx = mask.nx, ny = mask.ny, nz = mask.nz;
  auto idx = [&](int x, int y, int z) {
    return static_cast<size_t>(x) + static_cast<size_t>(nx) * (y + static_cast<size_t>(ny) * z);
  };

  // 0 = unvisited background, 1 = boundary-reachable background.
  std::vector<uint8_t> reached(static_cast<size_t>(mask.size()), 0);
  std::vector<long long> queue;
  auto push = [&](int x, int y, int z) {
    const size_t i = idx(x, y, z);
    if (mask.voxels[i] == 0 && !reached[i]) {
      reached[i] = 1;
      queue.push_back(static_cast<long long>(i));
    }
  };
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        if (x == 0 || x == nx - 1 || y == 0 || y == ny - 1 || z == 0 || z == nz - 1) {
          push(x, y, z);
        }
      }
    }
  }
  for (size_t head = 0; head < queue.size(); ++head) {
    const long long i = queue[head];
    const int x = static_cast<int>(i % nx);
    const int y = static_cast<int>((i / nx) % ny);
    const int z = static_cast<int>(i / (static_cast<long long>(nx) * ny));
    if (x > 0) push(x - 1, y, z);
    if (x < nx - 1) push(x + 1, y, z);
    if (y > 0) push(x, y - 1, z);
    if (y < ny - 1) push(x, y + 1, z);
    if (z > 0) push(x, y, z - 1);
    if (z < nz - 1) push(x, y, z + 1);
  }

  MaskVolume out = mask;
  for (long long i = 0; i < mask.size(); ++i) {
    if (!reached[static_cast<size_t>(i)]) out.voxels[static_cast<size_t>(i)] = 1;
  }
  return out;
}

MaskVolume keep_lungs(const MaskVolume& mask) {
  MaskVolume filled = fill_holes(mask);
  Components cc = connected_components(filled);
  if (cc.components.empty()) return filled;  // all background

  bool keep_second = false;
  if (cc.components.size() >= 2) {
    const double ratio = static_cast<double>(cc.components[0].voxels) /
                         static_cast<double>(cc.components[1].voxels);
    keep_second = ratio < 5.0;
  }
  MaskVolume out = filled;
  for (long long i = 0; i < filled.size(); ++i) {
    const int32_t l = cc.labels[static_cast<size_t>(i)];
    out.voxels[static_cast<size_t>(i)] = (l == 1 || (keep_second && l == 2)) ? 1 : 0;
  }
  return out;
}

}  // namespace phnn
