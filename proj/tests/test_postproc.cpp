#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <vector>

#include "phnn/error.hpp"
#include "phnn/postproc.hpp"
#include "phnn/rng.hpp"

using namespace phnn;

namespace {

MaskVolume make_mask(int nx, int ny, int nz) {
  MaskVolume m;
  m.nx = nx;
  m.ny = ny;
  m.nz = nz;
  m.voxels.assign(static_cast<size_t>(m.size()), 0);
  return m;
}

MaskVolume random_mask(int n, double density, Rng& rng) {
  MaskVolume m = make_mask(n, n, n);
  for (auto& v : m.voxels) v = rng.uniform() < density ? 1 : 0;
  return m;
}

// Brute-force oracle: BFS flood fill over 26-connectivity, components in
// first-touch scan order.
std::vector<int> flood_components_oracle(const MaskVolume& m) {
  std::vector<int> labels(m.voxels.size(), 0);
  auto idx = [&](int x, int y, int z) {
    return static_cast<size_t>(x) + static_cast<size_t>(m.nx) * (y + static_cast<size_t>(m.ny) * z);
  };
  int next = 0;
  for (int z = 0; z < m.nz; ++z) {
    for (int y = 0; y < m.ny; ++y) {
      for (int x = 0; x < m.nx; ++x) {
        if (!m.voxels[idx(x, y, z)] || labels[idx(x, y, z)] != 0) continue;
        ++next;
        std::vector<std::array<int, 3>> stack{{x, y, z}};
        labels[idx(x, y, z)] = next;
        while (!stack.empty()) {
          auto [cx, cy, cz] = stack.back();
          stack.pop_back();
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                const int px = cx + dx, py = cy + dy, pz = cz + dz;
                if (px < 0 || px >= m.nx || py < 0 || py >= m.ny || pz < 0 || pz >= m.nz) continue;
                if (m.voxels[idx(px, py, pz)] && labels[idx(px, py, pz)] == 0) {
                  labels[idx(px, py, pz)] = next;
                  stack.push_back({px, py, pz});
                }
              }
            }
          }
        }
      }
    }
  }
  return labels;
}

// Brute-force 6-connectivity hole fill oracle.
MaskVolume fill_holes_oracle(const MaskVolume& m) {
  auto idx = [&](int x, int y, int z) {
    return static_cast<size_t>(x) + static_cast<size_t>(m.nx) * (y + static_cast<size_t>(m.ny) * z);
  };
  std::vector<uint8_t> outside(m.voxels.size(), 0);
  std::vector<std::array<int, 3>> stack;
  for (int z = 0; z < m.nz; ++z) {
    for (int y = 0; y < m.ny; ++y) {
      for (int x = 0; x < m.nx; ++x) {
        const bool border =
            x == 0 || x == m.nx - 1 || y == 0 || y == m.ny - 1 || z == 0 || z == m.nz - 1;
        if (border && !m.voxels[idx(x, y, z)] && !outside[idx(x, y, z)]) {
          outside[idx(x, y, z)] = 1;
          stack.push_back({x, y, z});
          while (!stack.empty()) {
            auto [cx, cy, cz] = stack.back();
            stack.pop_back();
            const int deltas[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                      {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            for (const auto& d : deltas) {
              const int px = cx + d[0], py = cy + d[1], pz = cz + d[2];
              if (px < 0 || px >= m.nx || py < 0 || py >= m.ny || pz < 0 || pz >= m.nz) continue;
              if (!m.voxels[idx(px, py, pz)] && !outside[idx(px, py, pz)]) {
                outside[idx(px, py, pz)] = 1;
                stack.push_back({px, py, pz});
              }
            }
          }
        }
      }
    }
  }
  MaskVolume out = m;
  for (size_t i = 0; i < m.voxels.size(); ++i) {
    if (!m.voxels[i] && !outside[i]) out.voxels[i] = 1;
  }
  return out;
}

// Partition equality: same groups regardless of label numbering.
bool same_partition(const std::vector<int32_t>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int32_t, int> fwd;
  std::map<int, int32_t> rev;
  for (size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == 0) != (b[i] == 0)) return false;
    if (a[i] == 0) continue;
    auto f = fwd.find(a[i]);
    if (f == fwd.end()) {
      if (rev.count(b[i])) return false;
      fwd[a[i]] = b[i];
      rev[b[i]] = a[i];
    } else if (f->second != b[i]) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("threshold semantics") {
  ProbabilityVolume pv;
  pv.nx = pv.ny = pv.nz = 2;
  pv.voxels.assign(8, 0.5);
  MaskVolume at_half = threshold(pv, 0.5);
  for (auto v : at_half.voxels) CHECK(v == 1);  // p >= t convention
  MaskVolume above = threshold(pv, 0.500001);
  for (auto v : above.voxels) CHECK(v == 0);

  Rng rng(71);
  for (auto& v : pv.voxels) v = rng.uniform();
  MaskVolume m = threshold(pv, 0.5);
  for (size_t i = 0; i < pv.voxels.size(); ++i) {
    CHECK(m.voxels[i] == (pv.voxels[i] >= 0.5 ? 1 : 0));
  }

  CHECK_THROWS_AS(threshold(pv, 0.0), ConfigError);
  CHECK_THROWS_AS(threshold(pv, 1.0), ConfigError);
}

TEST_CASE("connected components basics") {
  MaskVolume m = make_mask(5, 5, 5);
  m.at(0, 0, 0) = 1;
  m.at(4, 4, 4) = 1;
  Components cc = connected_components(m);
  CHECK(cc.components.size() == 2);
  CHECK(cc.components[0].voxels == 1);
  CHECK(cc.components[1].voxels == 1);
  // Ties break on the smaller minimum linear index.
  CHECK(cc.components[0].min_index < cc.components[1].min_index);

  // Face-diagonal adjacency joins under 26-connectivity.
  MaskVolume d = make_mask(3, 3, 3);
  d.at(0, 0, 0) = 1;
  d.at(1, 1, 0) = 1;
  CHECK(connected_components(d).components.size() == 1);
  MaskVolume d3 = make_mask(3, 3, 3);
  d3.at(0, 0, 0) = 1;
  d3.at(1, 1, 1) = 1;  // full diagonal still 26-adjacent
  CHECK(connected_components(d3).components.size() == 1);

  // Empty mask: zero components.
  CHECK(connected_components(make_mask(3, 3, 3)).components.empty());
}

TEST_CASE("component volumes in voxels and mm3, ordered descending") {
  MaskVolume m = make_mask(8, 4, 4);
  m.sx = 0.5;
  m.sy = 2.0;
  m.sz = 3.0;
  for (int x = 0; x < 3; ++x) m.at(x, 0, 0) = 1;  // 3 voxels
  m.at(7, 3, 3) = 1;                              // 1 voxel
  Components cc = connected_components(m);
  REQUIRE(cc.components.size() == 2);
  CHECK(cc.components[0].voxels == 3);
  CHECK(cc.components[0].mm3 == doctest::Approx(3 * 0.5 * 2.0 * 3.0));
  CHECK(cc.components[1].voxels == 1);
  CHECK(cc.components[0].label == 1);
  CHECK(cc.components[1].label == 2);
}

TEST_CASE("connected components match the flood-fill oracle on random masks") {
  Rng rng(72);
  for (int trial = 0; trial < 60; ++trial) {
    MaskVolume m = random_mask(16, trial % 2 ? 0.15 : 0.4, rng);
    Components cc = connected_components(m);
    auto oracle = flood_components_oracle(m);
    CHECK(same_partition(cc.labels, oracle));
    const int oracle_count = oracle.empty() ? 0 : *std::max_element(oracle.begin(), oracle.end());
    CHECK(static_cast<int>(cc.components.size()) == oracle_count);
    // Voxel counts must agree per component and be ordered descending.
    for (size_t i = 1; i < cc.components.size(); ++i) {
      CHECK(cc.components[i - 1].voxels >= cc.components[i].voxels);
    }
  }
}

TEST_CASE("fill_holes oracle cases") {
  // Hollow 5x5x5 shell inside a 7-grid becomes solid.
  MaskVolume shell = make_mask(7, 7, 7);
  for (int z = 1; z <= 5; ++z) {
    for (int y = 1; y <= 5; ++y) {
      for (int x = 1; x <= 5; ++x) {
        const bool on_shell = x == 1 || x == 5 || y == 1 || y == 5 || z == 1 || z == 5;
        if (on_shell) shell.at(x, y, z) = 1;
      }
    }
  }
  MaskVolume filled = fill_holes(shell);
  long long count = 0;
  for (auto v : filled.voxels) count += v;
  CHECK(count == 125);  // solid 5^3

  // A tunnel to the boundary keeps the cavity open.
  MaskVolume tunnel = shell;
  tunnel.at(3, 3, 5) = 0;  // pierce the shell
  // The cavity is now 6-connected to the outside through (3,3,5)->(3,3,6).
  MaskVolume t_filled = fill_holes(tunnel);
  CHECK(t_filled.voxels == tunnel.voxels);

  // All-zero mask unchanged.
  MaskVolume zero = make_mask(4, 4, 4);
  CHECK(fill_holes(zero).voxels == zero.voxels);
}

TEST_CASE("fill_holes matches the brute-force oracle and never removes foreground") {
  Rng rng(73);
  for (int trial = 0; trial < 60; ++trial) {
    MaskVolume m = random_mask(16, 0.45, rng);
    MaskVolume filled = fill_holes(m);
    MaskVolume oracle = fill_holes_oracle(m);
    CHECK(filled.voxels == oracle.voxels);
    for (size_t i = 0; i < m.voxels.size(); ++i) {
      if (m.voxels[i]) CHECK(filled.voxels[i] == 1);
    }
  }
}

TEST_CASE("keep_lungs ratio rule") {
  // 100 and 99 voxel bars plus specks: ratio 1.01 < 5 keeps both bars.
  MaskVolume m = make_mask(30, 12, 12);
  for (int i = 0; i < 100; ++i) m.at(i % 25, i / 25, 1) = 1;       // ~100-voxel blob
  for (int i = 0; i < 99; ++i) m.at(i % 25, 6 + i / 25, 8) = 1;    // 99-voxel blob
  m.at(29, 11, 11) = 1;                                            // speck
  MaskVolume kept = keep_lungs(m);
  Components cc = connected_components(kept);
  REQUIRE(cc.components.size() == 2);
  CHECK(cc.components[0].voxels == 100);
  CHECK(cc.components[1].voxels == 99);

  // 100 vs 10: ratio 10 >= 5 keeps only the largest.
  MaskVolume m2 = make_mask(30, 12, 12);
  for (int i = 0; i < 100; ++i) m2.at(i % 25, i / 25, 1) = 1;
  for (int i = 0; i < 10; ++i) m2.at(i, 8, 8) = 1;
  Components cc2 = connected_components(keep_lungs(m2));
  REQUIRE(cc2.components.size() == 1);
  CHECK(cc2.components[0].voxels == 100);

  // Exactly ratio 5 keeps one (strictly-less-than rule).
  MaskVolume m3 = make_mask(30, 12, 12);
  for (int i = 0; i < 50; ++i) m3.at(i % 25, i / 25, 1) = 1;
  for (int i = 0; i < 10; ++i) m3.at(i, 8, 8) = 1;
  CHECK(connected_components(keep_lungs(m3)).components.size() == 1);

  // Single component passes through unchanged.
  MaskVolume single = make_mask(6, 6, 6);
  for (int x = 1; x < 5; ++x) single.at(x, 3, 3) = 1;
  CHECK(keep_lungs(single).voxels == single.voxels);

  // Empty stays empty.
  MaskVolume empty = make_mask(4, 4, 4);
  CHECK(keep_lungs(empty).foreground_count() == 0);
}

TEST_CASE("keep_lungs output shape: at most two components, no holes, idempotent") {
  Rng rng(74);
  for (int trial = 0; trial < 40; ++trial) {
    MaskVolume m = random_mask(16, 0.3 + 0.3 * (trial % 2), rng);
    MaskVolume kept = keep_lungs(m);
    Components cc = connected_components(kept);
    CHECK(cc.components.size() <= 2);
    CHECK(fill_holes(kept).voxels == kept.voxels);  // no enclosed holes
    CHECK(keep_lungs(kept).voxels == kept.voxels);  // idempotent

    // Never adds voxels beyond fill_holes' output.
    MaskVolume filled = fill_holes(m);
    for (size_t i = 0; i < m.voxels.size(); ++i) {
      if (kept.voxels[i]) CHECK(filled.voxels[i] == 1);
    }
  }
}
