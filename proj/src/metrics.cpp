#include "phnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "phnn/error.hpp"

namespace phnn {

double dice(const MaskVolume& a, const MaskVolume& b) {
  if (!a.same_dims(b)) {
    throw DataError("dice: mask dims mismatch " + std::to_string(a.nx) + "x" + std::to_string(a.ny) +
                    "x" + std::to_string(a.nz) + " vs " + std::to_string(b.nx) + "x" +
                    std::to_string(b.ny) + "x" + std::to_string(b.nz));
  }
  long long na = 0, nb = 0, inter = 0;
  for (size_t i = 0; i < a.voxels.size(); ++i) {
    na += a.voxels[i];
    nb += b.voxels[i];
    inter += a.voxels[i] & b.voxels[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::vector<uint8_t> surface_voxels(const MaskVolume& m) {
  std::vector<uint8_t> surf(m.voxels.size(), 0);
  auto idx = [&](int x, int y, int z) {
    return static_cast<size_t>(x) + static_cast<size_t>(m.nx) * (y + static_cast<size_t>(m.ny) * z);
  };
  for (int z = 0; z < m.nz; ++z) {
    for (int y = 0; y < m.ny; ++y) {
      for (int x = 0; x < m.nx; ++x) {
        if (!m.voxels[idx(x, y, z)]) continue;
        const bool border = x == 0 || x == m.nx - 1 || y == 0 || y == m.ny - 1 || z == 0 ||
                            z == m.nz - 1;
        const bool exposed = border || !m.voxels[idx(x - 1, y, z)] || !m.voxels[idx(x + 1, y, z)] ||
                             !m.voxels[idx(x, y - 1, z)] || !m.voxels[idx(x, y + 1, z)] ||
                             !m.voxels[idx(x, y, z - 1)] || !m.voxels[idx(x, y, z + 1)];
        if (exposed) surf[idx(x, y, z)] = 1;
      }
    }
  }
  return surf;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform with anisotropic sample spacing
// (lower envelope of parabolas).
void edt_1d(const double* f, double* out, int n, double spacing) {
  std::vector<int> v(static_cast<size_t>(n));
  std::vector<double> zb(static_cast<size_t>(n) + 1);
  int k = 0;
  v[0] = 0;
  zb[0] = -kInf;
  zb[1] = kInf;
  const double s2 = spacing * spacing;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    while (true) {
      const int p = v[static_cast<size_t>(k)];
      if (f[p] == kInf) {
        // No finite parabola yet; replace.
        if (k == 0) {
          v[0] = q;
          zb[0] = -kInf;
          zb[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      const double s = ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p));
      if (s <= zb[static_cast<size_t>(k)]) {
        --k;
        continue;
      }
      ++k;
      v[static_cast<size_t>(k)] = q;
      zb[static_cast<size_t>(k)] = s;
      zb[static_cast<size_t>(k) + 1] = kInf;
      break;
    }
  }
  if (f[v[0]] == kInf) {
    for (int q = 0; q < n; ++q) out[q] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (zb[static_cast<size_t>(j) + 1] < static_cast<double>(q)) ++j;
    const int p = v[static_cast<size_t>(j)];
    const double d = (q - p) * spacing;
    out[q] = d * d + f[p];
  }
  }

// Exact squared euclidean distance to the seed set, separable per axis.
std::vector<double> squared_edt(const std::vector<uint8_t>& seeds, int nx, int ny, int nz,
                                double sx, double sy, double sz) {
  std::vector<double> dist(seeds.size());
  for (size_t i = 0; i < seeds.size(); ++i) dist[i] = seeds[i] ? 0.0 : kInf;
  auto idx = [&](int x, int y, int z) {
    return static_cast<size_t>(x) + static_cast<size_t>(nx) * (y + static_cast<size_t>(ny) * z);
  };

  std::vector<double> line(static_cast<size_t>(std::max({nx, ny, nz})));
  std::vector<double> line_out(line.size());

  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) line[static_cast<size_t>(x)] = dist[idx(x, y, z)];
      edt_1d(line.data(), line_out.data(), nx, sx);
      for (int x = 0; x < nx; ++x) dist[idx(x, y, z)] = line_out[static_cast<size_t>(x)];
    }
  }
  for (int z = 0; z < nz; ++z) {
    for (int x = 0; x < nx; ++x) {
      for (int y = 0; y < ny; ++y) line[static_cast<size_t>(y)] = dist[idx(x, y, z)];
      edt_1d(line.data(), line_out.data(), ny, sy);
      for (int y = 0; y < ny; ++y) dist[idx(x, y, z)] = line_out[static_cast<size_t>(y)];
    }
  }
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      for (int z = 0; z < nz; ++z) line[static_cast<size_t>(z)] = dist[idx(x, y, z)];
      edt_1d(line.data(), line_out.data(), nz, sz);
      for (int z = 0; z < nz; ++z) dist[idx(x, y, z)] = line_out[static_cast<size_t>(z)];
    }
  }
  return dist;
}

}  // namespace

double asd_mm(const MaskVolume& a, const MaskVolume& b) {
  if (!a.same_dims(b)) throw DataError("asd: mask dims mismatch");
  if (a.sx != b.sx || a.sy != b.sy || a.sz != b.sz) {
    throw DataError("asd: mask spacings mismatch");
  }
  const auto sa = surface_voxels(a);
  const auto sb = surface_voxels(b);
  long long n_sa = 0, n_sb = 0;
  for (uint8_t v : sa) n_sa += v;
  for (uint8_t v : sb) n_sb += v;
  if (n_sa == 0 || n_sb == 0) {
    throw StateError("asd: undefined for an empty mask surface");
  }

  const auto dist_to_b = squared_edt(sb, a.nx, a.ny, a.nz, a.sx, a.sy, a.sz);
  const auto dist_to_a = squared_edt(sa, a.nx, a.ny, a.nz, a.sx, a.sy, a.sz);
  double sum = 0.0;
  for (size_t i = 0; i < sa.size(); ++i) {
    if (sa[i]) sum += std::sqrt(dist_to_b[i]);
    if (sb[i]) sum += std::sqrt(dist_to_a[i]);
  }
  return sum / static_cast<double>(n_sa + n_sb);
}

std::vector<std::pair<double, double>> cumulative_histogram(const std::vector<EvalRecord>& records,
                                                            const std::vector<double>& edges) {
  if (records.empty()) throw DataError("cumulative_histogram: no records");
  std::vector<std::pair<double, double>> out;
  out.reserve(edges.size());
  for (double edge : edges) {
    long long n = 0;
    for (const auto& r : records) n += r.dice <= edge ? 1 : 0;
    out.emplace_back(edge, static_cast<double>(n) / static_cast<double>(records.size()));
  }
  return out;
}

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_report(const std::filesystem::path& path, std::vector<EvalRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const EvalRecord& a, const EvalRecord& b) { return a.patient_id < b.patient_id; });
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report " + path.string());
  out << "patient_id,dice,asd_mm,pred_voxels,gt_voxels\n";
  std::vector<double> dices, asds;
  for (const auto& r : records) {
    out << r.patient_id << ',' << fmt(r.dice) << ','
        << (r.asd_defined ? fmt(r.asd_mm) : std::string("nan")) << ',' << r.pred_voxels << ','
        << r.gt_voxels << '\n';
    if (std::isfinite(r.dice)) dices.push_back(r.dice);  // error rows carry nan
    if (r.asd_defined) asds.push_back(r.asd_mm);
  }
  const auto [dm, dsd] = mean_sd(dices);
  const auto [am, asd_sd] = mean_sd(asds);
  out << "summary," << fmt(dm) << "±" << fmt(dsd) << ',';
  if (asds.empty()) {
    out << "nan";
  } else {
    out << fmt(am) << "±" << fmt(asd_sd);
  }
  out << ",,\n";
}

void write_histogram(const std::filesystem::path& path, const std::vector<EvalRecord>& records,
                     const std::vector<double>& edges) {
  auto rows = cumulative_histogram(records, edges);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write histogram " + path.string());
  out << "dice_edge,fraction\n";
  for (const auto& [edge, frac] : rows) out << fmt(edge) << ',' << fmt(frac) << '\n';
}

}  // namespace phnn
