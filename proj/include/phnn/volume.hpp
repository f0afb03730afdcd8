#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace phnn {

// 3D CT volume in Hounsfield units, x-fastest storage. Values are clamped
// to [-1024, 3071] at load time.
struct VolumeCT {
  std::vector<int16_t> voxels;
  int nx = 0, ny = 0, nz = 0;
  double sx = 1.0, sy = 1.0, sz = 1.0;  // spacing in mm, each > 0
  std::string patient_id;
  std::string dataset_id;

  long long size() const { return static_cast<long long>(nx) * ny * nz; }
  int16_t at(int x, int y, int z) const {
    return voxels[static_cast<size_t>(x) + static_cast<size_t>(nx) * (y + static_cast<size_t>(ny) * z)];
  }
};

// Binary label volume with the same geometry as its paired VolumeCT.
struct MaskVolume {
  std::vector<uint8_t> voxels;
  int nx = 0, ny = 0, nz = 0;
  double sx = 1.0, sy = 1.0, sz = 1.0;

  long long size() const { return static_cast<long long>(nx) * ny * nz; }
  uint8_t at(int x, int y, int z) const {
    return voxels[static_cast<size_t>(x) + static_cast<size_t>(nx) * (y + static_cast<size_t>(ny) * z)];
  }
  uint8_t& at(int x, int y, int z) {
    return voxels[static_cast<size_t>(x) + static_cast<size_t>(nx) * (y + static_cast<size_t>(ny) * z)];
  }
  long long foreground_count() const;
  bool same_dims(const MaskVolume& other) const {
    return nx == other.nx && ny == other.ny && nz == other.nz;
  }
};

// SVL1 container: magic "SVL1", u8 dtype code (0 = i16 HU, 1 = u8 mask),
// three u32 LE dims, three f64 LE spacings, raw voxels x-fastest.
VolumeCT load_volume(const std::filesystem::path& path);
void save_volume(const std::filesystem::path& path, const VolumeCT& vol);
MaskVolume load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const MaskVolume& mask);

}  // namespace phnn
