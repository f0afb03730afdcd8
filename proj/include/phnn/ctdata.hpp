#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "phnn/volume.hpp"

namespace phnn {

// The three HU windows, in channel order.
inline constexpr std::array<std::pair<double, double>, 3> kHuWindows = {{
    {-1000.0, 200.0},
    {-160.0, 240.0},
    {-1000.0, -775.0},
}};

// u = round(255 * (clamp(v, lo, hi) - lo) / (hi - lo)), half away from zero.
uint8_t rescale_hu(double v, double lo, double hi);

// Applies one window to a whole slice of HU values.
std::vector<uint8_t> rescale_window(const std::vector<double>& slice, double lo, double hi);

// One axial slice: 3-channel 8-bit image (channel-planar storage,
// channel c = window c) with its binary label. Both are zero in any
// padding margin.
struct SliceSample {
  int height = 0, width = 0;          // padded extents
  int orig_height = 0, orig_width = 0;
  int pad_top = 0, pad_left = 0;
  std::vector<uint8_t> image;  // 3 * height * width, planar
  std::vector<uint8_t> label;  // height * width
  std::string patient_id;
  int z = 0;

  uint8_t pixel(int c, int y, int x) const {
    return image[(static_cast<size_t>(c) * height + y) * width + x];
  }
};

// One windowed, padded axial slice. mask may be null (inference); the
// label then stays all zero.
SliceSample make_slice(const VolumeCT& vol, const MaskVolume* mask, int z, int pad_multiple);

// Axial slices z = 0, stride, 2*stride, ..., each windowed into 3 channels
// and symmetrically zero-padded up to the next multiple of pad_multiple.
std::vector<SliceSample> make_slices(const VolumeCT& vol, const MaskVolume& mask, int stride,
                                     int pad_multiple);

// Padded extent and top/left margin for one axis.
std::pair<int, int> pad_extent(int size, int multiple);

// Dataset manifest: UTF-8 CSV with header
// patient_id,dataset_id,volume_path,mask_path
struct ManifestRow {
  std::string patient_id;
  std::string dataset_id;
  std::filesystem::path volume_path;
  std::filesystem::path mask_path;
};

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

// Patient-level k-fold partition, stratified by dataset_id.
struct FoldSplit {
  int k = 0;
  std::map<std::string, int> fold_of_patient;
  struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
  };
  std::vector<Fold> folds;
};

// Patients are sorted per dataset, shuffled with the seed, and dealt
// round-robin into k folds. For fold i: fold i is test, val_fraction of
// the remaining patients (at least one) is validation, the rest train.
FoldSplit split_folds(const std::vector<ManifestRow>& manifest, int k, uint64_t seed,
                      double val_fraction = 0.1);

}  // namespace phnn
