#include "phnn/ctdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "phnn/error.hpp"
#include "phnn/rng.hpp"

namespace phnn {

uint8_t rescale_hu(double v, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("rescale_hu: window lo must be below hi");
  const double c = std::clamp(v, lo, hi);
  const double u = 255.0 * (c - lo) / (hi - lo);
  // llround rounds half away from zero.
  return static_cast<uint8_t>(std::llround(u));
}

std::vector<uint8_t> rescale_window(const std::vector<double>& slice, double lo, double hi) {
  std::vector<uint8_t> out(slice.size());
  for (size_t i = 0; i < slice.size(); ++i) out[i] = rescale_hu(slice[i], lo, hi);
  return out;
}

std::pair<int, int> pad_extent(int size, int multiple) {
  const int target = (size + multiple - 1) / multiple * multiple;
  const int total = target - size;
  return {target, total / 2};
}

SliceSample make_slice(const VolumeCT& vol, const MaskVolume* mask, int z, int pad_multiple) {
  if (pad_multiple < 1) throw ConfigError("make_slice: pad_multiple must be >= 1");
  if (z < 0 || z >= vol.nz) throw DataError("make_slice: z out of range");

  const auto [ph, pad_top] = pad_extent(vol.ny, pad_multiple);
  const auto [pw, pad_left] = pad_extent(vol.nx, pad_multiple);

  SliceSample s;
  s.height = ph;
  s.width = pw;
  s.orig_height = vol.ny;
  s.orig_width = vol.nx;
  s.pad_top = pad_top;
  s.pad_left = pad_left;
  s.patient_id = vol.patient_id;
  s.z = z;
  s.image.assign(static_cast<size_t>(3) * ph * pw, 0);
  s.label.assign(static_cast<size_t>(ph) * pw, 0);
  for (int y = 0; y < vol.ny; ++y) {
    for (int x = 0; x < vol.nx; ++x) {
      const double hu = vol.at(x, y, z);
      const size_t o = static_cast<size_t>(y + pad_top) * pw + (x + pad_left);
      for (int c = 0; c < 3; ++c) {
        s.image[static_cast<size_t>(c) * ph * pw + o] =
            rescale_hu(hu, kHuWindows[static_cast<size_t>(c)].first,
                       kHuWindows[static_cast<size_t>(c)].second);
      }
      if (mask != nullptr) s.label[o] = mask->at(x, y, z);
    }
  }
  return s;
}

std::vector<SliceSample> make_slices(const VolumeCT& vol, const MaskVolume& mask, int stride,
                                     int pad_multiple) {
  if (vol.nx != mask.nx || vol.ny != mask.ny || vol.nz != mask.nz) {
    throw DataError("make_slices: volume dims " + std::to_string(vol.nx) + "x" +
                    std::to_string(vol.ny) + "x" + std::to_string(vol.nz) +
                    " do not match mask dims " + std::to_string(mask.nx) + "x" +
                    std::to_string(mask.ny) + "x" + std::to_string(mask.nz));
  }
  if (stride < 1) throw ConfigError("make_slices: stride must be >= 1");

  std::vector<SliceSample> samples;
  for (int z = 0; z < vol.nz; z += stride) {
    samples.push_back(make_slice(vol, &mask, z, pad_multiple));
  }
  return samples;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest " + path.string() + " is empty");
  if (split_csv_line(line) !=
      std::vector<std::string>{"patient_id", "dataset_id", "volume_path", "mask_path"}) {
    throw DataError("manifest " + path.string() +
                    ": header must be patient_id,dataset_id,volume_path,mask_path");
  }
  std::vector<ManifestRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw DataError("manifest " + path.string() + " row " + std::to_string(line_no) + ": need 4 fields, got " +
                      std::to_string(fields.size()));
    }
    for (size_t i = 0; i < 4; ++i) {
      if (fields[i].empty()) {
        static const char* names[] = {"patient_id", "dataset_id", "volume_path", "mask_path"};
        throw DataError("manifest " + path.string() + " row " + std::to_string(line_no) +
                        ": missing " + names[i]);
      }
    }
    ManifestRow row{fields[0], fields[1], fields[2], fields[3]};
    // Relative paths resolve against the manifest's own directory.
    if (row.volume_path.is_relative()) row.volume_path = path.parent_path() / row.volume_path;
    if (row.mask_path.is_relative()) row.mask_path = path.parent_path() / row.mask_path;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("manifest " + path.string() + " has no data rows");
  return rows;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "patient_id,dataset_id,volume_path,mask_path\n";
  for (const auto& r : rows) {
    out << r.patient_id << ',' << r.dataset_id << ',' << r.volume_path.string() << ','
        << r.mask_path.string() << '\n';
  }
}

FoldSplit split_folds(const std::vector<ManifestRow>& manifest, int k, uint64_t seed,
                      double val_fraction) {
  if (k < 2) throw ConfigError("split_folds: k must be >= 2");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ConfigError("split_folds: val_fraction must lie in [0, 1)");
  }

  // Unique patients per dataset, in a deterministic base order.
  std::map<std::string, std::set<std::string>> by_dataset;
  for (const auto& row : manifest) by_dataset[row.dataset_id].insert(row.patient_id);

  FoldSplit split;
  split.k = k;
  split.folds.resize(static_cast<size_t>(k));

  // Deal order per fold, preserved so validation selection is reproducible.
  std::vector<std::vector<std::string>> dealt(static_cast<size_t>(k));
  Rng rng(seed);
  for (const auto& [dataset, patient_set] : by_dataset) {
    if (static_cast<int>(patient_set.size()) < k) {
      throw DataError("split_folds: dataset '" + dataset + "' has " +
                      std::to_string(patient_set.size()) + " patients, fewer than k=" +
                      std::to_string(k));
    }
    std::vector<std::string> patients(patient_set.begin(), patient_set.end());
    rng.shuffle(patients);
    for (size_t i = 0; i < patients.size(); ++i) {
      const int fold = static_cast<int>(i % static_cast<size_t>(k));
      if (split.fold_of_patient.count(patients[i])) {
        throw DataError("split_folds: patient '" + patients[i] +
                        "' appears under more than one dataset_id");
      }
      split.fold_of_patient[patients[i]] = fold;
      dealt[static_cast<size_t>(fold)].push_back(patients[i]);
    }
  }

  for (int f = 0; f < k; ++f) {
    auto& fold = split.folds[static_cast<size_t>(f)];
    fold.test = dealt[static_cast<size_t>(f)];
    std::vector<std::string> remaining;
    for (int off = 1; off < k; ++off) {
      const auto& src = dealt[static_cast<size_t>((f + off) % k)];
      remaining.insert(remaining.end(), src.begin(), src.end());
    }
    size_t n_val = static_cast<size_t>(std::floor(val_fraction * static_cast<double>(remaining.size())));
    n_val = std::max<size_t>(n_val, 1);
    fold.val.assign(remaining.begin(), remaining.begin() + static_cast<long>(n_val));
    fold.train.assign(remaining.begin() + static_cast<long>(n_val), remaining.end());
    if (fold.train.empty()) {
      throw DataError("split_folds: fold " + std::to_string(f) + " has an empty training set");
    }
  }
  return split;
}

}  // namespace phnn
