#include "phnn/volume.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "phnn/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "SVL1 reader assumes a little-endian host");

namespace phnn {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'L', '1'};
constexpr size_t kHeaderBytes = 4 + 1 + 3 * 4 + 3 * 8;

struct Header {
  uint8_t dtype = 0;
  uint32_t nx = 0, ny = 0, nz = 0;
  double sx = 0, sy = 0, sz = 0;
};

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

Header parse_header(const std::vector<char>& bytes, uint8_t expected_dtype,
                    const std::string& path) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError(path + ": file shorter than the 41-byte header (byte offset " +
                      std::to_string(bytes.size()) + ")");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic at byte offset 0 (expected \"SVL1\")");
  }
  Header h;
  h.dtype = static_cast<uint8_t>(bytes[4]);
  if (h.dtype != expected_dtype) {
    throw FormatError(path + ": dtype code " + std::to_string(h.dtype) + " at byte offset 4" +
                      " (expected " + std::to_string(expected_dtype) + ")");
  }
  std::memcpy(&h.nx, bytes.data() + 5, 4);
  std::memcpy(&h.ny, bytes.data() + 9, 4);
  std::memcpy(&h.nz, bytes.data() + 13, 4);
  std::memcpy(&h.sx, bytes.data() + 17, 8);
  std::memcpy(&h.sy, bytes.data() + 25, 8);
  std::memcpy(&h.sz, bytes.data() + 33, 8);
  if (h.nx == 0 || h.ny == 0 || h.nz == 0) {
    throw FormatError(path + ": zero extent in dims at byte offset 5");
  }
  if (!(h.sx > 0.0) || !(h.sy > 0.0) || !(h.sz > 0.0)) {
    throw FormatError(path + ": non-positive spacing at byte offset 17");
  }
  return h;
}

void check_payload(const Header& h, size_t have, size_t elem_size, const std::string& path) {
  const size_t want = static_cast<size_t>(h.nx) * h.ny * h.nz * elem_size;
  if (have != want) {
    throw FormatError(path + ": truncated payload, header advertises " + std::to_string(want) +
                      " bytes but " + std::to_string(have) + " follow the header (byte offset " +
                      std::to_string(kHeaderBytes) + ")");
  }
}

void write_header(std::ofstream& out, uint8_t dtype, uint32_t nx, uint32_t ny, uint32_t nz,
                  double sx, double sy, double sz) {
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&dtype), 1);
  out.write(reinterpret_cast<const char*>(&nx), 4);
  out.write(reinterpret_cast<const char*>(&ny), 4);
  out.write(reinterpret_cast<const char*>(&nz), 4);
  out.write(reinterpret_cast<const char*>(&sx), 8);
  out.write(reinterpret_cast<const char*>(&sy), 8);
  out.write(reinterpret_cast<const char*>(&sz), 8);
}

}  // namespace

long long MaskVolume::foreground_count() const {
  long long n = 0;
  for (uint8_t v : voxels) n += v;
  return n;
}

VolumeCT load_volume(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  Header h = parse_header(bytes, 0, path.string());
  check_payload(h, bytes.size() - kHeaderBytes, 2, path.string());

  VolumeCT vol;
  vol.nx = static_cast<int>(h.nx);
  vol.ny = static_cast<int>(h.ny);
  vol.nz = static_cast<int>(h.nz);
  vol.sx = h.sx;
  vol.sy = h.sy;
  vol.sz = h.sz;
  vol.voxels.resize(static_cast<size_t>(vol.size()));
  std::memcpy(vol.voxels.data(), bytes.data() + kHeaderBytes, vol.voxels.size() * 2);
  for (int16_t& v : vol.voxels) v = std::clamp<int16_t>(v, -1024, 3071);
  return vol;
}

void save_volume(const std::filesystem::path& path, const VolumeCT& vol) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_header(out, 0, static_cast<uint32_t>(vol.nx), static_cast<uint32_t>(vol.ny),
               static_cast<uint32_t>(vol.nz), vol.sx, vol.sy, vol.sz);
  out.write(reinterpret_cast<const char*>(vol.voxels.data()),
            static_cast<std::streamsize>(vol.voxels.size() * 2));
  if (!out) throw DataError("short write to " + path.string());
}

MaskVolume load_mask(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  Header h = parse_header(bytes, 1, path.string());
  check_payload(h, bytes.size() - kHeaderBytes, 1, path.string());

  MaskVolume mask;
  mask.nx = static_cast<int>(h.nx);
  mask.ny = static_cast<int>(h.ny);
  mask.nz = static_cast<int>(h.nz);
  mask.sx = h.sx;
  mask.sy = h.sy;
  mask.sz = h.sz;
  mask.voxels.resize(static_cast<size_t>(mask.size()));
  std::memcpy(mask.voxels.data(), bytes.data() + kHeaderBytes, mask.voxels.size());
  for (size_t i = 0; i < mask.voxels.size(); ++i) {
    if (mask.voxels[i] > 1) {
      throw FormatError(path.string() + ": mask voxel value " + std::to_string(mask.voxels[i]) +
                        " at byte offset " + std::to_string(kHeaderBytes + i) +
                        " (binary masks hold 0 or 1)");
    }
  }
  return mask;
}

void save_mask(const std::filesystem::path& path, const MaskVolume& mask) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_header(out, 1, static_cast<uint32_t>(mask.nx), static_cast<uint32_t>(mask.ny),
               static_cast<uint32_t>(mask.nz), mask.sx, mask.sy, mask.sz);
  out.write(reinterpret_cast<const char*>(mask.voxels.data()),
            static_cast<std::streamsize>(mask.voxels.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace phnn
