#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "skullkit/error.hpp"

namespace skullkit {

enum class Dtype : uint8_t { U8, F32 };

// 3D voxel grid, row-major with x fastest. Immutable by convention once
// constructed; all operations return new volumes.
struct Volume {
  std::array<int64_t, 3> dims{0, 0, 0};     // nx, ny, nz
  std::array<float, 3> spacing{1.f, 1.f, 1.f};  // mm per voxel
  std::array<float, 3> origin{0.f, 0.f, 0.f};   // mm
  Dtype dtype = Dtype::U8;
  std::vector<uint8_t> u8;   // used when dtype == U8
  std::vector<float> f32;    // used when dtype == F32

  static Volume zeros(Dtype dt, std::array<int64_t, 3> dims);

  int64_t numel() const { return dims[0] * dims[1] * dims[2]; }

  int64_t index(int64_t x, int64_t y, int64_t z) const {
    return x + dims[0] * (y + dims[1] * z);
  }

  bool in_bounds(int64_t x, int64_t y, int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }

  float value(int64_t i) const {
    return dtype == Dtype::U8 ? static_cast<float>(u8[i]) : f32[i];
  }

  float value(int64_t x, int64_t y, int64_t z) const { return value(index(x, y, z)); }

  // True for U8 volumes whose voxels are all 0 or 1.
  bool is_binary() const;

  int64_t foreground_count() const;

  bool same_grid(const Volume& other) const { return dims == other.dims; }

  void validate() const;  // throws on broken invariants
};

bool operator==(const Volume& a, const Volume& b);
inline bool operator!=(const Volume& a, const Volume& b) { return !(a == b); }

}  // namespace skullkit
