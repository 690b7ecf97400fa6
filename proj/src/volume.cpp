#include "skullkit/volume.hpp"

#include <string>

namespace skullkit {

Volume Volume::zeros(Dtype dt, std::array<int64_t, 3> dims) {
  Volume v;
  v.dims = dims;
  v.dtype = dt;
  int64_t n = v.numel();
  if (dt == Dtype::U8)
    v.u8.assign(static_cast<size_t>(n), 0);
  else
    v.f32.assign(static_cast<size_t>(n), 0.f);
  return v;
}

bool Volume::is_binary() const {
  if (dtype != Dtype::U8) return false;
  for (uint8_t v : u8)
    if (v > 1) return false;
  return true;
}

int64_t Volume::foreground_count() const {
  int64_t n = 0;
  if (dtype == Dtype::U8) {
    for (uint8_t v : u8) n += (v != 0);
  } else {
    for (float v : f32) n += (v != 0.f);
  }
  return n;
}

void Volume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1)
      throw Error(ErrorCode::InvalidConfig, "volume dims must be >= 1");
    if (!(spacing[a] > 0.f))
      throw Error(ErrorCode::InvalidConfig, "voxel spacing must be > 0");
  }
  size_t n = static_cast<size_t>(numel());
  size_t have = dtype == Dtype::U8 ? u8.size() : f32.size();
  if (have != n)
    throw Error(ErrorCode::InvalidConfig,
                "voxel buffer holds " + std::to_string(have) + " values, dims imply " +
                    std::to_string(n));
}

bool operator==(const Volume& a, const Volume& b) {
  return a.dims == b.dims && a.spacing == b.spacing && a.origin == b.origin &&
         a.dtype == b.dtype && a.u8 == b.u8 && a.f32 == b.f32;
}

}  // namespace skullkit
