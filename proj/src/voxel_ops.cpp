#include "skullkit/voxel_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "skullkit/rng.hpp"

namespace skullkit {

Volume resize_area(const Volume& vol, std::array<int64_t, 3> target) {
  vol.validate();
  for (int a = 0; a < 3; ++a)
    if (target[a] < 1) throw Error(ErrorCode::InvalidConfig, "resize target dims must be >= 1");

  std::array<double, 3> scale;  // input voxels per output voxel
  for (int a = 0; a < 3; ++a)
    scale[a] = static_cast<double>(vol.dims[a]) / static_cast<double>(target[a]);

  Volume out;
  out.dims = target;
  out.dtype = Dtype::F32;
  out.origin = vol.origin;
  for (int a = 0; a < 3; ++a)
    out.spacing[a] = static_cast<float>(static_cast<double>(vol.spacing[a]) * scale[a]);
  out.f32.resize(static_cast<size_t>(out.numel()));

  // Per-axis overlap of output box [o*scale, (o+1)*scale) with input voxel i.
  auto axis_overlaps = [](int64_t out_n, int64_t in_n, double s,
                          std::vector<int64_t>& starts, std::vector<int64_t>& ends,
                          std::vector<double>& weights, std::vector<size_t>& offsets) {
    starts.resize(static_cast<size_t>(out_n));
    ends.resize(static_cast<size_t>(out_n));
    offsets.resize(static_cast<size_t>(out_n) + 1);
    weights.clear();
    for (int64_t o = 0; o < out_n; ++o) {
      double lo = o * s;
      double hi = (o + 1) * s;
      int64_t i0 = static_cast<int64_t>(std::floor(lo));
      int64_t i1 = static_cast<int64_t>(std::ceil(hi));
      i0 = std::max<int64_t>(i0, 0);
      i1 = std::min<int64_t>(i1, in_n);
      starts[static_cast<size_t>(o)] = i0;
      ends[static_cast<size_t>(o)] = i1;
      offsets[static_cast<size_t>(o)] = weights.size();
      for (int64_t i = i0; i < i1; ++i) {
        double w = std::min<double>(hi, static_cast<double>(i + 1)) -
                   std::max<double>(lo, static_cast<double>(i));
        weights.push_back(std::max(w, 0.0));
      }
    }
    offsets[static_cast<size_t>(out_n)] = weights.size();
  };

  std::vector<int64_t> xs, xe, ys, ye, zs, ze;
  std::vector<double> xw, yw, zw;
  std::vector<size_t> xo, yo, zo;
  axis_overlaps(target[0], vol.dims[0], scale[0], xs, xe, xw, xo);
  axis_overlaps(target[1], vol.dims[1], scale[1], ys, ye, yw, yo);
  axis_overlaps(target[2], vol.dims[2], scale[2], zs, ze, zw, zo);

  for (int64_t oz = 0; oz < target[2]; ++oz) {
    for (int64_t oy = 0; oy < target[1]; ++oy) {
      for (int64_t ox = 0; ox < target[0]; ++ox) {
        double acc = 0.0;
        double wsum = 0.0;
        size_t zbase = zo[static_cast<size_t>(oz)];
        for (int64_t iz = zs[static_cast<size_t>(oz)]; iz < ze[static_cast<size_t>(oz)]; ++iz) {
          double wz = zw[zbase + static_cast<size_t>(iz - zs[static_cast<size_t>(oz)])];
          size_t ybase = yo[static_cast<size_t>(oy)];
          for (int64_t iy = ys[static_cast<size_t>(oy)]; iy < ye[static_cast<size_t>(oy)]; ++iy) {
            double wy = yw[ybase + static_cast<size_t>(iy - ys[static_cast<size_t>(oy)])];
            double wzy = wz * wy;
            size_t xbase = xo[static_cast<size_t>(ox)];
            int64_t row = vol.index(0, iy, iz);
            for (int64_t ix = xs[static_cast<size_t>(ox)]; ix < xe[static_cast<size_t>(ox)]; ++ix) {
              double w = wzy * xw[xbase + static_cast<size_t>(ix - xs[static_cast<size_t>(ox)])];
              acc += w * vol.value(row + ix);
              wsum += w;
            }
          }
        }
        out.f32[static_cast<size_t>(out.index(ox, oy, oz))] =
            static_cast<float>(wsum > 0.0 ? acc / wsum : 0.0);
      }
    }
  }
  return out;
}

Volume crop(const Volume& vol, const CropRegion& region) {
  vol.validate();
  for (int a = 0; a < 3; ++a) {
    if (region.lo[a] < 0 || region.hi[a] > vol.dims[a] || region.lo[a] >= region.hi[a])
      throw Error(ErrorCode::RegionOutOfBounds,
                  "crop region [" + std::to_string(region.lo[a]) + ", " +
                      std::to_string(region.hi[a]) + ") invalid for axis " + std::to_string(a) +
                      " with extent " + std::to_string(vol.dims[a]));
  }
  Volume out;
  out.dtype = vol.dtype;
  out.spacing = vol.spacing;
  for (int a = 0; a < 3; ++a) {
    out.dims[a] = region.hi[a] - region.lo[a];
    out.origin[a] = vol.origin[a] + static_cast<float>(region.lo[a]) * vol.spacing[a];
  }
  size_t n = static_cast<size_t>(out.numel());
  if (vol.dtype == Dtype::U8)
    out.u8.resize(n);
  else
    out.f32.resize(n);
  for (int64_t z = 0; z < out.dims[2]; ++z)
    for (int64_t y = 0; y < out.dims[1]; ++y) {
      int64_t src = vol.index(region.lo[0], region.lo[1] + y, region.lo[2] + z);
      int64_t dst = out.index(0, y, z);
      if (vol.dtype == Dtype::U8)
        std::copy_n(vol.u8.begin() + src, out.dims[0], out.u8.begin() + dst);
      else
        std::copy_n(vol.f32.begin() + src, out.dims[0], out.f32.begin() + dst);
    }
  return out;
}

Volume crop_axial_centered(const Volume& vol, int64_t n_slices) {
  if (n_slices < 1 || n_slices > vol.dims[2])
    throw Error(ErrorCode::RegionOutOfBounds,
                "axial crop to " + std::to_string(n_slices) + " slices, volume has " +
                    std::to_string(vol.dims[2]));
  int64_t lo = (vol.dims[2] - n_slices) / 2;
  CropRegion r;
  r.lo = {0, 0, lo};
  r.hi = {vol.dims[0], vol.dims[1], lo + n_slices};
  return crop(vol, r);
}

Volume uncrop(const Volume& vol, const CropRegion& region, std::array<int64_t, 3> full_dims) {
  for (int a = 0; a < 3; ++a) {
    if (region.hi[a] - region.lo[a] != vol.dims[a] || region.lo[a] < 0 ||
        region.hi[a] > full_dims[a])
      throw Error(ErrorCode::RegionOutOfBounds, "uncrop region does not match volume dims");
  }
  Volume out = Volume::zeros(vol.dtype, full_dims);
  out.spacing = vol.spacing;
  for (int a = 0; a < 3; ++a)
    out.origin[a] = vol.origin[a] - static_cast<float>(region.lo[a]) * vol.spacing[a];
  for (int64_t z = 0; z < vol.dims[2]; ++z)
    for (int64_t y = 0; y < vol.dims[1]; ++y) {
      int64_t dst = out.index(region.lo[0], region.lo[1] + y, region.lo[2] + z);
      int64_t src = vol.index(0, y, z);
      if (vol.dtype == Dtype::U8)
        std::copy_n(vol.u8.begin() + src, vol.dims[0], out.u8.begin() + dst);
      else
        std::copy_n(vol.f32.begin() + src, vol.dims[0], out.f32.begin() + dst);
    }
  return out;
}

Volume boolean_op(const Volume& a, const Volume& b, BoolOp op) {
  if (a.dims != b.dims)
    throw Error(ErrorCode::DimsMismatch, "boolean operands have different dims");
  if (a.dtype != Dtype::U8 || b.dtype != Dtype::U8)
    throw Error(ErrorCode::NotBinary, "boolean operands must be binary U8 volumes");
  Volume out = a;
  int64_t n = a.numel();
  switch (op) {
    case BoolOp::Union:
      for (int64_t i = 0; i < n; ++i) out.u8[i] = (a.u8[i] || b.u8[i]) ? 1 : 0;
      break;
    case BoolOp::Intersect:
      for (int64_t i = 0; i < n; ++i) out.u8[i] = (a.u8[i] && b.u8[i]) ? 1 : 0;
      break;
    case BoolOp::Subtract:
      for (int64_t i = 0; i < n; ++i) out.u8[i] = (a.u8[i] && !b.u8[i]) ? 1 : 0;
      break;
  }
  return out;
}

Volume largest_component(const Volume& vol) {
  if (vol.dtype != Dtype::U8)
    throw Error(ErrorCode::NotBinary, "largest_component expects a binary U8 volume");
  int64_t n = vol.numel();
  std::vector<int32_t> label(static_cast<size_t>(n), -1);
  std::vector<int64_t> stack;
  int32_t n_components = 0;
  int64_t best_size = 0;
  int32_t best_label = -1;

  const int64_t nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  for (int64_t seed = 0; seed < n; ++seed) {
    if (!vol.u8[seed] || label[static_cast<size_t>(seed)] >= 0) continue;
    int32_t id = n_components++;
    int64_t size = 0;
    stack.clear();
    stack.push_back(seed);
    label[static_cast<size_t>(seed)] = id;
    while (!stack.empty()) {
      int64_t cur = stack.back();
      stack.pop_back();
      ++size;
      int64_t x = cur % nx;
      int64_t y = (cur / nx) % ny;
      int64_t z = cur / (nx * ny);
      for (int64_t dz = -1; dz <= 1; ++dz)
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy && !dz) continue;
            int64_t xx = x + dx, yy = y + dy, zz = z + dz;
            if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
            int64_t ni = xx + nx * (yy + ny * zz);
            if (vol.u8[ni] && label[static_cast<size_t>(ni)] < 0) {
              label[static_cast<size_t>(ni)] = id;
              stack.push_back(ni);
            }
          }
    }
    if (size > best_size) {  // strict: ties keep the earlier (smaller seed) component
      best_size = size;
      best_label = id;
    }
  }

  Volume out = vol;
  if (best_label < 0) return out;  // empty input
  for (int64_t i = 0; i < n; ++i)
    out.u8[i] = (label[static_cast<size_t>(i)] == best_label) ? 1 : 0;
  return out;
}

CropRegion foreground_bbox(const Volume& vol) {
  CropRegion r;
  r.lo = {vol.dims[0], vol.dims[1], vol.dims[2]};
  r.hi = {0, 0, 0};
  bool any = false;
  for (int64_t z = 0; z < vol.dims[2]; ++z)
    for (int64_t y = 0; y < vol.dims[1]; ++y)
      for (int64_t x = 0; x < vol.dims[0]; ++x)
        if (vol.value(x, y, z) != 0.f) {
          any = true;
          r.lo[0] = std::min(r.lo[0], x);
          r.lo[1] = std::min(r.lo[1], y);
          r.lo[2] = std::min(r.lo[2], z);
          r.hi[0] = std::max(r.hi[0], x + 1);
          r.hi[1] = std::max(r.hi[1], y + 1);
          r.hi[2] = std::max(r.hi[2], z + 1);
        }
  if (!any) throw Error(ErrorCode::EmptyForeground, "volume has no foreground voxels");
  return r;
}

Volume make_phantom(const PhantomSpec& spec) {
  const auto& dims = spec.dims;
  if (spec.shell_thickness < 1.0)
    throw Error(ErrorCode::SpecDoesNotFit, "shell thickness must be >= 1 voxel");
  if (spec.jitter < 0.0 || spec.jitter >= 0.5)
    throw Error(ErrorCode::SpecDoesNotFit, "jitter must lie in [0, 0.5)");

  std::array<double, 3> center;
  for (int a = 0; a < 3; ++a) center[a] = (static_cast<double>(dims[a]) - 1.0) / 2.0;

  for (int a = 0; a < 3; ++a) {
    if (spec.radii[a] < spec.shell_thickness + 1.0)
      throw Error(ErrorCode::SpecDoesNotFit, "radii must exceed shell thickness + 1");
    if (center[a] - spec.radii[a] < 0.0 || center[a] + spec.radii[a] > dims[a] - 1.0)
      throw Error(ErrorCode::SpecDoesNotFit,
                  "ellipsoid radius " + std::to_string(spec.radii[a]) +
                      " does not fit axis " + std::to_string(a));
  }
  if (center[1] + spec.radii[1] + spec.face_depth > dims[1] - 1.0)
    throw Error(ErrorCode::SpecDoesNotFit, "anterior protrusion does not fit along +y");

  Rng rng(mix_seed(spec.seed, 0x70686e74));  // per-phantom stream
  std::array<double, 3> radii;
  for (int a = 0; a < 3; ++a) radii[a] = spec.radii[a] * (1.0 - spec.jitter * rng.uniform());
  double fw = spec.face_width * (1.0 - spec.jitter * rng.uniform());
  double fd = spec.face_depth * (1.0 - spec.jitter * rng.uniform());
  double fh = spec.face_height * (1.0 - spec.jitter * rng.uniform());
  std::array<double, 3> inner;
  for (int a = 0; a < 3; ++a) inner[a] = std::max(radii[a] - spec.shell_thickness, 1.0);

  // face block: spans the shell band along +y and protrudes fd voxels beyond it
  double fx0 = center[0] - fw / 2, fx1 = center[0] + fw / 2;
  double fz0 = center[2] - fh / 2, fz1 = center[2] + fh / 2;
  double fy0 = center[1] + inner[1];
  double fy1 = center[1] + radii[1] + fd;

  Volume out = Volume::zeros(Dtype::U8, dims);
  for (int64_t z = 0; z < dims[2]; ++z)
    for (int64_t y = 0; y < dims[1]; ++y)
      for (int64_t x = 0; x < dims[0]; ++x) {
        double dx = x - center[0], dy = y - center[1], dz = z - center[2];
        double no = (dx / radii[0]) * (dx / radii[0]) + (dy / radii[1]) * (dy / radii[1]) +
                    (dz / radii[2]) * (dz / radii[2]);
        double ni = (dx / inner[0]) * (dx / inner[0]) + (dy / inner[1]) * (dy / inner[1]) +
                    (dz / inner[2]) * (dz / inner[2]);
        bool shell = no <= 1.0 && ni >= 1.0;
        bool face = x >= fx0 && x <= fx1 && z >= fz0 && z <= fz1 && y >= fy0 && y <= fy1;
        if (shell || face) out.u8[static_cast<size_t>(out.index(x, y, z))] = 1;
      }
  return out;
}

}  // namespace skullkit
