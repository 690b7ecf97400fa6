#pragma once

#include <array>
#include <cstdint>

#include "skullkit/volume.hpp"

namespace skullkit {

struct CropRegion {
  std::array<int64_t, 3> lo{0, 0, 0};  // inclusive
  std::array<int64_t, 3> hi{0, 0, 0};  // exclusive
};

// Exact box-filter ("area") resampling: every output voxel is the
// volume-overlap-weighted average of the input voxels its box covers.
// Output is always F32; spacing is rescaled by the dims ratio.
Volume resize_area(const Volume& vol, std::array<int64_t, 3> target);

Volume crop(const Volume& vol, const CropRegion& region);

// Centered crop of the axial (z) extent to n_slices.
Volume crop_axial_centered(const Volume& vol, int64_t n_slices);

// Inverse of crop for tests and region-restricted metrics: places `vol`
// back at region.lo inside a zero volume of size full_dims.
Volume uncrop(const Volume& vol, const CropRegion& region, std::array<int64_t, 3> full_dims);

enum class BoolOp { Union, Intersect, Subtract };

Volume boolean_op(const Volume& a, const Volume& b, BoolOp op);

// Keeps only the largest 26-connected foreground component. Ties go to the
// component whose seed has the smallest linear voxel index.
Volume largest_component(const Volume& vol);

// Inclusive bounding box of the foreground. Throws EmptyForeground when empty.
CropRegion foreground_bbox(const Volume& vol);

struct PhantomSpec {
  uint64_t seed = 0;
  std::array<int64_t, 3> dims{48, 48, 48};
  double shell_thickness = 3.0;            // voxels
  std::array<double, 3> radii{18, 18, 16};  // voxels, ellipsoid semi-axes
  double face_width = 12.0;   // protrusion extent along x, voxels
  double face_depth = 6.0;    // protrusion extent beyond the shell along +y
  double face_height = 10.0;  // protrusion extent along z
  double jitter = 0.0;        // per-seed shrink fraction applied to radii/protrusion
};

// Deterministic binary skull stand-in: hollow ellipsoid shell plus an
// anterior (+y) face block, a single 26-connected component.
Volume make_phantom(const PhantomSpec& spec);

}  // namespace skullkit
