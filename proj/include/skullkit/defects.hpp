#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>

#include "skullkit/dataset.hpp"
#include "skullkit/volume.hpp"

namespace skullkit {

enum class DefectKind { Cranial, Facial };

struct DefectSpec {
  DefectKind kind = DefectKind::Cranial;
  uint64_t seed = 0;

  // cranial: sphere in voxel space. When center_frac is unset the center is
  // sampled (per seed) in the superior third of the foreground bounding box.
  std::optional<std::array<double, 3>> center_frac;  // fractions of (dims - 1)
  double radius_frac = 0.125;                        // fraction of min(dims)

  // facial: remove everything with anterior coordinate fraction > plane_frac,
  // restricted to the axial band [band_frac[0], band_frac[1]).
  double plane_frac = 0.7;
  std::array<double, 2> band_frac{0.0, 1.0};
  int anterior_axis = 1;  // +y by convention; configurable per dataset
};

struct DefectPair {
  Volume defective;
  Volume implant;
};

DefectPair inject_cranial(const Volume& complete, const DefectSpec& spec);
DefectPair inject_facial(const Volume& complete, const DefectSpec& spec);
DefectPair inject(const Volume& complete, const DefectSpec& spec);

enum class KindPolicy { Cranial, Facial, Mixed };

struct PairBuildParams {
  // train/val/test counts; any negative entry selects a proportional
  // 70/15/15 split over all completes.
  std::array<int64_t, 3> counts{-1, -1, -1};
  KindPolicy kind_policy = KindPolicy::Mixed;  // kind used for train/val entries
  uint64_t seed = 0;
  DefectSpec cranial;   // kind/seed fields are overwritten per entry
  DefectSpec facial;
  int max_retries = 16;
};

// Splits the input completes, injects defects, writes defective/implant
// volumes next to out_manifest, and returns the manifest (also written to
// out_manifest). Complete paths in `completes` are resolved against
// `in_base`; emitted paths are relative to the output manifest. Test entries
// get both defect kinds. Cases whose injection keeps coming up empty are
// recorded as skipped.
DatasetManifest build_pairs(const DatasetManifest& completes,
                            const std::filesystem::path& in_base,
                            const PairBuildParams& params,
                            const std::filesystem::path& out_manifest);

}  // namespace skullkit
