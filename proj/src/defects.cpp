#include "skullkit/defects.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skullkit/rng.hpp"
#include "skullkit/volume_io.hpp"
#include "skullkit/voxel_ops.hpp"

namespace skullkit {

namespace {

void require_binary(const Volume& v, const char* who) {
  if (!v.is_binary())
    throw Error(ErrorCode::NotBinary, std::string(who) + " expects a binary U8 volume");
}

DefectPair split_by_mask(const Volume& complete, const Volume& removal) {
  DefectPair out;
  out.defective = boolean_op(complete, removal, BoolOp::Subtract);
  out.implant = boolean_op(complete, removal, BoolOp::Intersect);
  if (out.implant.foreground_count() == 0)
    throw Error(ErrorCode::EmptyImplant, "removal region misses the skull");
  return out;
}

}  // namespace

DefectPair inject_cranial(const Volume& complete, const DefectSpec& spec) {
  require_binary(complete, "inject_cranial");
  if (spec.kind != DefectKind::Cranial)
    throw Error(ErrorCode::InvalidConfig, "spec kind is not cranial");

  std::array<double, 3> center;
  if (spec.center_frac) {
    for (int a = 0; a < 3; ++a)
      center[a] = (*spec.center_frac)[a] * (static_cast<double>(complete.dims[a]) - 1.0);
  } else {
    // superior third of the foreground bounding box
    CropRegion bbox = foreground_bbox(complete);
    Rng rng(mix_seed(spec.seed, 0x6372616e));
    center[0] = rng.uniform(static_cast<double>(bbox.lo[0]), static_cast<double>(bbox.hi[0] - 1));
    center[1] = rng.uniform(static_cast<double>(bbox.lo[1]), static_cast<double>(bbox.hi[1] - 1));
    double z_extent = static_cast<double>(bbox.hi[2] - bbox.lo[2]);
    double z_lo = static_cast<double>(bbox.hi[2] - 1) - z_extent / 3.0;
    center[2] = rng.uniform(z_lo, static_cast<double>(bbox.hi[2] - 1));
  }
  if (!(spec.radius_frac > 0.0))
    throw Error(ErrorCode::InvalidConfig, "cranial radius fraction must be > 0");
  double radius = spec.radius_frac *
                  static_cast<double>(std::min({complete.dims[0], complete.dims[1], complete.dims[2]}));
  double r2 = radius * radius;

  Volume removal = Volume::zeros(Dtype::U8, complete.dims);
  for (int64_t z = 0; z < complete.dims[2]; ++z)
    for (int64_t y = 0; y < complete.dims[1]; ++y)
      for (int64_t x = 0; x < complete.dims[0]; ++x) {
        double dx = x - center[0], dy = y - center[1], dz = z - center[2];
        if (dx * dx + dy * dy + dz * dz <= r2)
          removal.u8[static_cast<size_t>(removal.index(x, y, z))] = 1;
      }
  return split_by_mask(complete, removal);
}

DefectPair inject_facial(const Volume& complete, const DefectSpec& spec) {
  require_binary(complete, "inject_facial");
  if (spec.kind != DefectKind::Facial)
    throw Error(ErrorCode::InvalidConfig, "spec kind is not facial");
  if (spec.anterior_axis < 0 || spec.anterior_axis > 2)
    throw Error(ErrorCode::InvalidConfig, "anterior axis must be 0, 1 or 2");
  if (!(spec.band_frac[0] < spec.band_frac[1]))
    throw Error(ErrorCode::InvalidConfig, "axial band must satisfy zlo < zhi");

  const int axis = spec.anterior_axis;
  const double na = static_cast<double>(complete.dims[axis]);
  const double nz = static_cast<double>(complete.dims[2]);

  Volume removal = Volume::zeros(Dtype::U8, complete.dims);
  for (int64_t z = 0; z < complete.dims[2]; ++z) {
    double zf = (static_cast<double>(z) + 0.5) / nz;  // voxel-center fraction
    bool in_band = zf >= spec.band_frac[0] && zf < spec.band_frac[1];
    if (!in_band) continue;
    for (int64_t y = 0; y < complete.dims[1]; ++y)
      for (int64_t x = 0; x < complete.dims[0]; ++x) {
        int64_t coords[3] = {x, y, z};
        double af = (static_cast<double>(coords[axis]) + 0.5) / na;
        if (af > spec.plane_frac)
          removal.u8[static_cast<size_t>(removal.index(x, y, z))] = 1;
      }
  }
  return split_by_mask(complete, removal);
}

DefectPair inject(const Volume& complete, const DefectSpec& spec) {
  return spec.kind == DefectKind::Cranial ? inject_cranial(complete, spec)
                                          : inject_facial(complete, spec);
}

namespace {

// One injection attempt chain with retry-on-EmptyImplant. Attempt 0 keeps the
// caller's geometry; later attempts re-randomize placement.
DefectPair inject_with_retries(const Volume& complete, DefectSpec spec, uint64_t case_seed,
                               int max_retries, uint64_t* used_seed) {
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    DefectSpec s = spec;
    s.seed = mix_seed(case_seed, static_cast<uint64_t>(attempt));
    if (attempt > 0) {
      if (s.kind == DefectKind::Cranial) {
        s.center_frac.reset();  // re-sample the sphere center
      } else {
        Rng rng(mix_seed(s.seed, 0x66616369));
        s.plane_frac = rng.uniform(0.5, 0.9);
      }
    }
    try {
      DefectPair pair = inject(complete, s);
      *used_seed = s.seed;
      return pair;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyImplant || attempt == max_retries) throw;
    }
  }
  throw Error(ErrorCode::EmptyImplant, "unreachable");
}

std::string kind_name(DefectKind k) { return k == DefectKind::Cranial ? "cranial" : "facial"; }

}  // namespace

DatasetManifest build_pairs(const DatasetManifest& completes,
                            const std::filesystem::path& in_base,
                            const PairBuildParams& params,
                            const std::filesystem::path& out_manifest) {
  std::vector<std::string> complete_paths;
  for (const auto& e : completes.entries)
    if (!e.skipped && !e.complete.empty()) complete_paths.push_back(e.complete);

  std::array<int64_t, 3> counts = params.counts;
  if (counts[0] < 0 || counts[1] < 0 || counts[2] < 0) {
    int64_t n = static_cast<int64_t>(complete_paths.size());
    counts[1] = n * 15 / 100;
    counts[2] = n * 15 / 100;
    counts[0] = n - counts[1] - counts[2];
  }

  DatasetManifest assigned = split_dataset(complete_paths, counts, params.seed);

  auto out_dir = out_manifest.parent_path();
  if (out_dir.empty()) out_dir = ".";
  std::filesystem::create_directories(out_dir);

  // emitted paths stay relative to the output manifest
  auto relativize = [&](const std::filesystem::path& target) {
    std::error_code ec;
    auto rel = std::filesystem::proximate(target, out_dir, ec);
    return ec ? target.string() : rel.generic_string();
  };

  DatasetManifest result;
  Rng kind_rng(mix_seed(params.seed, 0x6b696e64));

  size_t case_index = 0;
  for (const auto& e : assigned.entries) {
    std::vector<DefectKind> kinds;
    if (e.split == "test") {
      kinds = {DefectKind::Cranial, DefectKind::Facial};  // test-set doubling
    } else {
      switch (params.kind_policy) {
        case KindPolicy::Cranial: kinds = {DefectKind::Cranial}; break;
        case KindPolicy::Facial: kinds = {DefectKind::Facial}; break;
        case KindPolicy::Mixed:
          kinds = {kind_rng.uniform_int(2) == 0 ? DefectKind::Cranial : DefectKind::Facial};
          break;
      }
    }

    Volume complete;
    bool load_failed = false;
    std::string load_error;
    std::filesystem::path complete_abs = in_base / e.complete;
    try {
      complete = read_volume(complete_abs);
      if (!complete.is_binary()) complete = binarize(complete, 0.5f);
    } catch (const Error& err) {
      load_failed = true;
      load_error = err.what();
    }

    for (DefectKind kind : kinds) {
      ManifestEntry row;
      row.id = e.split == "test" ? e.id + "_" + kind_name(kind) : e.id;
      row.split = e.split;
      row.complete = relativize(complete_abs);
      row.defect_kind = kind_name(kind);
      uint64_t case_seed = mix_seed(params.seed, static_cast<uint64_t>(case_index++));
      row.seed = case_seed;

      if (load_failed) {
        row.skipped = true;
        row.skip_reason = load_error;
        result.entries.push_back(std::move(row));
        continue;
      }

      DefectSpec spec = kind == DefectKind::Cranial ? params.cranial : params.facial;
      spec.kind = kind;
      try {
        uint64_t used_seed = case_seed;
        DefectPair pair =
            inject_with_retries(complete, spec, case_seed, params.max_retries, &used_seed);
        row.seed = used_seed;
        row.defective = row.id + "_defective.nii.gz";
        row.implant = row.id + "_implant.nii.gz";
        write_volume(pair.defective, out_dir / row.defective);
        write_volume(pair.implant, out_dir / row.implant);
      } catch (const Error& err) {
        row.skipped = true;
        row.skip_reason = err.what();
      }
      result.entries.push_back(std::move(row));
    }
  }

  save_manifest(result, out_manifest);
  return result;
}

}  // namespace skullkit
