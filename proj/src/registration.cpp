#include "skullkit/registration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "skullkit/losses.hpp"

namespace skullkit {

// ---------------------------------------------------------------------------
// quaternions

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  double n = norm();
  if (n == 0.0) return {1, 0, 0, 0};
  return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::operator*(const Quaternion& o) const {
  return {w * o.w - x * o.x - y * o.y - z * o.z,
          w * o.x + x * o.w + y * o.z - z * o.y,
          w * o.y - x * o.z + y * o.w + z * o.x,
          w * o.z + x * o.y - y * o.x + z * o.w};
}

std::array<std::array<double, 3>, 3> Quaternion::to_matrix() const {
  Quaternion q = normalized();
  return {{{1 - 2 * (q.y * q.y + q.z * q.z), 2 * (q.x * q.y - q.z * q.w),
            2 * (q.x * q.z + q.y * q.w)},
           {2 * (q.x * q.y + q.z * q.w), 1 - 2 * (q.x * q.x + q.z * q.z),
            2 * (q.y * q.z - q.x * q.w)},
           {2 * (q.x * q.z - q.y * q.w), 2 * (q.y * q.z + q.x * q.w),
            1 - 2 * (q.x * q.x + q.y * q.y)}}};
}

Quaternion Quaternion::from_rotation_vector(const std::array<double, 3>& r) {
  double angle = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  if (angle < 1e-12) return {1, r[0] / 2, r[1] / 2, r[2] / 2};  // first order
  double s = std::sin(angle / 2) / angle;
  return Quaternion{std::cos(angle / 2), r[0] * s, r[1] * s, r[2] * s}.normalized();
}

std::array<double, 3> Quaternion::to_rotation_vector() const {
  Quaternion q = normalized();
  if (q.w < 0) q = {-q.w, -q.x, -q.y, -q.z};
  double sin_half = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  double angle = 2 * std::atan2(sin_half, q.w);
  if (sin_half < 1e-12) return {2 * q.x, 2 * q.y, 2 * q.z};
  double k = angle / sin_half;
  return {q.x * k, q.y * k, q.z * k};
}

double Quaternion::angle() const {
  Quaternion q = normalized();
  double sin_half = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  return 2 * std::atan2(sin_half, std::fabs(q.w));
}

// ---------------------------------------------------------------------------
// transform

std::array<double, 3> SimilarityTransform::apply(const std::array<double, 3>& p) const {
  auto r = rotation.to_matrix();
  std::array<double, 3> d{p[0] - center[0], p[1] - center[1], p[2] - center[2]};
  std::array<double, 3> out;
  for (int i = 0; i < 3; ++i)
    out[i] = scale * (r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2]) + center[i] +
             translation[i];
  return out;
}

std::array<double, 3> SimilarityTransform::apply_inverse(const std::array<double, 3>& p) const {
  auto r = rotation.to_matrix();  // transpose to invert
  std::array<double, 3> d{p[0] - center[0] - translation[0], p[1] - center[1] - translation[1],
                          p[2] - center[2] - translation[2]};
  std::array<double, 3> out;
  for (int i = 0; i < 3; ++i)
    out[i] = (r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2]) / scale + center[i];
  return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.conjugate().normalized();
  inv.center = center;
  // solve inv(T(x)) == x for the translation
  auto r = inv.rotation.to_matrix();
  std::array<double, 3> d{-translation[0], -translation[1], -translation[2]};
  for (int i = 0; i < 3; ++i)
    inv.translation[i] = inv.scale * (r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2]);
  return inv;
}

std::string SimilarityTransform::to_json() const {
  nlohmann::ordered_json j;
  j["scale"] = scale;
  j["quaternion"] = {rotation.w, rotation.x, rotation.y, rotation.z};
  j["translation_mm"] = {translation[0], translation[1], translation[2]};
  j["center_mm"] = {center[0], center[1], center[2]};
  return j.dump(2) + "\n";
}

SimilarityTransform SimilarityTransform::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::DataError, std::string("transform is not valid JSON: ") + e.what());
  }
  SimilarityTransform t;
  t.scale = j.at("scale").get<double>();
  auto q = j.at("quaternion");
  t.rotation = Quaternion{q.at(0), q.at(1), q.at(2), q.at(3)}.normalized();
  auto tr = j.at("translation_mm");
  t.translation = {tr.at(0), tr.at(1), tr.at(2)};
  auto c = j.at("center_mm");
  t.center = {c.at(0), c.at(1), c.at(2)};
  if (!(t.scale > 0)) throw Error(ErrorCode::DataError, "transform scale must be > 0");
  return t;
}

// ---------------------------------------------------------------------------
// resampling

namespace {

inline std::array<double, 3> voxel_to_world(const Volume& v, double x, double y, double z) {
  return {v.origin[0] + x * v.spacing[0], v.origin[1] + y * v.spacing[1],
          v.origin[2] + z * v.spacing[2]};
}

inline std::array<double, 3> world_to_voxel(const Volume& v, const std::array<double, 3>& p) {
  return {(p[0] - v.origin[0]) / v.spacing[0], (p[1] - v.origin[1]) / v.spacing[1],
          (p[2] - v.origin[2]) / v.spacing[2]};
}

float sample_trilinear(const Volume& v, const std::array<double, 3>& u) {
  int64_t x0 = static_cast<int64_t>(std::floor(u[0]));
  int64_t y0 = static_cast<int64_t>(std::floor(u[1]));
  int64_t z0 = static_cast<int64_t>(std::floor(u[2]));
  double fx = u[0] - x0, fy = u[1] - y0, fz = u[2] - z0;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        int64_t xx = x0 + dx, yy = y0 + dy, zz = z0 + dz;
        if (!v.in_bounds(xx, yy, zz)) continue;
        double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
        acc += w * v.value(xx, yy, zz);
      }
  return static_cast<float>(acc);
}

}  // namespace

Volume apply_transform(const Volume& vol, const SimilarityTransform& t) {
  vol.validate();
  Volume out = Volume::zeros(vol.dtype, vol.dims);
  out.spacing = vol.spacing;
  out.origin = vol.origin;
  const bool nearest = vol.dtype == Dtype::U8;
  for (int64_t z = 0; z < vol.dims[2]; ++z)
    for (int64_t y = 0; y < vol.dims[1]; ++y)
      for (int64_t x = 0; x < vol.dims[0]; ++x) {
        auto world = voxel_to_world(vol, static_cast<double>(x), static_cast<double>(y),
                                    static_cast<double>(z));
        auto src = world_to_voxel(vol, t.apply_inverse(world));
        if (nearest) {
          int64_t sx = std::llround(src[0]);
          int64_t sy = std::llround(src[1]);
          int64_t sz = std::llround(src[2]);
          if (vol.in_bounds(sx, sy, sz))
            out.u8[static_cast<size_t>(out.index(x, y, z))] =
                vol.u8[static_cast<size_t>(vol.index(sx, sy, sz))];
        } else {
          out.f32[static_cast<size_t>(out.index(x, y, z))] = sample_trilinear(vol, src);
        }
      }
  return out;
}

// ---------------------------------------------------------------------------
// smoothing

Volume gaussian_smooth(const Volume& vol, double sigma_voxels) {
  vol.validate();
  if (!(sigma_voxels > 0)) throw Error(ErrorCode::InvalidConfig, "sigma must be > 0");
  int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma_voxels)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-(static_cast<double>(i) * i) / (2 * sigma_voxels * sigma_voxels));
    kernel[static_cast<size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : kernel) w /= sum;

  Volume cur;
  cur.dims = vol.dims;
  cur.spacing = vol.spacing;
  cur.origin = vol.origin;
  cur.dtype = Dtype::F32;
  cur.f32.resize(static_cast<size_t>(vol.numel()));
  for (int64_t i = 0; i < vol.numel(); ++i) cur.f32[static_cast<size_t>(i)] = vol.value(i);

  const int64_t nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  Volume next = cur;
  for (int axis = 0; axis < 3; ++axis) {
    const int64_t extent = vol.dims[axis];
    for (int64_t z = 0; z < nz; ++z)
      for (int64_t y = 0; y < ny; ++y)
        for (int64_t x = 0; x < nx; ++x) {
          int64_t coord[3] = {x, y, z};
          double acc = 0.0;
          for (int i = -radius; i <= radius; ++i) {
            int64_t c = coord[axis] + i;
            if (c < 0 || c >= extent) continue;  // zero boundary
            int64_t idx[3] = {x, y, z};
            idx[axis] = c;
            acc += kernel[static_cast<size_t>(i + radius)] *
                   cur.f32[static_cast<size_t>(cur.index(idx[0], idx[1], idx[2]))];
          }
          next.f32[static_cast<size_t>(next.index(x, y, z))] = static_cast<float>(acc);
        }
    std::swap(cur, next);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// registration

namespace {

struct Moments {
  std::array<double, 3> centroid;
  double trace;  // trace of the second central moment, world units
};

Moments foreground_moments(const Volume& v) {
  double cx = 0, cy = 0, cz = 0;
  int64_t count = 0;
  for (int64_t z = 0; z < v.dims[2]; ++z)
    for (int64_t y = 0; y < v.dims[1]; ++y)
      for (int64_t x = 0; x < v.dims[0]; ++x)
        if (v.value(x, y, z) != 0.f) {
          auto w = voxel_to_world(v, static_cast<double>(x), static_cast<double>(y),
                                  static_cast<double>(z));
          cx += w[0];
          cy += w[1];
          cz += w[2];
          ++count;
        }
  if (count == 0) throw Error(ErrorCode::EmptyForeground, "volume has no foreground voxels");
  Moments m;
  m.centroid = {cx / count, cy / count, cz / count};
  double tr = 0;
  for (int64_t z = 0; z < v.dims[2]; ++z)
    for (int64_t y = 0; y < v.dims[1]; ++y)
      for (int64_t x = 0; x < v.dims[0]; ++x)
        if (v.value(x, y, z) != 0.f) {
          auto w = voxel_to_world(v, static_cast<double>(x), static_cast<double>(y),
                                  static_cast<double>(z));
          for (int i = 0; i < 3; ++i) tr += (w[i] - m.centroid[i]) * (w[i] - m.centroid[i]);
        }
  m.trace = tr / static_cast<double>(count);
  return m;
}

SimilarityTransform transform_from_params(const std::array<double, 7>& p,
                                          const std::array<double, 3>& center) {
  SimilarityTransform t;
  t.scale = std::max(p[0], 1e-3);
  t.rotation = Quaternion::from_rotation_vector({p[1], p[2], p[3]});
  t.translation = {p[4], p[5], p[6]};
  t.center = center;
  return t;
}

// Soft dice of the transformed smoothed moving mask vs the smoothed fixed
// mask, squared-denominator form: 2*sum(ab) / (sum(a^2) + sum(b^2)). Equals 1
// at perfect overlap whatever the smoothing did to the mask profile, which
// keeps the objective sharp for thin shells.
double soft_overlap(const Volume& smoothed_moving, const Volume& smoothed_fixed,
                    const SimilarityTransform& t) {
  double inter = 0.0, mass = 0.0;
  const Volume& f = smoothed_fixed;
  for (int64_t z = 0; z < f.dims[2]; ++z)
    for (int64_t y = 0; y < f.dims[1]; ++y)
      for (int64_t x = 0; x < f.dims[0]; ++x) {
        double fv = f.f32[static_cast<size_t>(f.index(x, y, z))];
        auto world = voxel_to_world(f, static_cast<double>(x), static_cast<double>(y),
                                    static_cast<double>(z));
        auto src = world_to_voxel(smoothed_moving, t.apply_inverse(world));
        double mv = sample_trilinear(smoothed_moving, src);
        inter += mv * fv;
        mass += mv * mv + fv * fv;
      }
  return mass > 0 ? 2.0 * inter / mass : 0.0;
}

struct SimplexPoint {
  std::array<double, 7> x;
  double f;
};

// standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5)
std::pair<std::array<double, 7>, int> nelder_mead(
    const std::function<double(const std::array<double, 7>&)>& objective,
    const std::array<double, 7>& start, const std::array<double, 7>& step, int max_iter,
    double ftol) {
  constexpr int n = 7;
  std::vector<SimplexPoint> simplex;
  simplex.reserve(n + 1);
  simplex.push_back({start, objective(start)});
  for (int i = 0; i < n; ++i) {
    auto p = start;
    p[static_cast<size_t>(i)] += step[static_cast<size_t>(i)];
    simplex.push_back({p, objective(p)});
  }

  int evals = n + 1;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const SimplexPoint& a, const SimplexPoint& b) { return a.f < b.f; });
    if (std::fabs(simplex.back().f - simplex.front().f) < ftol) break;

    std::array<double, 7> centroid{};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) centroid[static_cast<size_t>(j)] += simplex[static_cast<size_t>(i)].x[static_cast<size_t>(j)] / n;

    auto blend = [&](double coeff) {
      std::array<double, 7> p;
      for (int j = 0; j < n; ++j)
        p[static_cast<size_t>(j)] = centroid[static_cast<size_t>(j)] +
                                    coeff * (simplex.back().x[static_cast<size_t>(j)] -
                                             centroid[static_cast<size_t>(j)]);
      return p;
    };

    auto shrink = [&]() {
      for (int i = 1; i <= n; ++i) {
        for (int j = 0; j < n; ++j)
          simplex[static_cast<size_t>(i)].x[static_cast<size_t>(j)] =
              simplex[0].x[static_cast<size_t>(j)] +
              0.5 * (simplex[static_cast<size_t>(i)].x[static_cast<size_t>(j)] -
                     simplex[0].x[static_cast<size_t>(j)]);
        simplex[static_cast<size_t>(i)].f = objective(simplex[static_cast<size_t>(i)].x);
        ++evals;
      }
    };

    auto reflected = blend(-1.0);
    double fr = objective(reflected);
    ++evals;
    if (fr < simplex.front().f) {
      auto expanded = blend(-2.0);
      double fe = objective(expanded);
      ++evals;
      simplex.back() = fe < fr ? SimplexPoint{expanded, fe} : SimplexPoint{reflected, fr};
    } else if (fr < simplex[n - 1].f) {
      simplex.back() = {reflected, fr};
    } else if (fr < simplex.back().f) {
      auto outside = blend(-0.5);
      double fo = objective(outside);
      ++evals;
      if (fo <= fr)
        simplex.back() = {outside, fo};
      else
        shrink();
    } else {
      auto inside = blend(0.5);
      double fi = objective(inside);
      ++evals;
      if (fi < simplex.back().f)
        simplex.back() = {inside, fi};
      else
        shrink();
    }
  }
  std::stable_sort(simplex.begin(), simplex.end(),
                   [](const SimplexPoint& a, const SimplexPoint& b) { return a.f < b.f; });
  (void)evals;
  return {simplex.front().x, iter};
}

}  // namespace

RegistrationResult register_similarity(const Volume& moving, const Volume& fixed,
                                       const RegistrationConfig& config) {
  if (moving.dtype != Dtype::U8 || fixed.dtype != Dtype::U8)
    throw Error(ErrorCode::NotBinary, "register_similarity expects binary U8 volumes");
  Moments mm = foreground_moments(moving);
  Moments mf = foreground_moments(fixed);

  Volume sm = gaussian_smooth(moving, config.smoothing_sigma);
  Volume sf = gaussian_smooth(fixed, config.smoothing_sigma);

  std::array<double, 7> p0{};
  p0[0] = std::sqrt(mf.trace / std::max(mm.trace, 1e-12));  // second-moment trace ratio
  p0[1] = p0[2] = p0[3] = 0.0;                              // identity rotation
  for (int i = 0; i < 3; ++i) p0[static_cast<size_t>(4 + i)] = mf.centroid[i] - mm.centroid[i];
  const std::array<double, 3> center = mm.centroid;

  auto objective = [&](const std::array<double, 7>& p) {
    return -soft_overlap(sm, sf, transform_from_params(p, center));
  };

  double mean_spacing =
      (moving.spacing[0] + moving.spacing[1] + moving.spacing[2]) / 3.0;
  std::array<double, 7> step{0.05, 0.06, 0.06, 0.06, 2.0 * mean_spacing, 2.0 * mean_spacing,
                             2.0 * mean_spacing};

  auto best = p0;
  int total_iters = 0;
  for (int pass = 0; pass <= config.restarts; ++pass) {
    auto [x, iters] = nelder_mead(objective, best, step, config.max_iterations, 1e-10);
    best = x;
    total_iters += iters;
    for (auto& s : step) s *= 0.25;  // refine around the incumbent
  }

  RegistrationResult result;
  result.transform = transform_from_params(best, center);
  result.iterations = total_iters;
  Volume aligned = apply_transform(moving, result.transform);
  result.dice = dice_metric(aligned, fixed);
  result.converged = result.dice >= config.success_dice;
  return result;
}

ImplantResult extract_implant(const Volume& reconstruction, const Volume& defective,
                              const RegistrationConfig& config) {
  if (reconstruction.dims != defective.dims)
    throw Error(ErrorCode::DimsMismatch, "reconstruction and defective dims differ");
  RegistrationResult reg = register_similarity(reconstruction, defective, config);
  Volume aligned = apply_transform(reconstruction, reg.transform);
  Volume implant = largest_component(boolean_op(aligned, defective, BoolOp::Subtract));
  if (implant.foreground_count() == 0)
    throw Error(ErrorCode::EmptyImplant,
                "subtraction left nothing after connected-component cleanup");
  ImplantResult out;
  out.implant = std::move(implant);
  out.registration = reg;
  return out;
}

}  // namespace skullkit
