#include <doctest.h>

#include <cmath>
#include <queue>

#include "skullkit/voxel_ops.hpp"
#include "test_util.hpp"

using namespace skullkit;
using testutil::random_volume;

namespace {

// independent 26-connectivity flood-fill oracle (BFS; shares no code with
// largest_component's stack-based labelling)
int count_components_26(const Volume& v) {
  std::vector<char> seen(static_cast<size_t>(v.numel()), 0);
  int components = 0;
  for (int64_t z = 0; z < v.dims[2]; ++z)
    for (int64_t y = 0; y < v.dims[1]; ++y)
      for (int64_t x = 0; x < v.dims[0]; ++x) {
        int64_t i = v.index(x, y, z);
        if (!v.u8[static_cast<size_t>(i)] || seen[static_cast<size_t>(i)]) continue;
        ++components;
        std::queue<std::array<int64_t, 3>> q;
        q.push({x, y, z});
        seen[static_cast<size_t>(i)] = 1;
        while (!q.empty()) {
          auto [cx, cy, cz] = q.front();
          q.pop();
          for (int64_t dz = -1; dz <= 1; ++dz)
            for (int64_t dy = -1; dy <= 1; ++dy)
              for (int64_t dx = -1; dx <= 1; ++dx) {
                int64_t nx = cx + dx, ny = cy + dy, nz = cz + dz;
                if (!v.in_bounds(nx, ny, nz)) continue;
                int64_t ni = v.index(nx, ny, nz);
                if (v.u8[static_cast<size_t>(ni)] && !seen[static_cast<size_t>(ni)]) {
                  seen[static_cast<size_t>(ni)] = 1;
                  q.push({nx, ny, nz});
                }
              }
        }
      }
  return components;
}

// brute-force k-factor block mean, f64 accumulation in ascending index order
Volume block_mean_oracle(const Volume& v, int64_t k) {
  std::array<int64_t, 3> target{v.dims[0] / k, v.dims[1] / k, v.dims[2] / k};
  Volume out = Volume::zeros(Dtype::F32, target);
  for (int64_t oz = 0; oz < target[2]; ++oz)
    for (int64_t oy = 0; oy < target[1]; ++oy)
      for (int64_t ox = 0; ox < target[0]; ++ox) {
        double sum = 0;
        for (int64_t dz = 0; dz < k; ++dz)
          for (int64_t dy = 0; dy < k; ++dy)
            for (int64_t dx = 0; dx < k; ++dx)
              sum += v.value(ox * k + dx, oy * k + dy, oz * k + dz);
        out.f32[static_cast<size_t>(out.index(ox, oy, oz))] =
            static_cast<float>(sum / static_cast<double>(k * k * k));
      }
  return out;
}

double global_mean(const Volume& v) {
  double s = 0;
  for (int64_t i = 0; i < v.numel(); ++i) s += v.value(i);
  return s / static_cast<double>(v.numel());
}

Volume binary_from(std::array<int64_t, 3> dims, const std::vector<std::array<int64_t, 3>>& on) {
  Volume v = Volume::zeros(Dtype::U8, dims);
  for (auto [x, y, z] : on) v.u8[static_cast<size_t>(v.index(x, y, z))] = 1;
  return v;
}

}  // namespace

TEST_CASE("resize_area keeps constants") {
  Volume v = Volume::zeros(Dtype::F32, {5, 3, 4});
  for (auto& x : v.f32) x = 1.f;
  for (auto target : std::vector<std::array<int64_t, 3>>{{2, 2, 2}, {7, 5, 9}, {1, 1, 1}}) {
    Volume r = resize_area(v, target);
    CHECK(r.dims == target);
    for (float x : r.f32) CHECK(x == doctest::Approx(1.f).epsilon(1e-7));
  }
}

TEST_CASE("resize_area integer-factor block means") {
  Volume v = Volume::zeros(Dtype::F32, {4, 1, 1});
  v.f32 = {1.f, 1.f, 0.f, 0.f};
  Volume r = resize_area(v, {2, 1, 1});
  CHECK(r.f32 == std::vector<float>{1.f, 0.f});

  Volume w = Volume::zeros(Dtype::U8, {2, 2, 2});
  w.u8 = {1, 0, 1, 1, 0, 1, 1, 0};  // sum 5
  Volume s = resize_area(w, {1, 1, 1});
  CHECK(s.f32[0] == doctest::Approx(5.0 / 8.0).epsilon(1e-9));
}

TEST_CASE("resize_area matches the block-mean oracle exactly for integer factors") {
  Rng rng(0x5123);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t k = 2 + static_cast<int64_t>(rng.uniform_int(2));  // 2 or 3
    std::array<int64_t, 3> dims{};
    for (int a = 0; a < 3; ++a) dims[a] = k * (1 + static_cast<int64_t>(rng.uniform_int(4)));
    Volume v = Volume::zeros(Dtype::U8, dims);
    for (auto& x : v.u8) x = static_cast<uint8_t>(rng.uniform_int(2));
    Volume got = resize_area(v, {dims[0] / k, dims[1] / k, dims[2] / k});
    Volume want = block_mean_oracle(v, k);
    CHECK(got.f32 == want.f32);  // bit-exact: integer sums divided by k^3
  }
}

TEST_CASE("resize_area preserves the global mean") {
  Rng rng(0x6321);
  for (int trial = 0; trial < 10; ++trial) {
    Volume v = random_volume(rng, 12);
    std::array<int64_t, 3> target;
    for (int a = 0; a < 3; ++a) target[a] = 1 + static_cast<int64_t>(rng.uniform_int(12));
    Volume r = resize_area(v, target);
    CHECK(global_mean(r) == doctest::Approx(global_mean(v)).epsilon(1e-6));
  }
}

TEST_CASE("resize_area rescales spacing by the dims ratio") {
  Volume v = Volume::zeros(Dtype::F32, {8, 4, 2});
  v.spacing = {1.f, 2.f, 3.f};
  Volume r = resize_area(v, {4, 4, 4});
  CHECK(r.spacing[0] == doctest::Approx(2.f));
  CHECK(r.spacing[1] == doctest::Approx(2.f));
  CHECK(r.spacing[2] == doctest::Approx(1.5f));
}

TEST_CASE("crop") {
  Rng rng(0xC407);
  Volume v = random_volume(rng, 8);

  CropRegion full{{0, 0, 0}, v.dims};
  CHECK(crop(v, full) == v);

  CropRegion corner{{0, 0, 0}, {1, 1, 1}};
  Volume c = crop(v, corner);
  CHECK(c.dims == std::array<int64_t, 3>{1, 1, 1});
  CHECK(c.value(0) == v.value(0));

  if (v.dims[0] > 1 && v.dims[1] > 1 && v.dims[2] > 1) {
    CropRegion r{{1, 1, 1}, v.dims};
    Volume w = crop(v, r);
    CHECK(w.value(0, 0, 0) == v.value(1, 1, 1));
    CHECK(w.origin[0] == doctest::Approx(v.origin[0] + v.spacing[0]));
  }

  CropRegion oob{{0, 0, 0}, {v.dims[0] + 1, v.dims[1], v.dims[2]}};
  CHECK_THROWS_WITH_AS(crop(v, oob), doctest::Contains("RegionOutOfBounds"), Error);
}

TEST_CASE("crop then uncrop restores the original inside the region") {
  Rng rng(0x0c0de);
  for (int trial = 0; trial < 10; ++trial) {
    Volume v = random_volume(rng, 8);
    CropRegion r;
    for (int a = 0; a < 3; ++a) {
      r.lo[a] = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(v.dims[a])));
      r.hi[a] = r.lo[a] + 1 +
                static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(v.dims[a] - r.lo[a])));
    }
    Volume inner = crop(v, r);
    Volume restored = uncrop(inner, r, v.dims);
    for (int64_t z = r.lo[2]; z < r.hi[2]; ++z)
      for (int64_t y = r.lo[1]; y < r.hi[1]; ++y)
        for (int64_t x = r.lo[0]; x < r.hi[0]; ++x)
          CHECK(restored.value(x, y, z) == v.value(x, y, z));
  }
}

TEST_CASE("crop_axial_centered") {
  Volume v = Volume::zeros(Dtype::U8, {4, 4, 10});
  Volume c = crop_axial_centered(v, 6);
  CHECK(c.dims == std::array<int64_t, 3>{4, 4, 6});
  CHECK(c.origin[2] == doctest::Approx(2.f));
  CHECK_THROWS_AS(crop_axial_centered(v, 11), Error);
}

TEST_CASE("boolean identities") {
  Volume a = binary_from({3, 3, 3}, {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}});

  CHECK(boolean_op(a, a, BoolOp::Subtract).foreground_count() == 0);

  // union(a, complete - a) == complete for a inside complete
  Volume complete = binary_from({3, 3, 3}, {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {0, 1, 2}});
  Volume rest = boolean_op(complete, a, BoolOp::Subtract);
  CHECK(boolean_op(a, rest, BoolOp::Union) == complete);

  // disjoint single voxels
  Volume s1 = binary_from({2, 2, 2}, {{0, 0, 0}});
  Volume s2 = binary_from({2, 2, 2}, {{1, 1, 1}});
  CHECK(boolean_op(s1, s2, BoolOp::Intersect).foreground_count() == 0);
  CHECK(boolean_op(s1, s2, BoolOp::Union).foreground_count() == 2);

  Volume wrong = Volume::zeros(Dtype::U8, {2, 2, 3});
  CHECK_THROWS_WITH_AS(boolean_op(s1, wrong, BoolOp::Union), doctest::Contains("DimsMismatch"),
                       Error);
}

TEST_CASE("boolean ops match a per-voxel oracle on random volumes") {
  Rng rng(0xB001);
  for (int trial = 0; trial < 10; ++trial) {
    Volume a = random_volume(rng, 8, /*binary_only=*/true);
    Volume b = a;
    for (auto& x : b.u8) x = static_cast<uint8_t>(rng.uniform_int(2));

    Volume u = boolean_op(a, b, BoolOp::Union);
    Volume i = boolean_op(a, b, BoolOp::Intersect);
    Volume s = boolean_op(a, b, BoolOp::Subtract);
    for (int64_t k = 0; k < a.numel(); ++k) {
      bool av = a.u8[static_cast<size_t>(k)], bv = b.u8[static_cast<size_t>(k)];
      CHECK(u.u8[static_cast<size_t>(k)] == static_cast<uint8_t>(av || bv));
      CHECK(i.u8[static_cast<size_t>(k)] == static_cast<uint8_t>(av && bv));
      CHECK(s.u8[static_cast<size_t>(k)] == static_cast<uint8_t>(av && !bv));
    }
    // subtract(a,b) ∪ intersect(a,b) == a
    CHECK(boolean_op(s, i, BoolOp::Union) == a);
    // De Morgan: ¬(a ∪ b) == ¬a ∩ ¬b, phrased through subtraction from full
    Volume full = a;
    for (auto& x : full.u8) x = 1;
    Volume lhs = boolean_op(full, u, BoolOp::Subtract);
    Volume rhs = boolean_op(boolean_op(full, a, BoolOp::Subtract),
                            boolean_op(full, b, BoolOp::Subtract), BoolOp::Intersect);
    CHECK(lhs == rhs);
  }
}

TEST_CASE("largest_component") {
  Volume blob = binary_from({6, 6, 6}, {});
  for (int64_t z = 1; z < 4; ++z)
    for (int64_t y = 1; y < 4; ++y)
      for (int64_t x = 1; x < 4; ++x) blob.u8[static_cast<size_t>(blob.index(x, y, z))] = 1;
  CHECK(largest_component(blob) == blob);

  Volume with_noise = blob;
  with_noise.u8[static_cast<size_t>(with_noise.index(5, 5, 5))] = 1;
  CHECK(count_components_26(with_noise) == 2);
  Volume cleaned = largest_component(with_noise);
  CHECK(cleaned == blob);
  CHECK(count_components_26(cleaned) == 1);

  Volume empty = Volume::zeros(Dtype::U8, {3, 3, 3});
  CHECK(largest_component(empty) == empty);

  // tie goes to the component with the smallest seed index
  Volume tie = binary_from({5, 1, 1}, {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}, {4, 0, 0}});
  Volume kept = largest_component(tie);
  CHECK(kept.u8 == std::vector<uint8_t>{1, 1, 0, 0, 0});
}

TEST_CASE("foreground_bbox") {
  Volume v = binary_from({5, 6, 7}, {{1, 2, 3}, {3, 2, 5}});
  CropRegion r = foreground_bbox(v);
  CHECK(r.lo == std::array<int64_t, 3>{1, 2, 3});
  CHECK(r.hi == std::array<int64_t, 3>{4, 3, 6});
  Volume empty = Volume::zeros(Dtype::U8, {2, 2, 2});
  CHECK_THROWS_WITH_AS(foreground_bbox(empty), doctest::Contains("EmptyForeground"), Error);
}

TEST_CASE("phantom determinism and geometry") {
  PhantomSpec spec;
  spec.dims = {49, 49, 49};
  spec.radii = {18, 18, 16};
  spec.shell_thickness = 4;
  spec.jitter = 0.0;
  spec.seed = 42;

  Volume a = make_phantom(spec);
  Volume b = make_phantom(spec);
  CHECK(a == b);  // same seed, bit-identical

  // analytic membership with jitter disabled: hollow center, shell band set
  CHECK(a.value(24, 24, 24) == 0.f);
  CHECK(a.value(24 + 16, 24, 24) == 1.f);  // between inner (14) and outer (18)
  CHECK(a.value(24 + 18, 24, 24) == 1.f);  // outer boundary included
  CHECK(a.value(24 + 13, 24, 24) == 0.f);  // inside the inner ellipsoid

  // anterior protrusion exists beyond the outer shell radius
  bool protrusion = false;
  for (int64_t y = 24 + 19; y < 49; ++y) protrusion |= a.value(24, y, 24) == 1.f;
  CHECK(protrusion);
}

TEST_CASE("phantom foreground is a single 26-connected component") {
  for (uint64_t seed : {0ull, 1ull, 7ull, 99ull, 12345ull}) {
    PhantomSpec spec;
    spec.dims = {40, 44, 38};
    spec.radii = {14, 15, 13};
    spec.shell_thickness = 3;
    spec.face_width = 10;
    spec.face_depth = 5;
    spec.face_height = 8;
    spec.jitter = 0.15;
    spec.seed = seed;
    Volume v = make_phantom(spec);
    CHECK(v.foreground_count() > 0);
    CHECK(count_components_26(v) == 1);
  }
}

TEST_CASE("phantom specs that do not fit are rejected") {
  PhantomSpec spec;
  spec.dims = {16, 16, 16};
  spec.radii = {18, 18, 16};
  CHECK_THROWS_WITH_AS(make_phantom(spec), doctest::Contains("SpecDoesNotFit"), Error);

  PhantomSpec thin;
  thin.shell_thickness = 0.25;
  CHECK_THROWS_AS(make_phantom(thin), Error);
}
