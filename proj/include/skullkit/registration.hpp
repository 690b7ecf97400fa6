#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "skullkit/volume.hpp"
#include "skullkit/voxel_ops.hpp"

namespace skullkit {

struct Quaternion {
  double w = 1, x = 0, y = 0, z = 0;

  double norm() const;
  Quaternion normalized() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  Quaternion operator*(const Quaternion& o) const;
  std::array<std::array<double, 3>, 3> to_matrix() const;

  static Quaternion from_rotation_vector(const std::array<double, 3>& r);
  std::array<double, 3> to_rotation_vector() const;
  double angle() const;  // rotation angle in radians
};

// 7-DOF similarity transform: x -> scale * R * (x - center) + center + translation,
// all in world (mm) coordinates.
struct SimilarityTransform {
  double scale = 1.0;
  Quaternion rotation;
  std::array<double, 3> translation{0, 0, 0};
  std::array<double, 3> center{0, 0, 0};

  std::array<double, 3> apply(const std::array<double, 3>& p) const;
  std::array<double, 3> apply_inverse(const std::array<double, 3>& p) const;
  SimilarityTransform inverse() const;

  std::string to_json() const;
  static SimilarityTransform from_json(const std::string& text);
};

struct RegistrationConfig {
  double smoothing_sigma = 1.0;      // voxels
  double success_dice = 0.80;        // hard-dice threshold for `converged`
  int max_iterations = 400;          // Nelder-Mead iterations per pass
  int restarts = 1;                  // extra refinement passes from the best point
};

struct RegistrationResult {
  SimilarityTransform transform;
  double dice = 0.0;  // hard dice after alignment
  bool converged = false;
  int iterations = 0;
};

// Resample vol onto its own grid under T: out(x) = in(T^-1(x)).
// Nearest-neighbour for U8, trilinear for F32; out of bounds reads 0.
Volume apply_transform(const Volume& vol, const SimilarityTransform& t);

// Align moving onto fixed. Initialization from foreground centroids and
// second-moment trace ratio; refinement maximizes the soft dice of
// Gaussian-smoothed masks via Nelder-Mead over 7 parameters.
RegistrationResult register_similarity(const Volume& moving, const Volume& fixed,
                                       const RegistrationConfig& config = {});

struct ImplantResult {
  Volume implant;
  RegistrationResult registration;
};

// Register the reconstruction onto the defective input, subtract, and keep
// the largest component. Non-converged registrations still return an
// implant, flagged through the registration result.
ImplantResult extract_implant(const Volume& reconstruction, const Volume& defective,
                              const RegistrationConfig& config = {});

// Separable Gaussian smoothing of the foreground mask (also used by tests).
Volume gaussian_smooth(const Volume& vol, double sigma_voxels);

}  // namespace skullkit
