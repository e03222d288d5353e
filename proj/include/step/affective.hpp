#pragma once

#include <array>
#include <string>
#include <vector>

#include "step/skeleton.hpp"

namespace step {

constexpr int kAffectiveDim = 29;

// Hand-designed gait descriptors: 13 posture features (extents, joint
// angles, inter-joint distances, body-part areas, stride geometry) and 16
// movement features (speed / acceleration / jerk of the five end effectors
// plus the gait cycle time). Distances in metres, rates per frame, angles
// in radians, cycle time in frames. Inputs are expected view-normalized
// (walking along +z, up along +y); see view_normalize().
struct AffectiveVector {
  std::array<double, kAffectiveDim> values{};
  // Set when a guarded degeneracy (coincident joints, zero hip width) forced
  // a feature to 0 instead of evaluating an undefined expression.
  bool degenerate = false;

  double operator[](int i) const {
    return values[static_cast<std::size_t>(i)];
  }
  // Finiteness, non-negativity, angle range. Throws NumericError.
  void validate() const;
};

// Column names, index-aligned with AffectiveVector::values.
const std::array<std::string, kAffectiveDim>& affective_feature_names();

// Angle at vertex b between the rays b->a and b->c, in [0, pi].
// Coincident points (either ray shorter than 1e-12) are an error.
double joint_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                   const Eigen::Vector3d& c);
// Half the cross-product magnitude; 0 for collinear points.
double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c);
// Volume of the axis-aligned box around one frame's joints (V x 3).
double bounding_volume(const Eigen::MatrixX3d& frame);

// Estimated gait period in frames from the autocorrelation of the signed
// anteroposterior foot separation: the dominant positive local maximum.
// A constant signal has no gait and returns 0; a moving but aperiodic one
// falls back to the full window T.
int gait_cycle_frames(const std::vector<double>& foot_separation);

// The 29 features for one walk. Requires at least 4 frames (jerk) and the
// canonical 16-joint layout.
AffectiveVector extract_affective(const GaitSequence& gait);

// Rows of features for a batch, as an [N, 29] tensor.
Tensor affective_matrix(const std::vector<GaitSequence>& gaits);

// One row per gait: 29 named columns plus a trailing label column (empty
// when the gait is unlabeled).
std::string affective_csv(const std::vector<GaitSequence>& gaits);

}  // namespace step
