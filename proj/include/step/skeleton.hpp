#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "step/common.hpp"
#include "step/tensor.hpp"

namespace step {

// 16-joint skeleton. Joint order is baked into every file format and
// checkpoint; append-only.
namespace joints {
inline constexpr int kRoot = 0;
inline constexpr int kSpine = 1;
inline constexpr int kNeck = 2;
inline constexpr int kHead = 3;
inline constexpr int kLeftShoulder = 4;
inline constexpr int kLeftElbow = 5;
inline constexpr int kLeftHand = 6;
inline constexpr int kRightShoulder = 7;
inline constexpr int kRightElbow = 8;
inline constexpr int kRightHand = 9;
inline constexpr int kLeftHip = 10;
inline constexpr int kLeftKnee = 11;
inline constexpr int kLeftFoot = 12;
inline constexpr int kRightHip = 13;
inline constexpr int kRightKnee = 14;
inline constexpr int kRightFoot = 15;
inline constexpr int kCount = 16;
}  // namespace joints

const std::array<const char*, joints::kCount>& joint_names();
int joint_index(const std::string& name);

// The 15 bones of the kinematic tree as (parent, child) pairs.
const std::vector<std::pair<int, int>>& skeleton_edges();

// Row-stochastic D^-1 (A + I): self-loops added, rows normalized by degree.
// This is the aggregation operator of the spatial graph convolution.
Eigen::MatrixXd normalized_adjacency();

// Canonical standing pose: root at the origin, +y up, +z walking direction,
// +x to the skeleton's left. All joints in the z=0 plane, metres.
Eigen::Matrix<double, joints::kCount, 3> rest_pose();

// One walking sample: positions laid out [coordinate, frame, joint].
struct GaitSequence {
  Tensor positions;  // [3, T, V]
  double frame_rate_hz = 25.0;
  std::optional<Emotion> label;

  int frames() const { return positions.rank() == 3 ? positions.dim(1) : 0; }
  int num_joints() const {
    return positions.rank() == 3 ? positions.dim(2) : 0;
  }
  double at(int c, int t, int v) const {
    return static_cast<double>(positions.at3(c, t, v));
  }
  void set(int c, int t, int v, double value) {
    positions.at3(c, t, v) = static_cast<real>(value);
  }
  void validate() const;

  static GaitSequence zeros(int t, int v = joints::kCount);
};

Eigen::MatrixX3d frame_matrix(const GaitSequence& gait, int t);
void set_frame(GaitSequence& gait, int t, const Eigen::MatrixX3d& points);

// Stack dataset rows into a network input [N, 3, T, V]. Every selected
// gait must have exactly `expect_frames` frames.
Tensor batch_positions(const std::vector<GaitSequence>& data,
                       const std::vector<int>& rows, int expect_frames);

// Least-squares similarity x -> scale * rotation * x + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
};

// Minimizes sum ||s R src_i + t - dst_i||^2 with det(R) = +1 enforced, so a
// best-fitting reflection is replaced by the best proper rotation. Needs at
// least 3 points spanning a plane; degenerate configurations are an error.
SimilarityTransform umeyama_align(const Eigen::MatrixX3d& src,
                                  const Eigen::MatrixX3d& dst);

// Aligns the first frame onto the rest pose and applies that one transform
// to every frame. Removes camera/view and global scale; idempotent.
GaitSequence view_normalize(const GaitSequence& gait);

}  // namespace step
