#include "step/skeleton.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace step {

const std::array<const char*, joints::kCount>& joint_names() {
  static const std::array<const char*, joints::kCount> names = {
      "root",           "spine",      "neck",       "head",
      "left_shoulder",  "left_elbow", "left_hand",  "right_shoulder",
      "right_elbow",    "right_hand", "left_hip",   "left_knee",
      "left_foot",      "right_hip",  "right_knee", "right_foot"};
  return names;
}

int joint_index(const std::string& name) {
  const auto& names = joint_names();
  for (int i = 0; i < joints::kCount; ++i) {
    if (name == names[static_cast<std::size_t>(i)]) return i;
  }
  throw ValueError("unknown joint name '" + name + "'");
}

const std::vector<std::pair<int, int>>& skeleton_edges() {
  using namespace joints;
  static const std::vector<std::pair<int, int>> edges = {
      {kRoot, kSpine},          {kSpine, kNeck},
      {kNeck, kHead},           {kNeck, kLeftShoulder},
      {kLeftShoulder, kLeftElbow},   {kLeftElbow, kLeftHand},
      {kNeck, kRightShoulder},  {kRightShoulder, kRightElbow},
      {kRightElbow, kRightHand},     {kRoot, kLeftHip},
      {kLeftHip, kLeftKnee},    {kLeftKnee, kLeftFoot},
      {kRoot, kRightHip},       {kRightHip, kRightKnee},
      {kRightKnee, kRightFoot}};
  return edges;
}

Eigen::MatrixXd normalized_adjacency() {
  const int v = joints::kCount;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(v, v);
  for (const auto& [p, c] : skeleton_edges()) {
    a(p, c) = 1.0;
    a(c, p) = 1.0;
  }
  for (int i = 0; i < v; ++i) {
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

Eigen::Matrix<double, joints::kCount, 3> rest_pose() {
  using namespace joints;
  Eigen::Matrix<double, kCount, 3> p;
  p.setZero();
  auto set = [&](int j, double x, double y) {
    p(j, 0) = x;
    p(j, 1) = y;
  };
  set(kRoot, 0.00, 0.00);
  set(kSpine, 0.00, 0.25);
  set(kNeck, 0.00, 0.50);
  set(kHead, 0.00, 0.65);
  set(kLeftShoulder, 0.20, 0.45);
  set(kLeftElbow, 0.25, 0.20);
  set(kLeftHand, 0.28, -0.05);
  set(kRightShoulder, -0.20, 0.45);
  set(kRightElbow, -0.25, 0.20);
  set(kRightHand, -0.28, -0.05);
  set(kLeftHip, 0.10, -0.05);
  set(kLeftKnee, 0.11, -0.50);
  set(kLeftFoot, 0.12, -0.95);
  set(kRightHip, -0.10, -0.05);
  set(kRightKnee, -0.11, -0.50);
  set(kRightFoot, -0.12, -0.95);
  return p;
}

void GaitSequence::validate() const {
  check_data(positions.rank() == 3 && positions.dim(0) == 3,
             "gait positions must be [3, frames, joints], got " +
                 positions.shape_str());
  check_data(positions.dim(1) >= 1, "gait must have at least one frame");
  check_data(positions.dim(2) == joints::kCount,
             "gait must have " + std::to_string(joints::kCount) + " joints, got " +
                 std::to_string(positions.dim(2)));
  check_data(frame_rate_hz > 0.0, "frame rate must be positive");
  check_data(positions.all_finite(), "gait contains non-finite coordinates");
}

GaitSequence GaitSequence::zeros(int t, int v) {
  GaitSequence g;
  g.positions = Tensor({3, t, v});
  return g;
}

Eigen::MatrixX3d frame_matrix(const GaitSequence& gait, int t) {
  const int v = gait.num_joints();
  check_shape(t >= 0 && t < gait.frames(), "frame index out of range");
  Eigen::MatrixX3d m(v, 3);
  for (int j = 0; j < v; ++j) {
    for (int c = 0; c < 3; ++c) m(j, c) = gait.at(c, t, j);
  }
  return m;
}

void set_frame(GaitSequence& gait, int t, const Eigen::MatrixX3d& points) {
  check_shape(points.rows() == gait.num_joints(), "frame joint count mismatch");
  for (int j = 0; j < points.rows(); ++j) {
    for (int c = 0; c < 3; ++c) gait.set(c, t, j, points(j, c));
  }
}

Tensor batch_positions(const std::vector<GaitSequence>& data,
                       const std::vector<int>& rows, int expect_frames) {
  check_value(!rows.empty(), "empty batch");
  check_value(expect_frames >= 1, "batch needs at least one frame");
  Tensor out({static_cast<int>(rows.size()), 3, expect_frames, joints::kCount});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    int row = rows[i];
    check_value(row >= 0 && row < static_cast<int>(data.size()),
                "batch row out of range");
    const GaitSequence& gait = data[static_cast<std::size_t>(row)];
    check_data(gait.num_joints() == joints::kCount,
               "gait joint count is not the canonical 16");
    check_data(gait.frames() == expect_frames,
               "gait has " + std::to_string(gait.frames()) +
                   " frames, network expects " + std::to_string(expect_frames));
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < expect_frames; ++t)
        for (int v = 0; v < joints::kCount; ++v)
          out.at4(static_cast<int>(i), c, t, v) =
              static_cast<real>(gait.at(c, t, v));
  }
  return out;
}

SimilarityTransform umeyama_align(const Eigen::MatrixX3d& src,
                                  const Eigen::MatrixX3d& dst) {
  const auto n = src.rows();
  check_value(n >= 3 && dst.rows() == n,
              "umeyama_align needs matching point sets of at least 3 points");

  Eigen::RowVector3d mu_src = src.colwise().mean();
  Eigen::RowVector3d mu_dst = dst.colwise().mean();
  Eigen::MatrixX3d xc = src.rowwise() - mu_src;
  Eigen::MatrixX3d yc = dst.rowwise() - mu_dst;

  double var_src = xc.squaredNorm() / static_cast<double>(n);
  check_value(var_src > 1e-30, "umeyama_align: source points coincide");

  // Cross-covariance of destination against source.
  Eigen::Matrix3d cov = (yc.transpose() * xc) / static_cast<double>(n);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d = svd.singularValues();

  // Rotation is only determined when the points span at least a plane.
  check_value(d(1) > 1e-12 * std::max(d(0), 1e-300),
              "umeyama_align: degenerate (rank-deficient) point configuration");

  // Flip the least-significant axis if the best orthogonal map would be a
  // reflection; this keeps det(R) = +1 and is exact in the planar case.
  Eigen::Vector3d s = Eigen::Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    s(2) = -1.0;
  }

  SimilarityTransform tf;
  tf.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  tf.scale = d.dot(s) / var_src;
  tf.translation =
      mu_dst.transpose() - tf.scale * tf.rotation * mu_src.transpose();
  return tf;
}

GaitSequence view_normalize(const GaitSequence& gait) {
  gait.validate();
  static const Eigen::Matrix<double, joints::kCount, 3> rest = rest_pose();
  SimilarityTransform tf = umeyama_align(frame_matrix(gait, 0), rest);
  GaitSequence out = gait;
  for (int t = 0; t < gait.frames(); ++t) {
    Eigen::MatrixX3d pts = frame_matrix(gait, t);
    for (int j = 0; j < pts.rows(); ++j) {
      pts.row(j) = tf.apply(pts.row(j).transpose()).transpose();
    }
    set_frame(out, t, pts);
  }
  return out;
}

}  // namespace step
