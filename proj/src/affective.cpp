#include "step/affective.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace step {

namespace {

constexpr double kTiny = 1e-12;

// The five end effectors whose motion carries most of the expressive load.
constexpr std::array<int, 5> kEffectors = {
    joints::kHead, joints::kLeftHand, joints::kRightHand, joints::kLeftFoot,
    joints::kRightFoot};

Eigen::Vector3d jpos(const GaitSequence& g, int t, int v) {
  return {g.at(0, t, v), g.at(1, t, v), g.at(2, t, v)};
}

// Angle with a degeneracy guard: coincident points yield 0 and raise the
// caller's flag instead of throwing mid-extraction.
double guarded_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c, bool* flag) {
  if ((a - b).norm() < kTiny || (c - b).norm() < kTiny) {
    *flag = true;
    return 0.0;
  }
  return joint_angle(a, b, c);
}

}  // namespace

double joint_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                   const Eigen::Vector3d& c) {
  Eigen::Vector3d u = a - b;
  Eigen::Vector3d v = c - b;
  double nu = u.norm(), nv = v.norm();
  check_value(nu >= kTiny && nv >= kTiny,
              "joint_angle undefined for coincident points");
  double cosine = u.dot(v) / (nu * nv);
  return std::acos(std::clamp(cosine, -1.0, 1.0));
}

double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

double bounding_volume(const Eigen::MatrixX3d& frame) {
  check_value(frame.rows() >= 1, "bounding_volume of an empty frame");
  Eigen::Vector3d lo = frame.colwise().minCoeff();
  Eigen::Vector3d hi = frame.colwise().maxCoeff();
  return (hi - lo).prod();
}

int gait_cycle_frames(const std::vector<double>& s) {
  int t_count = static_cast<int>(s.size());
  check_value(t_count >= 4, "cycle estimation needs at least 4 frames");
  double mean = 0;
  for (double v : s) mean += v;
  mean /= t_count;
  std::vector<double> c(s.size());
  for (int t = 0; t < t_count; ++t) c[static_cast<std::size_t>(t)] = s[static_cast<std::size_t>(t)] - mean;

  auto corr = [&](int k) {
    double acc = 0;
    for (int t = 0; t + k < t_count; ++t) {
      acc += c[static_cast<std::size_t>(t)] * c[static_cast<std::size_t>(t + k)];
    }
    return acc;
  };
  double r0 = corr(0);
  if (r0 < kTiny) return 0;  // constant separation: nothing is walking

  // Dominant positive local maximum of the autocorrelation; its lag is the
  // period. Monotone decay (drift, no periodicity) has no local maximum.
  int best = -1;
  double best_r = 0;
  double prev = corr(1), cur = corr(2);
  for (int k = 2; k + 1 <= t_count - 1; ++k) {
    double next = corr(k + 1);
    if (cur > 0 && cur >= prev && cur >= next && cur > best_r) {
      best = k;
      best_r = cur;
    }
    prev = cur;
    cur = next;
  }
  return best > 0 ? best : t_count;
}

const std::array<std::string, kAffectiveDim>& affective_feature_names() {
  static const std::array<std::string, kAffectiveDim> names = {
      "bbox_volume",     "shoulder_angle",  "back_angle",
      "dist_root_head",  "dist_root_lhand", "dist_root_rhand",
      "dist_root_lfoot", "dist_root_rfoot", "dist_hands",
      "area_neck_hands", "area_root_feet",  "stride_length",
      "step_width_ratio", "speed_head",     "speed_lhand",
      "speed_rhand",     "speed_lfoot",     "speed_rfoot",
      "accel_head",      "accel_lhand",     "accel_rhand",
      "accel_lfoot",     "accel_rfoot",     "jerk_head",
      "jerk_lhand",      "jerk_rhand",      "jerk_lfoot",
      "jerk_rfoot",      "cycle_time"};
  return names;
}

void AffectiveVector::validate() const {
  for (int i = 0; i < kAffectiveDim; ++i) {
    double v = values[static_cast<std::size_t>(i)];
    if (!std::isfinite(v)) {
      throw NumericError("affective feature '" +
                         affective_feature_names()[static_cast<std::size_t>(i)] +
                         "' is not finite");
    }
    if (v < 0) {
      throw NumericError("affective feature '" +
                         affective_feature_names()[static_cast<std::size_t>(i)] +
                         "' is negative");
    }
  }
  check_value(values[1] <= M_PI + 1e-9 && values[2] <= M_PI + 1e-9,
              "joint angle outside [0, pi]");
}

AffectiveVector extract_affective(const GaitSequence& gait) {
  gait.validate();
  check_value(gait.num_joints() == joints::kCount,
              "affective features need the canonical 16-joint skeleton");
  int t_count = gait.frames();
  check_value(t_count >= 4, "affective features need at least 4 frames");

  AffectiveVector out;
  auto& f = out.values;
  using namespace joints;

  // Posture: per-frame geometry averaged over the walk.
  double width_samples = 0;
  std::vector<double> separation(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    f[0] += bounding_volume(frame_matrix(gait, t));
    f[1] += guarded_angle(jpos(gait, t, kLeftShoulder), jpos(gait, t, kNeck),
                          jpos(gait, t, kRightShoulder), &out.degenerate);
    f[2] += guarded_angle(jpos(gait, t, kNeck), jpos(gait, t, kSpine),
                          jpos(gait, t, kRoot), &out.degenerate);
    Eigen::Vector3d root = jpos(gait, t, kRoot);
    f[3] += (jpos(gait, t, kHead) - root).norm();
    f[4] += (jpos(gait, t, kLeftHand) - root).norm();
    f[5] += (jpos(gait, t, kRightHand) - root).norm();
    f[6] += (jpos(gait, t, kLeftFoot) - root).norm();
    f[7] += (jpos(gait, t, kRightFoot) - root).norm();
    f[8] += (jpos(gait, t, kLeftHand) - jpos(gait, t, kRightHand)).norm();
    f[9] += triangle_area(jpos(gait, t, kNeck), jpos(gait, t, kRightHand),
                          jpos(gait, t, kLeftHand));
    f[10] += triangle_area(root, jpos(gait, t, kLeftFoot),
                           jpos(gait, t, kRightFoot));

    Eigen::Vector3d lf = jpos(gait, t, kLeftFoot);
    Eigen::Vector3d rf = jpos(gait, t, kRightFoot);
    // Walking direction is +z after view normalization; x is mediolateral.
    f[11] = std::max(f[11], std::abs(lf.z() - rf.z()));
    double hip_width =
        (jpos(gait, t, kLeftHip) - jpos(gait, t, kRightHip)).norm();
    if (hip_width < kTiny) {
      out.degenerate = true;
    } else {
      f[12] += std::abs(lf.x() - rf.x()) / hip_width;
      width_samples += 1;
    }
    separation[static_cast<std::size_t>(t)] = lf.z() - rf.z();
  }
  for (int i : {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}) f[static_cast<std::size_t>(i)] /= t_count;
  if (width_samples > 0) f[12] /= width_samples;

  // Movement: mean finite-difference magnitudes of the end effectors.
  for (std::size_t e = 0; e < kEffectors.size(); ++e) {
    int v = kEffectors[e];
    double speed = 0, accel = 0, jerk = 0;
    for (int t = 0; t + 1 < t_count; ++t) {
      speed += (jpos(gait, t + 1, v) - jpos(gait, t, v)).norm();
    }
    for (int t = 0; t + 2 < t_count; ++t) {
      accel += (jpos(gait, t + 2, v) - 2 * jpos(gait, t + 1, v) +
                jpos(gait, t, v))
                   .norm();
    }
    for (int t = 0; t + 3 < t_count; ++t) {
      jerk += (jpos(gait, t + 3, v) - 3 * jpos(gait, t + 2, v) +
               3 * jpos(gait, t + 1, v) - jpos(gait, t, v))
                  .norm();
    }
    f[13 + e] = speed / (t_count - 1);
    f[18 + e] = accel / (t_count - 2);
    f[23 + e] = jerk / (t_count - 3);
  }
  f[28] = gait_cycle_frames(separation);

  out.validate();
  return out;
}

Tensor affective_matrix(const std::vector<GaitSequence>& gaits) {
  check_value(!gaits.empty(), "affective_matrix of an empty batch");
  Tensor m({static_cast<int>(gaits.size()), kAffectiveDim});
  for (std::size_t i = 0; i < gaits.size(); ++i) {
    AffectiveVector a = extract_affective(gaits[i]);
    for (int j = 0; j < kAffectiveDim; ++j) {
      m.at2(static_cast<int>(i), j) = static_cast<real>(a[j]);
    }
  }
  return m;
}

std::string affective_csv(const std::vector<GaitSequence>& gaits) {
  std::ostringstream os;
  os.precision(17);
  const auto& names = affective_feature_names();
  for (int j = 0; j < kAffectiveDim; ++j) {
    os << names[static_cast<std::size_t>(j)] << ',';
  }
  os << "label\n";
  for (const GaitSequence& g : gaits) {
    AffectiveVector a = extract_affective(g);
    for (int j = 0; j < kAffectiveDim; ++j) os << a[j] << ',';
    if (g.label) os << emotion_name(*g.label);
    os << '\n';
  }
  return os.str();
}

}  // namespace step
