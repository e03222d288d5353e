#include "step/synthgait.hpp"

#include <cmath>

#include "step/rng.hpp"

namespace step {

void EmotionStyleParams::validate() const {
  for (double v : {stride, cadence_hz, arm_swing, lean, head_drop, speed,
                   noise_sigma}) {
    check_value(std::isfinite(v), "style parameters must be finite");
  }
  check_value(cadence_hz > 0, "cadence must be positive");
  check_value(stride >= 0, "stride must be non-negative");
  check_value(noise_sigma >= 0, "noise sigma must be non-negative");
}

const std::map<Emotion, EmotionStyleParams>& default_styles() {
  static const std::map<Emotion, EmotionStyleParams> styles = [] {
    std::map<Emotion, EmotionStyleParams> m;
    EmotionStyleParams angry;
    angry.stride = 1.3;
    angry.cadence_hz = 2.2;
    angry.arm_swing = 0.9;
    angry.lean = 0.12;
    angry.head_drop = 0.0;
    angry.speed = 1.5;
    m[Emotion::Angry] = angry;

    EmotionStyleParams neutral;  // the struct defaults
    m[Emotion::Neutral] = neutral;

    EmotionStyleParams happy;
    happy.stride = 1.1;
    happy.cadence_hz = 2.0;
    happy.arm_swing = 0.8;
    happy.lean = -0.05;
    happy.head_drop = -0.02;
    happy.speed = 1.3;
    m[Emotion::Happy] = happy;

    EmotionStyleParams sad;
    sad.stride = 0.55;
    sad.cadence_hz = 1.2;
    sad.arm_swing = 0.2;
    sad.lean = 0.25;
    sad.head_drop = 0.06;
    sad.speed = 0.6;
    m[Emotion::Sad] = sad;
    return m;
  }();
  return styles;
}

namespace {

// Rotate (y, z) about the x-axis through `pivot` by angle a.
void rotate_x(Eigen::Vector3d& p, const Eigen::Vector3d& pivot, double a) {
  double y = p.y() - pivot.y(), z = p.z() - pivot.z();
  p.y() = pivot.y() + y * std::cos(a) - z * std::sin(a);
  p.z() = pivot.z() + y * std::sin(a) + z * std::cos(a);
}

}  // namespace

GaitSequence synth_walk(const EmotionStyleParams& style, Emotion label,
                        int frames, std::uint64_t seed, std::uint64_t index,
                        double frame_rate_hz) {
  style.validate();
  check_value(frames >= 3, "a walk needs at least 3 frames");
  check_value(frame_rate_hz > 0, "frame rate must be positive");

  RngStream r(seed, "synth", index);
  double phase0 = r.uniform(0.0, 2.0 * M_PI);

  auto rest = rest_pose();
  GaitSequence gait = GaitSequence::zeros(frames);
  gait.frame_rate_hz = frame_rate_hz;
  gait.label = label;

  const double dt = 1.0 / frame_rate_hz;
  const Eigen::Vector3d root = rest.row(joints::kRoot);
  const int upper[] = {joints::kSpine,          joints::kNeck,
                       joints::kHead,           joints::kLeftShoulder,
                       joints::kLeftElbow,      joints::kLeftHand,
                       joints::kRightShoulder,  joints::kRightElbow,
                       joints::kRightHand};

  for (int t = 0; t < frames; ++t) {
    double s = std::sin(phase0 + 2.0 * M_PI * style.cadence_hz * t * dt);

    std::array<Eigen::Vector3d, joints::kCount> p;
    for (int v = 0; v < joints::kCount; ++v) p[v] = rest.row(v);

    // Torso inclination: the upper body pitches forward about the root.
    for (int v : upper) rotate_x(p[v], root, style.lean);
    p[joints::kHead].y() -= style.head_drop;

    // Contralateral swing: the left leg and the right arm lead together.
    // Legs translate fore-aft up to half the stride each; arms rotate
    // about the shoulder. A hanging arm rotated by -a moves its hand to
    // +z, so the right arm takes -arm_swing * s.
    p[joints::kLeftFoot].z() += 0.5 * style.stride * s;
    p[joints::kLeftKnee].z() += 0.25 * style.stride * s;
    p[joints::kRightFoot].z() -= 0.5 * style.stride * s;
    p[joints::kRightKnee].z() -= 0.25 * style.stride * s;

    for (bool left : {true, false}) {
      int shoulder = left ? joints::kLeftShoulder : joints::kRightShoulder;
      int elbow = left ? joints::kLeftElbow : joints::kRightElbow;
      int hand = left ? joints::kLeftHand : joints::kRightHand;
      double a = (left ? 1.0 : -1.0) * style.arm_swing * s;
      rotate_x(p[elbow], p[shoulder], a);
      rotate_x(p[hand], p[shoulder], a);
    }

    double advance = style.speed * t * dt;
    for (int v = 0; v < joints::kCount; ++v) {
      gait.set(0, t, v, p[v].x() + style.noise_sigma * r.gaussian());
      gait.set(1, t, v, p[v].y() + style.noise_sigma * r.gaussian());
      gait.set(2, t, v,
               p[v].z() + advance + style.noise_sigma * r.gaussian());
    }
  }
  return gait;
}

std::vector<GaitSequence> synth_dataset(int per_class, int frames,
                                        std::uint64_t seed,
                                        double frame_rate_hz) {
  check_value(per_class >= 1, "need at least one gait per class");
  std::vector<GaitSequence> out;
  out.reserve(static_cast<std::size_t>(per_class) * kNumEmotions);
  for (int c = 0; c < kNumEmotions; ++c) {
    Emotion label = emotion_from_index(c);
    const EmotionStyleParams& style = default_styles().at(label);
    for (int i = 0; i < per_class; ++i) {
      out.push_back(synth_walk(
          style, label, frames, seed,
          static_cast<std::uint64_t>(c) * static_cast<std::uint64_t>(per_class) +
              static_cast<std::uint64_t>(i),
          frame_rate_hz));
    }
  }
  return out;
}

}  // namespace step
