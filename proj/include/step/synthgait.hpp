#pragma once

#include <map>
#include <vector>

#include "step/skeleton.hpp"

namespace step {

// Parametric walk styles. The four defaults are caricatures tuned so the
// classes separate cleanly in affective-feature space at desk scale; they
// stand in for recorded data and make no claim of psychological fidelity.
struct EmotionStyleParams {
  double stride = 0.9;       // peak anteroposterior foot separation, metres
  double cadence_hz = 1.8;   // full gait cycles per second
  double arm_swing = 0.5;    // shoulder swing amplitude, radians
  double lean = 0.0;         // forward torso inclination, radians
  double head_drop = 0.0;    // metres the head sinks below its rest height
  double speed = 1.1;        // forward root translation, metres per second
  double noise_sigma = 0.01; // i.i.d. positional jitter, metres

  void validate() const;  // cadence > 0, stride/sigma >= 0, finite fields
};

// angry: fast, long, strong swing, slight forward press
// neutral: moderate everything, upright
// happy: brisk and springy, slightly reclined, lifted head
// sad: slow, short, limp arms, collapsed torso, dropped head
const std::map<Emotion, EmotionStyleParams>& default_styles();

// One sinusoidal walk on the canonical 16-joint skeleton: legs and arms
// swing at the cadence with contralateral coordination (left foot in phase
// with the right hand), the torso leans and the head drops per the style,
// and the whole body translates forward at the style's speed. A random
// phase offset plus the jitter come from RngStream(seed, "synth", index),
// so a (seed, index) pair fully determines the gait.
GaitSequence synth_walk(const EmotionStyleParams& style, Emotion label,
                        int frames, std::uint64_t seed,
                        std::uint64_t index = 0, double frame_rate_hz = 25.0);

// per_class walks for each of the four default styles, labeled, with
// per-gait indices class * per_class + i.
std::vector<GaitSequence> synth_dataset(int per_class, int frames,
                                        std::uint64_t seed,
                                        double frame_rate_hz = 25.0);

}  // namespace step
