#include "step/common.hpp"

namespace step {

static const char* kEmotionNames[kNumEmotions] = {"angry", "neutral", "happy",
                                                  "sad"};

const char* emotion_name(Emotion e) {
  int i = static_cast<int>(e);
  check_value(i >= 0 && i < kNumEmotions, "emotion index out of range");
  return kEmotionNames[i];
}

Emotion emotion_from_name(const std::string& name) {
  for (int i = 0; i < kNumEmotions; ++i) {
    if (name == kEmotionNames[i]) return static_cast<Emotion>(i);
  }
  throw ValueError("unknown emotion label '" + name + "'");
}

Emotion emotion_from_index(int idx) {
  check_value(idx >= 0 && idx < kNumEmotions,
              "emotion index " + std::to_string(idx) + " out of range");
  return static_cast<Emotion>(idx);
}

}  // namespace step
