#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace step {

#ifdef STEP_REAL32
using real = float;
#else
using real = double;
#endif

// Error hierarchy. The CLI maps these onto process exit codes
// (config -> 2, data -> 3, numeric -> 4), so throw the most
// specific one that applies.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied value: config keys, CLI arguments, out-of-range labels.
struct ValueError : Error {
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Malformed or inconsistent input files.
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Tensor shape mismatches; these indicate caller bugs rather than bad input.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

inline void check_value(bool ok, const std::string& msg) {
  if (!ok) throw ValueError(msg);
}
inline void check_data(bool ok, const std::string& msg) {
  if (!ok) throw DataError(msg);
}
inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// Emotion labels used across the toolkit. Order is part of the file
// formats (one-hot layout, confusion matrix rows), do not reorder.
enum class Emotion : int { Angry = 0, Neutral = 1, Happy = 2, Sad = 3 };

inline constexpr int kNumEmotions = 4;

const char* emotion_name(Emotion e);
Emotion emotion_from_name(const std::string& name);
Emotion emotion_from_index(int idx);

}  // namespace step
