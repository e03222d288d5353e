#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace step {

// Deterministic random stream. Every consumer derives its own stream from
// (seed, purpose name, index), so adding a draw in one place never shifts
// the values seen anywhere else. The generator is splitmix64 and the
// gaussian is Box-Muller, both implemented here so results are identical
// across standard libraries and platforms.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n);

  // Standard normal.
  double gaussian();

  // Fisher-Yates, unbiased given uniform_int.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used to fold stream names into seeds and for nothing else.
std::uint64_t hash_name(std::string_view s);

}  // namespace step
