#include "step/rng.hpp"

#include <cmath>

#include "step/common.hpp"

namespace step {

std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string_view name,
                     std::uint64_t index) {
  // Mix the three components through one splitmix pass each so that
  // neighbouring (seed, index) pairs land far apart in state space.
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= hash_name(name);
  std::uint64_t b = splitmix64(s);
  s ^= index * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull;
  std::uint64_t c = splitmix64(s);
  state_ = a ^ (b << 1 | b >> 63) ^ (c << 2 | c >> 62);
}

std::uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::uniform() {
  // 53 mantissa bits, value in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  check_value(lo <= hi, "uniform: lo > hi");
  return lo + (hi - lo) * uniform();
}

int RngStream::uniform_int(int n) {
  check_value(n > 0, "uniform_int: n must be positive");
  // Rejection sampling to kill modulo bias.
  std::uint64_t un = static_cast<std::uint64_t>(n);
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

double RngStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller. u1 is pulled away from zero so log stays finite.
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace step
