#include "parity/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace parity {

std::uint64_t mix_keys(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x2545f4914f6cdd1dull;
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x9e3779b97f4a7c15ull));
  return h;
}

std::uint64_t RngStream::next_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("next_index: n must be positive");
  while (true) {
    const std::uint64_t x = next_u64();
    const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    const std::uint64_t lo = static_cast<std::uint64_t>(m);
    if (lo >= n || lo >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
  }
}

double RngStream::normal(double stddev) {
  if (have_spare_) {
    have_spare_ = false;
    return spare_ * stddev;
  }
  // Box-Muller; u clamped away from 0 so log stays finite.
  double u = next_double();
  if (u < 0x1.0p-60) u = 0x1.0p-60;
  const double v = next_double();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * std::numbers::pi * v;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta) * stddev;
}

}  // namespace parity
