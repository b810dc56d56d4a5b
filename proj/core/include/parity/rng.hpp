// Counter-based random streams: draw t of stream (seed, id) depends only on
// (seed, id, t), so streams are splittable and identical on every platform.
#pragma once

#include <cstdint>
#include <initializer_list>

namespace parity {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Hash a key list into one 64-bit value; used to derive stream ids for
// sub-experiments (sweep cells, epochs, workers) order-independently.
std::uint64_t mix_keys(std::initializer_list<std::uint64_t> keys);

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed),
        stream_(stream_id),
        base_(splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ull * stream_id + 0x7f4a7c15ull))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  // A fresh stream keyed off this one; does not consume draws.
  RngStream derive(std::uint64_t key) const { return {seed_, mix_keys({stream_, key})}; }

  std::uint64_t next_u64() { return splitmix64(base_ + 0xd1342543de82ef95ull * counter_++); }

  double next_double() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  int next_bit() { return static_cast<int>(next_u64() >> 63); }

  // Unbiased uniform draw from [0, n) (Lemire rejection).
  std::uint64_t next_index(std::uint64_t n);

  double rademacher(double c) { return next_bit() ? c : -c; }

  double normal(double stddev = 1.0);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace parity
