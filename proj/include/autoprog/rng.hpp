#pragma once

#include <cstdint>
#include <string_view>

#include "autoprog/tensor.hpp"

namespace autoprog {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

// Counter-based stream. Every stream is keyed by (root seed, name path), so
// deriving a new stream never shifts draws in an unrelated one.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream);

  Rng derive(std::string_view name) const;
  Rng derive(std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double normal();
  // Normal with standard deviation `std`, resampled outside +-2 std.
  double truncated_normal(double std);
  std::size_t index(std::size_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

Tensor normal_tensor(Shape shape, Rng& rng);

}  // namespace autoprog
