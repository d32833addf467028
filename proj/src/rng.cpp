#include "autoprog/rng.hpp"

#include <cmath>
#include <numbers>

namespace autoprog {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed, std::string_view stream) : key_(splitmix64(splitmix64(seed) ^ fnv1a(stream))) {}

Rng Rng::derive(std::string_view name) const { return Rng(splitmix64(key_ ^ fnv1a(name)), 0, 0); }

Rng Rng::derive(std::uint64_t index) const {
  return Rng(splitmix64(key_ + 0xD1B54A32D192ED03ULL * (index + 1)), 0, 0);
}

std::uint64_t Rng::next_u64() { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // Box-Muller without caching the second value keeps draws per call fixed.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double std) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * std;
  }
}

std::size_t Rng::index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

Tensor normal_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

}  // namespace autoprog
