#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace autoprog {

struct GradcheckResult {
  std::string model;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
};

// Reverse-mode gradients of random tiny classifiers and one conditioned
// denoiser against central differences at randomly chosen coordinates.
std::vector<GradcheckResult> run_gradcheck(std::size_t models, std::size_t coordinates, std::uint64_t seed,
                                           double eps = 1e-5);

}  // namespace autoprog
