#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace autoprog {

struct LadderValue {
  double ratio = 1.0;
  std::size_t value = 1;
};

// A point in the growth space. For pre-training `second` is the depth l; for
// fine-tuning it is the number of learnable blocks counted from the output.
struct SubNetworkSpec {
  std::size_t n_index = 0;
  std::size_t second_index = 0;
  std::size_t n = 1;
  std::size_t second = 1;
  double n_ratio = 1.0;
  double second_ratio = 1.0;

  bool operator==(const SubNetworkSpec& o) const { return n == o.n && second == o.second; }
};

struct GrowthSpace {
  std::vector<double> ratios;
  std::vector<LadderValue> n_ladder;
  std::vector<LadderValue> second_ladder;
  std::size_t stages = 1;
  std::size_t steps_per_stage = 1;

  SubNetworkSpec spec(std::size_t n_index, std::size_t second_index) const;
  SubNetworkSpec full() const { return spec(n_ladder.size() - 1, second_ladder.size() - 1); }
  SubNetworkSpec smallest() const { return spec(0, 0); }
};

// Equispaced ratios from s1 to 1, rounded to two decimals.
std::vector<double> ratio_ladder(double s1, std::size_t count);
std::size_t round_half_up(double x);
// Resolves ratios against a full size and drops duplicate values, keeping the
// first ratio that produced each value.
std::vector<LadderValue> resolve_ladder(const std::vector<double>& ratios, std::size_t full);

struct SpaceOptions {
  double s1 = 0.5;
  std::size_t stages = 4;
  std::size_t total_steps = 4;
  // Ratio count; 0 uses the stage count.
  std::size_t ladder_steps = 0;
  bool search_n = true;
  bool search_second = true;
};

GrowthSpace build_growth_space(const SpaceOptions& opts, std::size_t full_n, std::size_t full_second);

// Candidate set of stage k (1-based). Stage 1 crosses the smallest, lower
// median and largest values of each dimension; later stages step one patch
// candidate and up to three depth candidates past the previous choice. The
// last stage is the full model.
std::vector<SubNetworkSpec> stage_candidates(const GrowthSpace& space, const SubNetworkSpec& prev, std::size_t k);

}  // namespace autoprog
