#include "autoprog/space.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace autoprog {

std::vector<double> ratio_ladder(double s1, std::size_t count) {
  if (!(s1 > 0.0 && s1 <= 1.0)) throw std::invalid_argument("s1 must lie in (0, 1]");
  if (count == 0) throw std::invalid_argument("ladder needs at least one ratio");
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double r = count == 1 ? 1.0 : s1 + (1.0 - s1) * static_cast<double>(i) / static_cast<double>(count - 1);
    const double rounded = std::round(r * 100.0) / 100.0;
    if (out.empty() || rounded > out.back()) out.push_back(rounded);
  }
  out.back() = 1.0;
  return out;
}

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

std::vector<LadderValue> resolve_ladder(const std::vector<double>& ratios, std::size_t full) {
  std::vector<LadderValue> out;
  for (double r : ratios) {
    const std::size_t v = std::max<std::size_t>(1, round_half_up(r * static_cast<double>(full)));
    if (out.empty() || v > out.back().value) out.push_back({r, v});
  }
  return out;
}

SubNetworkSpec GrowthSpace::spec(std::size_t n_index, std::size_t second_index) const {
  SubNetworkSpec s;
  s.n_index = n_index;
  s.second_index = second_index;
  s.n = n_ladder.at(n_index).value;
  s.n_ratio = n_ladder.at(n_index).ratio;
  s.second = second_ladder.at(second_index).value;
  s.second_ratio = second_ladder.at(second_index).ratio;
  return s;
}

GrowthSpace build_growth_space(const SpaceOptions& opts, std::size_t full_n, std::size_t full_second) {
  if (opts.stages == 0) throw std::invalid_argument("stages must be >= 1");
  if (opts.total_steps % opts.stages != 0) throw std::invalid_argument("total steps must divide into stages");
  GrowthSpace space;
  space.ratios = ratio_ladder(opts.s1, opts.ladder_steps ? opts.ladder_steps : opts.stages);
  space.n_ladder = resolve_ladder(opts.search_n ? space.ratios : std::vector<double>{1.0}, full_n);
  space.second_ladder = resolve_ladder(opts.search_second ? space.ratios : std::vector<double>{1.0}, full_second);
  space.stages = opts.stages;
  space.steps_per_stage = opts.total_steps / opts.stages;
  return space;
}

std::vector<SubNetworkSpec> stage_candidates(const GrowthSpace& space, const SubNetworkSpec& prev, std::size_t k) {
  if (k == 0) throw std::invalid_argument("stages are 1-based");
  const std::size_t mn = space.n_ladder.size(), ms = space.second_ladder.size();
  if (k >= space.stages) return {space.full()};
  std::vector<std::size_t> ni, si;
  auto push_unique = [](std::vector<std::size_t>& v, std::size_t x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  if (k == 1) {
    for (std::size_t x : {std::size_t{0}, (mn - 1) / 2, mn - 1}) push_unique(ni, x);
    for (std::size_t x : {std::size_t{0}, (ms - 1) / 2, ms - 1}) push_unique(si, x);
  } else {
    if (prev.n_index >= mn || prev.second_index >= ms || space.n_ladder[prev.n_index].value != prev.n ||
        space.second_ladder[prev.second_index].value != prev.second) {
      throw std::invalid_argument("previous spec is not on the ladder");
    }
    for (std::size_t d = 0; d < 2; ++d) push_unique(ni, std::min(prev.n_index + d, mn - 1));
    for (std::size_t d = 0; d < 4; ++d) push_unique(si, std::min(prev.second_index + d, ms - 1));
  }
  std::vector<SubNetworkSpec> out;
  for (std::size_t a : ni)
    for (std::size_t b : si) out.push_back(space.spec(a, b));
  return out;
}

}  // namespace autoprog
