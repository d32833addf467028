#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "autoprog/vit.hpp"

namespace autoprog {

// Matmul flops of one training step, split by pass. A multiply-add counts as
// two flops; elementwise work is not counted.
struct FlopsBreakdown {
  double forward = 0.0;
  double backward_input = 0.0;
  double backward_weight = 0.0;

  double backward() const { return backward_input + backward_weight; }
  double train() const { return forward + backward(); }
};

// `learnable` is queried with parameter names whose block indices are
// positions among the active blocks (0 = input side).
using LearnablePredicate = std::function<bool(const std::string&)>;

LearnablePredicate all_learnable();

// Step flops for a model run at patch grid `grid` with `depth` active blocks.
FlopsBreakdown flops_account(const ViTConfig& config, std::size_t batch, std::size_t grid, std::size_t depth,
                             const LearnablePredicate& learnable);

double forward_flops(const ViTConfig& config, std::size_t batch, std::size_t grid, std::size_t depth);

}  // namespace autoprog
