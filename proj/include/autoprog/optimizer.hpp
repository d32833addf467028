#pragma once

#include <cstddef>
#include <string>

#include "autoprog/autodiff.hpp"
#include "autoprog/vit.hpp"

namespace autoprog {

enum class OptimizerKind { AdamW, Sgd };
enum class LrSchedule { Constant, Cosine };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::AdamW;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  double weight_decay = 0.05;
  LrSchedule schedule = LrSchedule::Cosine;
  std::size_t warmup_steps = 0;
};

double learning_rate(const OptimizerConfig& config, std::size_t step, std::size_t total_steps);

// Weight decay applies to projection matrices only.
bool decays(const std::string& name, const Tensor& value);

// Updates every parameter present in `grads`; others keep values and slots.
void optimizer_step(VisionTransformer& model, const ad::GradientMap& grads, const OptimizerConfig& config, double lr);

}  // namespace autoprog
