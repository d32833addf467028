#include "autoprog/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "autoprog/errors.hpp"

namespace autoprog {

double learning_rate(const OptimizerConfig& c, std::size_t step, std::size_t total_steps) {
  if (c.warmup_steps > 0 && step < c.warmup_steps) {
    return c.lr * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  if (c.schedule == LrSchedule::Constant || total_steps <= c.warmup_steps) return c.lr;
  const double t = static_cast<double>(step - c.warmup_steps) / static_cast<double>(total_steps - c.warmup_steps);
  return 0.5 * c.lr * (1.0 + std::cos(std::numbers::pi * t));
}

bool decays(const std::string& name, const Tensor& value) { return value.rank() == 2 && name.ends_with(".weight"); }

void optimizer_step(VisionTransformer& model, const ad::GradientMap& grads, const OptimizerConfig& c, double lr) {
  for (const auto& [name, g] : grads) {
    Parameter& p = model.param(name);
    if (g.shape() != p.value.shape() || p.m.shape() != p.value.shape() || p.v.shape() != p.value.shape()) {
      throw ShapeError("optimizer state shape drift at " + name);
    }
    const double wd = decays(name, p.value) ? c.weight_decay : 0.0;
    const std::size_t n = p.value.numel();
    ++p.steps;
    if (c.kind == OptimizerKind::AdamW) {
      const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(p.steps));
      const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(p.steps));
      for (std::size_t i = 0; i < n; ++i) {
        p.m[i] = c.beta1 * p.m[i] + (1.0 - c.beta1) * g[i];
        p.v[i] = c.beta2 * p.v[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double update = (p.m[i] / bc1) / (std::sqrt(p.v[i] / bc2) + c.eps);
        p.value[i] -= lr * (update + wd * p.value[i]);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i] + wd * p.value[i];
        p.m[i] = c.momentum * p.m[i] + gi;
        p.value[i] -= lr * p.m[i];
      }
    }
  }
}

}  // namespace autoprog
