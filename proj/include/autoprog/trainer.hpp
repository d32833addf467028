#pragma once

#include <cstddef>
#include <vector>

#include "autoprog/autodiff.hpp"
#include "autoprog/data.hpp"
#include "autoprog/diffusion.hpp"
#include "autoprog/optimizer.hpp"
#include "autoprog/rng.hpp"
#include "autoprog/vit.hpp"

namespace autoprog {

// What a model is trained on: class labels or noise prediction.
struct Task {
  ModelKind kind = ModelKind::Classifier;
  const Dataset* data = nullptr;
  NoiseSchedule schedule;
};

// Training images of the given rows, resized to `grid` patches per side.
Tensor batch_images(const Tensor& source, const std::vector<std::size_t>& rows, std::size_t grid, std::size_t patch_size);

// Mean loss of one batch. Diffusion noise and timesteps come from `rng`;
// `noise_aug` adds Gaussian pixel noise of that scale to classifier inputs.
ad::Var task_loss(ad::Tape& tape, const VisionTransformer& model, const Task& task, const Tensor& images,
                  const std::vector<std::size_t>& labels, const ForwardOptions& opts, Rng rng, double noise_aug = 0.0);

struct StepInput {
  std::vector<std::size_t> rows;
  std::size_t grid = 0;
  ForwardOptions opts;
  Rng rng{0, "step"};
  double noise_aug = 0.0;
};

// Forward, backward and one optimizer update on the training split. Returns
// the batch loss.
double train_step(VisionTransformer& model, const Task& task, const StepInput& input, const OptimizerConfig& opt,
                  double lr);

// Mean loss over (x, y) at `grid`, without updates. The grid overrides
// opts.grid here and in the other entry points. Chunk c draws its
// diffusion noise from rng.derive(c).
double evaluate(const VisionTransformer& model, const Task& task, const Tensor& x, const std::vector<std::size_t>& y,
                std::size_t grid, ForwardOptions opts, Rng rng, std::size_t chunk = 128);

// Gradient of each sample's own loss w.r.t. the model's learnable parameters.
// Sample b draws its diffusion noise from rng.derive(b).
std::vector<ad::GradientMap> per_sample_task_gradients(const VisionTransformer& model, const Task& task,
                                                       const std::vector<std::size_t>& rows, std::size_t grid,
                                                       ForwardOptions opts, Rng rng);

}  // namespace autoprog
