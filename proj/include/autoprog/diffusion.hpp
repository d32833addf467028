#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "autoprog/autodiff.hpp"
#include "autoprog/rng.hpp"
#include "autoprog/tensor.hpp"

namespace autoprog {

// Linear beta schedule over timesteps 1..K.
class NoiseSchedule {
 public:
  NoiseSchedule(std::size_t timesteps = 100, double beta_start = 1e-4, double beta_end = 0.02);

  std::size_t timesteps() const { return betas_.size(); }
  double beta(std::size_t k) const;
  double alpha_bar(std::size_t k) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

// sqrt(abar_k) x0 + sqrt(1 - abar_k) noise, with one timestep per row of x0.
Tensor diffuse_forward(const NoiseSchedule& schedule, const Tensor& x0, const std::vector<std::size_t>& timesteps,
                       const Tensor& noise);

struct DiffusionBatch {
  Tensor x_t;
  Tensor noise;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> timesteps;
};

// Draws uniform timesteps in 1..K and standard normal noise.
DiffusionBatch make_diffusion_batch(const NoiseSchedule& schedule, const Tensor& x0, std::vector<std::size_t> labels,
                                    Rng rng);

// Predicts noise from (x_t, labels, timesteps).
using NoisePredictor = std::function<ad::Var(ad::Tape&, const Tensor&, const std::vector<std::size_t>&,
                                             const std::vector<std::size_t>&)>;

// Mean over the batch of the squared noise-prediction error norm.
ad::Var denoise_loss(ad::Tape& tape, const NoisePredictor& predictor, const DiffusionBatch& batch);

}  // namespace autoprog
