#include "autoprog/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "autoprog/errors.hpp"

namespace autoprog {

NoiseSchedule::NoiseSchedule(std::size_t timesteps, double beta_start, double beta_end) {
  if (timesteps == 0) throw std::invalid_argument("noise schedule needs at least one timestep");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end) {
    throw std::invalid_argument("noise schedule needs 0 < beta_start <= beta_end < 1");
  }
  double abar = 1.0;
  for (std::size_t k = 0; k < timesteps; ++k) {
    const double t = timesteps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(timesteps - 1);
    const double b = beta_start + t * (beta_end - beta_start);
    betas_.push_back(b);
    abar *= 1.0 - b;
    alpha_bars_.push_back(abar);
  }
}

double NoiseSchedule::beta(std::size_t k) const {
  if (k < 1 || k > betas_.size()) throw std::out_of_range("timestep " + std::to_string(k) + " outside 1..K");
  return betas_[k - 1];
}

double NoiseSchedule::alpha_bar(std::size_t k) const {
  if (k < 1 || k > alpha_bars_.size()) throw std::out_of_range("timestep " + std::to_string(k) + " outside 1..K");
  return alpha_bars_[k - 1];
}

Tensor diffuse_forward(const NoiseSchedule& schedule, const Tensor& x0, const std::vector<std::size_t>& timesteps,
                       const Tensor& noise) {
  if (x0.shape() != noise.shape()) throw ShapeError("noise shape must match x0");
  if (x0.rank() == 0 || x0.dim(0) != timesteps.size()) throw ShapeError("one timestep per sample is required");
  Tensor out(x0.shape());
  const std::size_t row = x0.numel() / timesteps.size();
  for (std::size_t b = 0; b < timesteps.size(); ++b) {
    const double ab = schedule.alpha_bar(timesteps[b]);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    for (std::size_t i = b * row; i < (b + 1) * row; ++i) out[i] = sa * x0[i] + sn * noise[i];
  }
  return out;
}

DiffusionBatch make_diffusion_batch(const NoiseSchedule& schedule, const Tensor& x0, std::vector<std::size_t> labels,
                                    Rng rng) {
  DiffusionBatch batch;
  const std::size_t b = x0.dim(0);
  for (std::size_t i = 0; i < b; ++i) batch.timesteps.push_back(1 + rng.index(schedule.timesteps()));
  batch.noise = normal_tensor(x0.shape(), rng);
  batch.x_t = diffuse_forward(schedule, x0, batch.timesteps, batch.noise);
  batch.labels = std::move(labels);
  return batch;
}

ad::Var denoise_loss(ad::Tape& tape, const NoisePredictor& predictor, const DiffusionBatch& batch) {
  if (batch.timesteps.empty()) throw std::invalid_argument("empty diffusion batch");
  ad::Var pred = predictor(tape, batch.x_t, batch.labels, batch.timesteps);
  if (pred.shape() != batch.noise.shape()) throw ShapeError("noise prediction shape mismatch");
  ad::Var err = ad::sub(pred, tape.constant(batch.noise));
  return ad::scale(ad::sum(ad::square(err)), 1.0 / static_cast<double>(batch.timesteps.size()));
}

}  // namespace autoprog
