#include "autoprog/trainer.hpp"

#include <algorithm>
#include <stdexcept>

#include "autoprog/errors.hpp"

namespace autoprog {

Tensor batch_images(const Tensor& source, const std::vector<std::size_t>& rows, std::size_t grid, std::size_t patch_size) {
  Tensor images = gather_rows(source, rows);
  if (images.dim(2) == grid * patch_size) return images;
  return resize_input(images, grid, patch_size);
}

ad::Var task_loss(ad::Tape& tape, const VisionTransformer& model, const Task& task, const Tensor& images,
                  const std::vector<std::size_t>& labels, const ForwardOptions& opts, Rng rng, double noise_aug) {
  if (task.kind != model.config().kind) throw std::invalid_argument("model kind does not match the task");
  if (task.kind == ModelKind::Classifier) {
    if (noise_aug > 0.0) {
      Tensor noisy = normal_tensor(images.shape(), rng);
      for (std::size_t i = 0; i < noisy.numel(); ++i) noisy[i] = images[i] + noise_aug * noisy[i];
      return ad::cross_entropy(model.forward_classify(tape, noisy, opts), labels);
    }
    return ad::cross_entropy(model.forward_classify(tape, images, opts), labels);
  }
  const DiffusionBatch batch = make_diffusion_batch(task.schedule, images, labels, rng);
  return denoise_loss(
      tape,
      [&](ad::Tape& t, const Tensor& x, const std::vector<std::size_t>& y, const std::vector<std::size_t>& k) {
        return model.forward_denoise(t, x, y, k, opts);
      },
      batch);
}

double train_step(VisionTransformer& model, const Task& task, const StepInput& in, const OptimizerConfig& opt, double lr) {
  const Tensor images = batch_images(task.data->train_x, in.rows, in.grid, model.config().patch_size);
  const auto labels = gather_labels(task.data->train_y, in.rows);
  ForwardOptions opts = in.opts;
  opts.grid = in.grid;
  ad::Tape tape;
  ad::Var loss = task_loss(tape, model, task, images, labels, opts, in.rng, in.noise_aug);
  const double value = loss.value().item();
  const auto grads = tape.backward(loss);
  optimizer_step(model, grads, opt, lr);
  return value;
}

double evaluate(const VisionTransformer& model, const Task& task, const Tensor& x, const std::vector<std::size_t>& y,
                std::size_t grid, ForwardOptions opts, Rng rng, std::size_t chunk) {
  opts.grid = grid;
  const std::size_t n = x.dim(0);
  if (n == 0 || y.size() != n) throw std::invalid_argument("empty or mismatched evaluation set");
  double total = 0.0;
  for (std::size_t start = 0, c = 0; start < n; start += chunk, ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) rows.push_back(i);
    const Tensor images = batch_images(x, rows, grid, model.config().patch_size);
    ad::Tape tape;
    total += task_loss(tape, model, task, images, gather_labels(y, rows), opts, rng.derive(c)).value().item() *
             static_cast<double>(rows.size());
  }
  return total / static_cast<double>(n);
}

std::vector<ad::GradientMap> per_sample_task_gradients(const VisionTransformer& model, const Task& task,
                                                       const std::vector<std::size_t>& rows, std::size_t grid,
                                                       ForwardOptions opts, Rng rng) {
  opts.grid = grid;
  const Tensor images = batch_images(task.data->train_x, rows, grid, model.config().patch_size);
  const auto labels = gather_labels(task.data->train_y, rows);
  return ad::per_sample_gradients(rows.size(), [&](ad::Tape& tape, std::size_t b) {
    const Tensor one = gather_rows(images, {b});
    return task_loss(tape, model, task, one, {labels[b]}, opts, rng.derive(b));
  });
}

}  // namespace autoprog
