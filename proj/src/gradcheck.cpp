#include "autoprog/gradcheck.hpp"

#include <algorithm>

#include "autoprog/autodiff.hpp"
#include "autoprog/rng.hpp"
#include "autoprog/vit.hpp"

namespace autoprog {

namespace {

using LossFn = std::function<ad::Var(ad::Tape&, const VisionTransformer&)>;

GradcheckResult check_model(const std::string& label, VisionTransformer model, const LossFn& loss_of,
                            std::size_t coordinates, Rng rng, double eps) {
  model.unfreeze_all();
  ad::Tape tape;
  const auto grads = tape.backward(loss_of(tape, model));

  ad::TensorMap values;
  for (const auto& [name, p] : model.params()) {
    if (p.value.requires_grad()) values.emplace(name, p.value);
  }
  std::vector<ad::Coordinate> coords;
  std::vector<std::string> names;
  for (const auto& [name, t] : values) names.push_back(name);
  // One coordinate per tensor first, then uniform draws.
  for (const auto& name : names) coords.push_back({name, rng.index(values.at(name).numel())});
  while (coords.size() < coordinates) {
    const auto& name = names[rng.index(names.size())];
    coords.push_back({name, rng.index(values.at(name).numel())});
  }
  const auto f = [&](const ad::TensorMap& at) {
    VisionTransformer m = model;
    for (const auto& [name, t] : at) m.param(name).value = t;
    ad::Tape t;
    return loss_of(t, m).value().item();
  };
  const auto numeric = ad::finite_difference_at(f, values, coords, eps);
  GradcheckResult r;
  r.model = label;
  r.coordinates = coords.size();
  for (std::size_t i = 0; i < coords.size(); ++i) {
    // Parameters the forward never touched have zero gradient.
    const auto it = grads.find(coords[i].name);
    const double analytic = it == grads.end() ? 0.0 : it->second[coords[i].index];
    r.max_relative_error = std::max(r.max_relative_error, ad::relative_error(analytic, numeric[i]));
  }
  return r;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(std::size_t models, std::size_t coordinates, std::uint64_t seed, double eps) {
  std::vector<GradcheckResult> out;
  Rng root(seed, "gradcheck");
  for (std::size_t i = 0; i < models; ++i) {
    Rng r = root.derive(i);
    ViTConfig c;
    c.depth = 1 + r.index(3);
    c.patch_grid = 2 + r.index(2);
    c.patch_size = 2;
    c.embed_dim = 8;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.num_classes = 3;
    c.learnable_residual = true;
    VisionTransformer model = build_vit(c, r.next_u64());
    // Nonzero biases and residual scales so every path carries gradient.
    for (auto& [name, p] : model.params()) {
      Rng pr = r.derive(name);
      for (auto& v : p.value.storage()) v += 0.1 * pr.normal();
    }
    const std::size_t batch = 3;
    const Tensor x = normal_tensor({batch, 1, c.image_side(), c.image_side()}, r);
    std::vector<std::size_t> y;
    for (std::size_t b = 0; b < batch; ++b) y.push_back(r.index(c.num_classes));
    // Odd models run a subset of blocks at a smaller grid, as a supernet does.
    ForwardOptions opts;
    if (i % 2 == 1 && c.depth > 1) opts.active_blocks = std::vector<std::size_t>{0, c.depth - 1};
    Tensor input = x;
    if (i % 2 == 1 && c.patch_grid > 2) {
      opts.grid = c.patch_grid - 1;
      input = resize_input(x, opts.grid, c.patch_size);
    }
    out.push_back(check_model(
        "classifier-" + std::to_string(i), model,
        [&](ad::Tape& t, const VisionTransformer& m) { return ad::cross_entropy(m.forward_classify(t, input, opts), y); },
        coordinates, r.derive("coords"), eps));
  }

  Rng r = root.derive("denoiser");
  ViTConfig c;
  c.kind = ModelKind::Denoiser;
  c.depth = 2;
  c.patch_grid = 2;
  c.patch_size = 2;
  c.embed_dim = 8;
  c.heads = 2;
  c.num_classes = 3;
  c.timesteps = 100;
  c.sid_stages = 2;
  c.learnable_residual = true;
  VisionTransformer model = build_vit(c, r.next_u64());
  for (auto& [name, p] : model.params()) {
    Rng pr = r.derive(name);
    for (auto& v : p.value.storage()) v += 0.1 * pr.normal();
  }
  const std::size_t batch = 3;
  const Tensor x = normal_tensor({batch, 1, c.image_side(), c.image_side()}, r);
  const Tensor target = normal_tensor(x.shape(), r);
  const std::vector<std::size_t> y = {0, 2, 1}, k = {1, 50, 100};
  ForwardOptions opts;
  opts.sid_stage = 1;
  out.push_back(check_model(
      "denoiser", model,
      [&](ad::Tape& t, const VisionTransformer& m) {
        return ad::mean(ad::square(ad::sub(m.forward_denoise(t, x, y, k, opts), t.constant(target))));
      },
      coordinates, r.derive("coords"), eps));
  return out;
}

}  // namespace autoprog
