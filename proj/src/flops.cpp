#include "autoprog/flops.hpp"

namespace autoprog {

LearnablePredicate all_learnable() {
  return [](const std::string&) { return true; };
}

namespace {

// Walks the forward graph in order, tracking whether anything upstream of the
// current op needs a gradient.
struct Walker {
  FlopsBreakdown out;
  bool upstream = false;

  // x @ W with W learnable or not.
  void linear(double f, bool weight_learnable) {
    out.forward += f;
    if (upstream) out.backward_input += f;
    if (weight_learnable) out.backward_weight += f;
    upstream = upstream || weight_learnable;
  }
  // Product of two activations.
  void activation_product(double f) {
    out.forward += f;
    if (upstream) out.backward_input += 2.0 * f;
  }
  void touch(bool learnable) { upstream = upstream || learnable; }
};

}  // namespace

FlopsBreakdown flops_account(const ViTConfig& c, std::size_t batch, std::size_t grid, std::size_t depth,
                             const LearnablePredicate& learnable) {
  const double B = static_cast<double>(batch), N = static_cast<double>(grid * grid), d = static_cast<double>(c.embed_dim);
  const double pp = static_cast<double>(c.channels * c.patch_size * c.patch_size);
  const double h = static_cast<double>(c.mlp_ratio) * d;
  const double n_full = static_cast<double>(c.patch_grid * c.patch_grid);
  Walker w;

  // Patch embedding sees raw pixels, so it never needs an input gradient.
  w.linear(2.0 * B * N * pp * d, learnable("patch_embed.weight"));
  w.touch(learnable("patch_embed.bias"));
  if (grid != c.patch_grid) {
    const bool pe = learnable("pos_embed.grid");
    w.out.forward += 2.0 * N * n_full * d;
    if (pe) w.out.backward_weight += 2.0 * N * n_full * d;
  }
  w.touch(learnable("pos_embed.grid"));
  if (c.kind == ModelKind::Denoiser) {
    const bool t = learnable("time_embed.weight");
    w.out.forward += 2.0 * B * d * d;
    if (t) w.out.backward_weight += 2.0 * B * d * d;
    w.touch(t || learnable("time_embed.bias") || learnable("class_embed.table") ||
            (c.sid_stages > 0 && learnable("sid.table")));
  }

  for (std::size_t i = 0; i < depth; ++i) {
    const std::string b = block_prefix(i);
    w.touch(learnable(b + "norm1.weight") || learnable(b + "norm1.bias"));
    w.linear(2.0 * B * N * d * 3.0 * d, learnable(b + "attn.qkv.weight"));
    w.touch(learnable(b + "attn.qkv.bias"));
    w.activation_product(2.0 * B * N * N * d);  // q k^T
    w.activation_product(2.0 * B * N * N * d);  // attn v
    w.linear(2.0 * B * N * d * d, learnable(b + "attn.proj.weight"));
    w.touch(learnable(b + "attn.proj.bias") || (c.learnable_residual && learnable(b + "residual_scale")));
    w.touch(learnable(b + "norm2.weight") || learnable(b + "norm2.bias"));
    w.linear(2.0 * B * N * d * h, learnable(b + "mlp.fc1.weight"));
    w.touch(learnable(b + "mlp.fc1.bias"));
    w.linear(2.0 * B * N * h * d, learnable(b + "mlp.fc2.weight"));
    w.touch(learnable(b + "mlp.fc2.bias"));
  }
  w.touch(learnable("norm.weight") || learnable("norm.bias"));
  const double head = c.kind == ModelKind::Classifier ? 2.0 * B * d * static_cast<double>(c.num_classes)
                                                      : 2.0 * B * N * d * pp;
  w.linear(head, learnable("head.weight"));
  return w.out;
}

double forward_flops(const ViTConfig& config, std::size_t batch, std::size_t grid, std::size_t depth) {
  return flops_account(config, batch, grid, depth, [](const std::string&) { return false; }).forward;
}

}  // namespace autoprog
