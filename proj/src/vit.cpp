#include "autoprog/vit.hpp"

#include <Eigen/Core>
#include <cmath>

#include "autoprog/errors.hpp"

namespace autoprog {

using namespace ad;

void ViTConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid model config: " + what);
  };
  need(depth >= 1, "depth must be >= 1");
  need(patch_grid >= 1, "patch_grid must be >= 1");
  need(embed_dim >= 1 && heads >= 1, "embed_dim and heads must be >= 1");
  need(embed_dim % heads == 0, "embed_dim must be divisible by heads");
  need(patch_size >= 1 && channels >= 1 && mlp_ratio >= 1, "patch_size, channels and mlp_ratio must be >= 1");
  need(num_classes >= 1, "num_classes must be >= 1");
  if (kind == ModelKind::Denoiser) {
    need(timesteps >= 1, "timesteps must be >= 1");
    need(embed_dim % 2 == 0, "denoiser embed_dim must be even");
  }
}

std::string layer_of(const std::string& name) {
  const auto pos = name.rfind('.');
  return pos == std::string::npos ? name : name.substr(0, pos);
}

std::optional<std::size_t> block_of(const std::string& name) {
  if (name.rfind("blocks.", 0) != 0) return std::nullopt;
  const auto end = name.find('.', 7);
  return static_cast<std::size_t>(std::stoul(name.substr(7, end - 7)));
}

std::string block_prefix(std::size_t index) { return "blocks." + std::to_string(index) + "."; }

std::vector<std::pair<std::string, Shape>> block_parameter_shapes(const ViTConfig& c, std::size_t index) {
  const std::string b = block_prefix(index);
  const std::size_t d = c.embed_dim, h = c.mlp_ratio * c.embed_dim;
  return {
      {b + "norm1.weight", {d}},     {b + "norm1.bias", {d}},     {b + "attn.qkv.weight", {d, 3 * d}},
      {b + "attn.qkv.bias", {3 * d}}, {b + "attn.proj.weight", {d, d}}, {b + "attn.proj.bias", {d}},
      {b + "norm2.weight", {d}},     {b + "norm2.bias", {d}},     {b + "mlp.fc1.weight", {d, h}},
      {b + "mlp.fc1.bias", {h}},     {b + "mlp.fc2.weight", {h, d}}, {b + "mlp.fc2.bias", {d}},
      {b + "residual_scale", {1}},
  };
}

namespace {

std::vector<std::pair<std::string, Shape>> all_shapes(const ViTConfig& c) {
  const std::size_t d = c.embed_dim, n = c.patch_grid, pp = c.channels * c.patch_size * c.patch_size;
  std::vector<std::pair<std::string, Shape>> out{
      {"patch_embed.weight", {pp, d}},
      {"patch_embed.bias", {d}},
      {"pos_embed.grid", {n, n, d}},
  };
  for (std::size_t i = 0; i < c.depth; ++i) {
    auto b = block_parameter_shapes(c, i);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.push_back({"norm.weight", {d}});
  out.push_back({"norm.bias", {d}});
  const std::size_t out_dim = c.kind == ModelKind::Classifier ? c.num_classes : pp;
  out.push_back({"head.weight", {d, out_dim}});
  out.push_back({"head.bias", {out_dim}});
  if (c.kind == ModelKind::Denoiser) {
    out.push_back({"class_embed.table", {c.num_classes, d}});
    out.push_back({"time_embed.weight", {d, d}});
    out.push_back({"time_embed.bias", {d}});
    if (c.sid_stages > 0) out.push_back({"sid.table", {c.sid_stages, d}});
  }
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Tensor init_parameter(const std::string& name, const Shape& shape, Rng& rng) {
  Tensor t(shape, 0.0);
  if (ends_with(name, "residual_scale")) {
    t.fill(1.0);
  } else if (name == "sid.table" || ends_with(name, ".bias")) {
    // zeros
  } else if (ends_with(name, ".weight") && shape.size() == 1) {
    t.fill(1.0);  // layer-norm gain
  } else {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.truncated_normal(0.02);
  }
  return t;
}

VisionTransformer::VisionTransformer(ViTConfig config) : config_(config) { config_.validate(); }

VisionTransformer build_vit(const ViTConfig& config, std::uint64_t seed) {
  VisionTransformer model(config);
  Rng root(seed, "init");
  for (const auto& [name, shape] : all_shapes(config)) {
    Rng rng = root.derive(name);
    Parameter p;
    p.value = init_parameter(name, shape, rng);
    model.params().emplace(name, std::move(p));
  }
  model.unfreeze_all();
  model.reset_optimizer_state();
  return model;
}

Parameter& VisionTransformer::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

const Parameter& VisionTransformer::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

std::size_t VisionTransformer::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.numel();
  return n;
}

std::size_t VisionTransformer::learnable_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) {
    if (p.value.requires_grad()) n += p.value.numel();
  }
  return n;
}

void VisionTransformer::set_learnable(const std::function<bool(const std::string&)>& learnable) {
  for (auto& [name, p] : params_) {
    bool on = learnable(name);
    if (ends_with(name, "residual_scale") && !config_.learnable_residual) on = false;
    p.value.set_requires_grad(on);
  }
}

void VisionTransformer::freeze_all() {
  set_learnable([](const std::string&) { return false; });
}

void VisionTransformer::unfreeze_all() {
  set_learnable([](const std::string&) { return true; });
}

void VisionTransformer::reset_optimizer_state() {
  for (auto& [_, p] : params_) {
    p.m = Tensor(p.value.shape(), 0.0);
    p.v = Tensor(p.value.shape(), 0.0);
    p.steps = 0;
  }
}

Var VisionTransformer::p(Tape& tape, const std::string& name) const { return tape.parameter(name, param(name).value); }

Var VisionTransformer::tokens(Tape& tape, const Tensor& images, std::size_t grid) const {
  const std::size_t C = config_.channels, P = config_.patch_size, side = grid * P;
  if (images.rank() != 4 || images.dim(1) != C || images.dim(2) != side || images.dim(3) != side) {
    throw ShapeError("expected images [B," + std::to_string(C) + "," + std::to_string(side) + "," +
                     std::to_string(side) + "], got " + shape_to_string(images.shape()));
  }
  const std::size_t B = images.dim(0), d = config_.embed_dim, n = config_.patch_grid;
  Var x = tape.constant(images.reshaped({B, C, grid, P, grid, P}));
  x = reshape(permute(x, {0, 2, 4, 1, 3, 5}), {B, grid * grid, C * P * P});
  x = add(matmul(x, p(tape, "patch_embed.weight")), p(tape, "patch_embed.bias"));
  Var pe = reshape(p(tape, "pos_embed.grid"), {n * n, d});
  if (grid != n) pe = matmul(tape.constant(grid_interpolation_matrix(n, grid)), pe);
  return add(x, pe);
}

Var VisionTransformer::block(Tape& tape, Var x, std::size_t index, const ForwardOptions& opts) const {
  const std::string b = block_prefix(index);
  const Shape xs = x.shape();
  const std::size_t B = xs[0], N = xs[1], d = config_.embed_dim, H = config_.heads, dh = d / H;
  Var gamma = p(tape, b + "residual_scale");

  auto drop = [&](Var branch) {
    if (opts.drop_path <= 0.0 || opts.drop_rng == nullptr) return branch;
    std::vector<double> keep(B);
    for (auto& k : keep) k = opts.drop_rng->uniform() < opts.drop_path ? 0.0 : 1.0 / (1.0 - opts.drop_path);
    return scale_rows(branch, keep);
  };

  Var h = add(mul(layer_norm(x), p(tape, b + "norm1.weight")), p(tape, b + "norm1.bias"));
  Var qkv = add(matmul(h, p(tape, b + "attn.qkv.weight")), p(tape, b + "attn.qkv.bias"));
  qkv = permute(reshape(qkv, {B, N, 3, H, dh}), {2, 0, 3, 1, 4});
  Var q = reshape(narrow(qkv, 0, 0, 1), {B, H, N, dh});
  Var k = reshape(narrow(qkv, 0, 1, 1), {B, H, N, dh});
  Var v = reshape(narrow(qkv, 0, 2, 1), {B, H, N, dh});
  Var att = softmax(scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh))));
  Var o = reshape(permute(bmm(att, v), {0, 2, 1, 3}), {B, N, d});
  o = add(matmul(o, p(tape, b + "attn.proj.weight")), p(tape, b + "attn.proj.bias"));
  x = add(x, mul(drop(o), gamma));

  h = add(mul(layer_norm(x), p(tape, b + "norm2.weight")), p(tape, b + "norm2.bias"));
  h = gelu(add(matmul(h, p(tape, b + "mlp.fc1.weight")), p(tape, b + "mlp.fc1.bias")));
  h = add(matmul(h, p(tape, b + "mlp.fc2.weight")), p(tape, b + "mlp.fc2.bias"));
  return add(x, mul(drop(h), gamma));
}

Var VisionTransformer::run_blocks(Tape& tape, Var x, const ForwardOptions& opts) const {
  if (opts.active_blocks) {
    for (std::size_t i : *opts.active_blocks) {
      if (i >= config_.depth) throw ShapeError("active block index out of range");
      x = block(tape, x, i, opts);
    }
  } else {
    for (std::size_t i = 0; i < config_.depth; ++i) x = block(tape, x, i, opts);
  }
  return add(mul(layer_norm(x), p(tape, "norm.weight")), p(tape, "norm.bias"));
}

Var VisionTransformer::forward_classify(Tape& tape, const Tensor& images, const ForwardOptions& opts) const {
  if (config_.kind != ModelKind::Classifier) throw std::logic_error("forward_classify on a denoiser");
  const std::size_t grid = opts.grid ? opts.grid : config_.patch_grid;
  Var x = run_blocks(tape, tokens(tape, images, grid), opts);
  return add(matmul(mean_axis(x, 1), p(tape, "head.weight")), p(tape, "head.bias"));
}

Var VisionTransformer::forward_denoise(Tape& tape, const Tensor& x_t, const std::vector<std::size_t>& labels,
                                       const std::vector<std::size_t>& timesteps, const ForwardOptions& opts) const {
  if (config_.kind != ModelKind::Denoiser) throw std::logic_error("forward_denoise on a classifier");
  const std::size_t grid = opts.grid ? opts.grid : config_.patch_grid;
  const std::size_t B = x_t.rank() ? x_t.dim(0) : 0, d = config_.embed_dim;
  if (labels.size() != B || timesteps.size() != B) throw ShapeError("forward_denoise: condition length mismatch");
  Var x = tokens(tape, x_t, grid);
  Var cond = embedding(p(tape, "class_embed.table"), labels);
  Var temb = add(matmul(tape.constant(timestep_features(timesteps, d)), p(tape, "time_embed.weight")),
                 p(tape, "time_embed.bias"));
  cond = add(cond, temb);
  if (config_.sid_stages > 0) {
    if (opts.sid_stage >= config_.sid_stages) throw std::out_of_range("no SID entry for stage " + std::to_string(opts.sid_stage));
    cond = add(cond, embedding(p(tape, "sid.table"), std::vector<std::size_t>(B, opts.sid_stage)));
  }
  x = run_blocks(tape, add_per_sample(x, cond), opts);
  const std::size_t C = config_.channels, P = config_.patch_size;
  Var out = add(matmul(x, p(tape, "head.weight")), p(tape, "head.bias"));
  out = permute(reshape(out, {B, grid, grid, C, P, P}), {0, 3, 1, 4, 2, 5});
  return reshape(out, {B, C, grid * P, grid * P});
}

Tensor VisionTransformer::logits(const Tensor& images, const ForwardOptions& opts) const {
  Tape tape;
  return forward_classify(tape, images, opts).value();
}

Tensor align_corners_matrix(std::size_t source, std::size_t target) {
  if (source == 0 || target == 0) throw ShapeError("interpolation sizes must be positive");
  Tensor m({target, source}, 0.0);
  for (std::size_t i = 0; i < target; ++i) {
    const double pos = (target == 1 || source == 1)
                           ? 0.0
                           : static_cast<double>(i) * static_cast<double>(source - 1) / static_cast<double>(target - 1);
    const std::size_t lo = std::min(static_cast<std::size_t>(std::floor(pos)), source - 1);
    const std::size_t hi = std::min(lo + 1, source - 1);
    const double frac = pos - static_cast<double>(lo);
    m[i * source + lo] += 1.0 - frac;
    if (frac > 0.0) m[i * source + hi] += frac;
  }
  return m;
}

Tensor grid_interpolation_matrix(std::size_t source, std::size_t target) {
  Tensor a = align_corners_matrix(source, target);
  const std::size_t S = source, T = target;
  Tensor m({T * T, S * S}, 0.0);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      for (std::size_t u = 0; u < S; ++u)
        for (std::size_t v = 0; v < S; ++v) m[(i * T + j) * S * S + u * S + v] = a[i * S + u] * a[j * S + v];
  return m;
}

Tensor interpolate_pos_encoding(const Tensor& pe, std::size_t n_target) {
  if (pe.rank() != 3 || pe.dim(0) != pe.dim(1)) throw ShapeError("pos encoding must be [n, n, d]");
  if (n_target == 0) throw ShapeError("n_target must be >= 1");
  const std::size_t n = pe.dim(0), d = pe.dim(2);
  if (n_target == n) return pe;
  // Same product the forward pass records, so the bits agree.
  Tape tape;
  Var out = matmul(tape.constant(grid_interpolation_matrix(n, n_target)), tape.constant(pe.reshaped({n * n, d})));
  return out.value().reshaped({n_target, n_target, d});
}

Tensor area_matrix(std::size_t source, std::size_t target) {
  if (target == 0 || target > source) throw ShapeError("area resize supports downsampling only");
  Tensor m({target, source}, 0.0);
  const double w = static_cast<double>(source) / static_cast<double>(target);
  for (std::size_t i = 0; i < target; ++i) {
    const double lo = static_cast<double>(i) * w, hi = lo + w;
    for (std::size_t s = static_cast<std::size_t>(std::floor(lo)); s < source && static_cast<double>(s) < hi; ++s) {
      const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) m[i * source + s] = overlap / w;
    }
  }
  return m;
}

Tensor resize_input(const Tensor& images, std::size_t n_target, std::size_t p) {
  if (images.rank() != 4 || images.dim(2) != images.dim(3)) throw ShapeError("resize_input expects [B, C, S, S]");
  const std::size_t S = images.dim(2), T = n_target * p;
  if (T > S) throw ShapeError("resize_input: upsampling from " + std::to_string(S) + " to " + std::to_string(T));
  if (T == S) return images;
  const std::size_t planes = images.dim(0) * images.dim(1);
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Tensor a = area_matrix(S, T);
  Eigen::Map<const RowMat> A(a.data().data(), T, S);
  Tensor out({images.dim(0), images.dim(1), T, T});
  for (std::size_t k = 0; k < planes; ++k) {
    Eigen::Map<const RowMat> X(images.data().data() + k * S * S, S, S);
    Eigen::Map<RowMat> Y(out.data().data() + k * T * T, T, T);
    RowMat tmp = A * X;
    Y.noalias() = tmp * A.transpose();
  }
  return out;
}

Tensor timestep_features(const std::vector<std::size_t>& timesteps, std::size_t dim) {
  Tensor f({timesteps.size(), dim});
  const std::size_t half = dim / 2;
  for (std::size_t b = 0; b < timesteps.size(); ++b) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
      const double a = static_cast<double>(timesteps[b]) * freq;
      f[b * dim + i] = std::sin(a);
      f[b * dim + half + i] = std::cos(a);
    }
  }
  return f;
}

}  // namespace autoprog
