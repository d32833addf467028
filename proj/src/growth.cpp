#include "autoprog/growth.hpp"

#include <algorithm>
#include <stdexcept>

#include "autoprog/errors.hpp"

namespace autoprog {

GrowthKind parse_growth_kind(const std::string& text) {
  if (text == "randinit") return GrowthKind::RandInit;
  if (text == "stacking") return GrowthKind::Stacking;
  if (text == "interpolation") return GrowthKind::Interpolation;
  if (text == "identity") return GrowthKind::Identity;
  if (text == "mogrow") return GrowthKind::MoGrow;
  throw ConfigError("unknown growth operator '" + text + "'");
}

std::string to_string(GrowthKind kind) {
  switch (kind) {
    case GrowthKind::RandInit: return "randinit";
    case GrowthKind::Stacking: return "stacking";
    case GrowthKind::Interpolation: return "interpolation";
    case GrowthKind::Identity: return "identity";
    case GrowthKind::MoGrow: return "mogrow";
  }
  return "?";
}

std::size_t layer_source_stacking(std::size_t i, std::size_t l_s) {
  if (l_s == 0) throw std::invalid_argument("source depth must be >= 1");
  return i % l_s;
}

std::size_t layer_source_interpolation(std::size_t i, std::size_t l_s, std::size_t l_target) {
  if (l_s == 0 || l_s > l_target || i >= l_target) throw std::invalid_argument("interpolation map out of range");
  return i * l_s / l_target;
}

std::vector<std::optional<std::size_t>> growth_source_map(GrowthKind kind, std::size_t l_s, std::size_t l_target) {
  if (l_s == 0 || l_target < l_s) throw std::invalid_argument("growth cannot shrink depth");
  std::vector<std::optional<std::size_t>> map(l_target);
  for (std::size_t i = 0; i < l_target; ++i) {
    std::optional<std::size_t> src;
    switch (kind) {
      case GrowthKind::RandInit:
        if (i < l_s) src = i;
        break;
      case GrowthKind::Stacking:
        src = layer_source_stacking(i, l_s);
        break;
      default:
        src = layer_source_interpolation(i, l_s, l_target);
    }
    // Classifier-first index i sits at storage l_target-1-i.
    map[l_target - 1 - i] = src ? std::optional<std::size_t>(l_s - 1 - *src) : std::nullopt;
  }
  return map;
}

std::vector<std::size_t> representative_blocks(GrowthKind kind, std::size_t l_s, std::size_t l_target) {
  const auto map = growth_source_map(kind, l_s, l_target);
  std::vector<bool> seen(l_s, false);
  std::vector<std::size_t> reps;
  // Scan in classifier-first order; the first copy of each source wins.
  for (std::size_t t = l_target; t-- > 0;) {
    if (map[t] && !seen[*map[t]]) {
      seen[*map[t]] = true;
      reps.push_back(t);
    }
  }
  std::sort(reps.begin(), reps.end());
  return reps;
}

namespace {

void check_compatible(const ViTConfig& s, const ViTConfig& t) {
  if (t.depth < s.depth || t.patch_grid < s.patch_grid) throw std::invalid_argument("growth cannot shrink the model");
  ViTConfig a = s, b = t;
  a.depth = b.depth;
  a.patch_grid = b.patch_grid;
  a.learnable_residual = b.learnable_residual;
  if (!(a == b)) throw std::invalid_argument("growth only changes depth and patch grid");
}

}  // namespace

VisionTransformer grow(const VisionTransformer& small, const ViTConfig& target, GrowthKind kind, std::uint64_t seed) {
  if (kind == GrowthKind::MoGrow) throw std::invalid_argument("MoGrow needs a momentum network; use mogrow()");
  const ViTConfig& sc = small.config();
  check_compatible(sc, target);
  ViTConfig tc = target;
  tc.learnable_residual = sc.learnable_residual || kind == GrowthKind::Identity;
  VisionTransformer out(tc);

  for (const auto& [name, p] : small.params()) {
    if (block_of(name)) continue;
    Parameter q;
    q.value = name == "pos_embed.grid" ? interpolate_pos_encoding(p.value, tc.patch_grid) : p.value;
    out.params().emplace(name, std::move(q));
  }

  const auto map = growth_source_map(kind, sc.depth, tc.depth);
  std::vector<bool> silent(tc.depth, false);
  if (kind == GrowthKind::Identity) {
    silent.assign(tc.depth, true);
    for (std::size_t r : representative_blocks(kind, sc.depth, tc.depth)) silent[r] = false;
  }
  Rng root(seed, "grow");
  for (std::size_t t = 0; t < tc.depth; ++t) {
    for (const auto& [name, shape] : block_parameter_shapes(tc, t)) {
      Parameter q;
      if (map[t]) {
        const std::string src = block_prefix(*map[t]) + name.substr(block_prefix(t).size());
        q.value = small.param(src).value;
      } else {
        Rng rng = root.derive(name);
        q.value = init_parameter(name, shape, rng);
      }
      if (silent[t] && name.ends_with("residual_scale")) q.value.fill(0.0);
      out.params().emplace(name, std::move(q));
    }
  }
  out.unfreeze_all();
  out.reset_optimizer_state();
  return out;
}

MomentumNetwork make_momentum_network(const VisionTransformer& online, double momentum) {
  if (!(momentum > 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in (0, 1)");
  MomentumNetwork mn;
  mn.config = online.config();
  mn.momentum = momentum;
  for (const auto& [name, p] : online.params()) mn.shadow.emplace(name, p.value);
  return mn;
}

void momentum_update(MomentumNetwork& mn, const VisionTransformer& online) {
  const double m = mn.momentum;
  if (mn.shadow.size() != online.params().size()) throw ShapeError("momentum network does not track the online model");
  for (auto& [name, s] : mn.shadow) {
    auto it = online.params().find(name);
    if (it == online.params().end() || it->second.value.shape() != s.shape()) {
      throw ShapeError("momentum network shape mismatch at " + name);
    }
    const Tensor& w = it->second.value;
    for (std::size_t i = 0; i < s.numel(); ++i) s[i] = m * s[i] + (1.0 - m) * w[i];
  }
}

VisionTransformer shadow_model(const MomentumNetwork& mn, const VisionTransformer& online) {
  if (!(mn.config == online.config()) || mn.shadow.size() != online.params().size()) {
    throw std::invalid_argument("stale momentum network: architecture differs from the online model");
  }
  VisionTransformer out(mn.config);
  for (const auto& [name, p] : online.params()) {
    auto it = mn.shadow.find(name);
    if (it == mn.shadow.end() || it->second.shape() != p.value.shape()) {
      throw std::invalid_argument("stale momentum network at " + name);
    }
    Parameter q = p;
    const bool rg = p.value.requires_grad();
    q.value = it->second;
    q.value.set_requires_grad(rg);
    out.params().emplace(name, std::move(q));
  }
  return out;
}

VisionTransformer mogrow(const MomentumNetwork& mn, const VisionTransformer& online, const ViTConfig& target,
                         std::uint64_t seed) {
  return grow(shadow_model(mn, online), target, GrowthKind::Interpolation, seed);
}

}  // namespace autoprog
