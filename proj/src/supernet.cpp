#include "autoprog/supernet.hpp"

#include <algorithm>
#include <stdexcept>

namespace autoprog {

ElasticSupernet::ElasticSupernet(VisionTransformer store, std::vector<std::size_t> always_active,
                                 std::vector<SubNetworkSpec> candidates)
    : store_(std::move(store)), always_active_(std::move(always_active)), candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw std::invalid_argument("supernet needs at least one candidate");
  for (std::size_t t = store_.config().depth; t-- > 0;) {
    if (std::find(always_active_.begin(), always_active_.end(), t) == always_active_.end()) optional_.push_back(t);
  }
  for (const auto& c : candidates_) {
    if (c.second < always_active_.size() || c.second > store_.config().depth || c.n > store_.config().patch_grid) {
      throw std::invalid_argument("candidate outside the supernet");
    }
  }
}

std::vector<std::size_t> ElasticSupernet::active_blocks(std::size_t l) const {
  if (l < always_active_.size() || l > store_.config().depth) throw std::invalid_argument("depth outside the supernet");
  std::vector<std::size_t> out = always_active_;
  out.insert(out.end(), optional_.begin(), optional_.begin() + static_cast<std::ptrdiff_t>(l - always_active_.size()));
  std::sort(out.begin(), out.end());
  return out;
}

ForwardOptions ElasticSupernet::options(const SubNetworkSpec& spec) const {
  index_of(spec);
  ForwardOptions o;
  o.active_blocks = active_blocks(spec.second);
  o.grid = spec.n;
  return o;
}

std::size_t ElasticSupernet::index_of(const SubNetworkSpec& spec) const {
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (candidates_[i] == spec) return i;
  }
  throw std::invalid_argument("spec n=" + std::to_string(spec.n) + ",l=" + std::to_string(spec.second) +
                              " is not a supernet candidate");
}

const SubNetworkSpec& ElasticSupernet::sample(Rng& rng) const { return candidates_[rng.index(candidates_.size())]; }

std::set<std::string> ElasticSupernet::parameter_names(const SubNetworkSpec& spec) const {
  index_of(spec);
  const auto active = active_blocks(spec.second);
  std::set<std::string> out;
  for (const auto& [name, _] : store_.params()) {
    auto b = block_of(name);
    if (!b || std::find(active.begin(), active.end(), *b) != active.end()) out.insert(name);
  }
  return out;
}

std::size_t ElasticSupernet::parameter_count(const SubNetworkSpec& spec) const {
  std::size_t n = 0;
  const std::size_t d = store_.config().embed_dim;
  for (const auto& name : parameter_names(spec)) {
    n += name == "pos_embed.grid" ? spec.n * spec.n * d : store_.param(name).value.numel();
  }
  return n;
}

namespace {

// Maps store parameter names to extracted names for a spec, in order.
std::vector<std::pair<std::string, std::string>> renames(const VisionTransformer& store,
                                                         const std::vector<std::size_t>& active) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, _] : store.params()) {
    auto b = block_of(name);
    if (!b) {
      out.emplace_back(name, name);
      continue;
    }
    auto it = std::find(active.begin(), active.end(), *b);
    if (it == active.end()) continue;
    const std::size_t pos = static_cast<std::size_t>(it - active.begin());
    out.emplace_back(name, block_prefix(pos) + name.substr(block_prefix(*b).size()));
  }
  return out;
}

Tensor resize_pe_like(const Tensor& t, std::size_t n) { return interpolate_pos_encoding(t, n); }

}  // namespace

VisionTransformer ElasticSupernet::extract(const SubNetworkSpec& spec) const {
  index_of(spec);
  ViTConfig cfg = store_.config();
  cfg.depth = spec.second;
  cfg.patch_grid = spec.n;
  VisionTransformer out(cfg);
  for (const auto& [from, to] : renames(store_, active_blocks(spec.second))) {
    Parameter p = store_.param(from);
    if (from == "pos_embed.grid") {
      const bool rg = p.value.requires_grad();
      p.value = resize_pe_like(p.value, spec.n);
      p.value.set_requires_grad(rg);
      p.m = resize_pe_like(p.m, spec.n);
      p.v = resize_pe_like(p.v, spec.n);
    }
    out.params().emplace(to, std::move(p));
  }
  return out;
}

MomentumNetwork ElasticSupernet::extract_momentum(const MomentumNetwork& mn, const SubNetworkSpec& spec) const {
  index_of(spec);
  MomentumNetwork out;
  out.momentum = mn.momentum;
  out.config = store_.config();
  out.config.depth = spec.second;
  out.config.patch_grid = spec.n;
  for (const auto& [from, to] : renames(store_, active_blocks(spec.second))) {
    const Tensor& t = mn.shadow.at(from);
    out.shadow.emplace(to, from == "pos_embed.grid" ? resize_pe_like(t, spec.n) : t);
  }
  return out;
}

ElasticSupernet build_supernet(const VisionTransformer& prev, const std::vector<SubNetworkSpec>& candidates,
                               GrowthKind kind, const MomentumNetwork* mn, std::uint64_t seed) {
  if (candidates.empty()) throw std::invalid_argument("empty candidate set");
  const std::size_t l_prev = prev.config().depth, n_prev = prev.config().patch_grid;
  std::size_t l_max = 0, n_max = 0;
  for (const auto& c : candidates) {
    if (c.second < l_prev || c.n < n_prev) {
      throw std::invalid_argument("candidate n=" + std::to_string(c.n) + ",l=" + std::to_string(c.second) +
                                  " is smaller than the previous optimum");
    }
    l_max = std::max(l_max, c.second);
    n_max = std::max(n_max, c.n);
  }
  ViTConfig target = prev.config();
  target.depth = l_max;
  target.patch_grid = n_max;
  VisionTransformer store = [&] {
    if (kind != GrowthKind::MoGrow) return grow(prev, target, kind, seed);
    if (mn == nullptr) throw std::invalid_argument("MoGrow supernet needs a momentum network");
    return mogrow(*mn, prev, target, seed);
  }();
  return ElasticSupernet(std::move(store), representative_blocks(kind, l_prev, l_max), candidates);
}

}  // namespace autoprog
