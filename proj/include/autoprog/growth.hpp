#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "autoprog/vit.hpp"

namespace autoprog {

enum class GrowthKind { RandInit, Stacking, Interpolation, Identity, MoGrow };

GrowthKind parse_growth_kind(const std::string& text);
std::string to_string(GrowthKind kind);

// Layer maps over 0-based indices counted from the classifier end.
std::size_t layer_source_stacking(std::size_t i, std::size_t l_s);
std::size_t layer_source_interpolation(std::size_t i, std::size_t l_s, std::size_t l_target);

// Source of every target block in storage order (0 = input side). nullopt
// marks a freshly initialized block.
std::vector<std::optional<std::size_t>> growth_source_map(GrowthKind kind, std::size_t l_s, std::size_t l_target);

// Target blocks (storage order) that are the first copy of their source
// in classifier-first order. These carry the source function after growth.
std::vector<std::size_t> representative_blocks(GrowthKind kind, std::size_t l_s, std::size_t l_target);

// Grows depth and patch grid. Optimizer state of the result is fresh.
VisionTransformer grow(const VisionTransformer& small, const ViTConfig& target, GrowthKind kind, std::uint64_t seed);

// Exponential moving average of the online weights.
struct MomentumNetwork {
  ViTConfig config;
  std::map<std::string, Tensor> shadow;
  double momentum = 0.998;
};

MomentumNetwork make_momentum_network(const VisionTransformer& online, double momentum);
void momentum_update(MomentumNetwork& mn, const VisionTransformer& online);
// Interpolation growth of the shadow weights. Throws when mn does not track
// the online architecture.
VisionTransformer mogrow(const MomentumNetwork& mn, const VisionTransformer& online, const ViTConfig& target,
                         std::uint64_t seed);
// A model carrying the shadow weights under the online model's flags.
VisionTransformer shadow_model(const MomentumNetwork& mn, const VisionTransformer& online);

}  // namespace autoprog
