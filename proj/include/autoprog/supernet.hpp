#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "autoprog/growth.hpp"
#include "autoprog/space.hpp"
#include "autoprog/vit.hpp"

namespace autoprog {

// Weight-nesting store over a stage's candidates. The store is the largest
// candidate; smaller depths run the always-active blocks plus optional blocks
// taken from the classifier end, and smaller grids interpolate the stored
// positional encoding.
class ElasticSupernet {
 public:
  ElasticSupernet(VisionTransformer store, std::vector<std::size_t> always_active, std::vector<SubNetworkSpec> candidates);

  const VisionTransformer& store() const { return store_; }
  VisionTransformer& store() { return store_; }
  const std::vector<SubNetworkSpec>& candidates() const { return candidates_; }
  const std::vector<std::size_t>& always_active() const { return always_active_; }
  // Optional blocks in activation order.
  const std::vector<std::size_t>& optional_order() const { return optional_; }

  // Storage indices run for depth l, ascending.
  std::vector<std::size_t> active_blocks(std::size_t l) const;
  ForwardOptions options(const SubNetworkSpec& spec) const;
  std::size_t index_of(const SubNetworkSpec& spec) const;
  const SubNetworkSpec& sample(Rng& rng) const;

  // Names of the stored parameters a candidate uses.
  std::set<std::string> parameter_names(const SubNetworkSpec& spec) const;
  std::size_t parameter_count(const SubNetworkSpec& spec) const;

  // Standalone model with the candidate's blocks and interpolated positional
  // encoding; optimizer slots come along.
  VisionTransformer extract(const SubNetworkSpec& spec) const;
  // Same selection applied to a momentum network over the store.
  MomentumNetwork extract_momentum(const MomentumNetwork& mn, const SubNetworkSpec& spec) const;

 private:
  VisionTransformer store_;
  std::vector<std::size_t> always_active_;
  std::vector<std::size_t> optional_;
  std::vector<SubNetworkSpec> candidates_;
};

// prev: the previous stage's model; its depth and grid define the base spec.
// kind == MoGrow grows the momentum network's weights.
ElasticSupernet build_supernet(const VisionTransformer& prev, const std::vector<SubNetworkSpec>& candidates,
                               GrowthKind kind, const MomentumNetwork* mn, std::uint64_t seed);

}  // namespace autoprog
