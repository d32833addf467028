#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autoprog/autodiff.hpp"
#include "autoprog/rng.hpp"
#include "autoprog/tensor.hpp"

namespace autoprog {

enum class ModelKind { Classifier, Denoiser };

struct ViTConfig {
  ModelKind kind = ModelKind::Classifier;
  std::size_t depth = 4;
  std::size_t patch_grid = 4;
  std::size_t embed_dim = 32;
  std::size_t heads = 2;
  std::size_t num_classes = 2;
  std::size_t patch_size = 4;
  std::size_t mlp_ratio = 2;
  std::size_t channels = 1;
  // Denoiser only.
  std::size_t timesteps = 100;
  // Number of stage-identifier rows; 0 disables SID.
  std::size_t sid_stages = 0;
  // Residual scales become learnable (set by Identity growth).
  bool learnable_residual = false;

  std::size_t image_side() const { return patch_grid * patch_size; }
  void validate() const;
  bool operator==(const ViTConfig&) const = default;
};

// A stored parameter and its optimizer slots. value.requires_grad() is the
// learnable flag.
struct Parameter {
  Tensor value;
  Tensor m;
  Tensor v;
  std::int64_t steps = 0;
};

using ParameterStore = std::map<std::string, Parameter>;

struct ForwardOptions {
  // Storage indices of the blocks to run, in order. Unset runs all blocks.
  std::optional<std::vector<std::size_t>> active_blocks;
  // Patch grid of the input; 0 means the model's own grid.
  std::size_t grid = 0;
  double drop_path = 0.0;
  Rng* drop_rng = nullptr;
  std::size_t sid_stage = 0;
};

// "blocks.3.attn.qkv.weight" -> "blocks.3.attn.qkv".
std::string layer_of(const std::string& name);
// Block index of a parameter name, or nullopt outside the blocks.
std::optional<std::size_t> block_of(const std::string& name);
std::string block_prefix(std::size_t index);

class VisionTransformer {
 public:
  explicit VisionTransformer(ViTConfig config);

  const ViTConfig& config() const { return config_; }
  ViTConfig& mutable_config() { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) != 0; }

  std::size_t parameter_count() const;
  std::size_t learnable_count() const;

  // images: [B, C, side, side] with side = grid * patch_size.
  ad::Var forward_classify(ad::Tape& tape, const Tensor& images, const ForwardOptions& opts = {}) const;
  // Predicts the noise added to x_t. Returns [B, C, side, side].
  ad::Var forward_denoise(ad::Tape& tape, const Tensor& x_t, const std::vector<std::size_t>& labels,
                          const std::vector<std::size_t>& timesteps, const ForwardOptions& opts = {}) const;

  // Plain evaluation without gradients.
  Tensor logits(const Tensor& images, const ForwardOptions& opts = {}) const;

  // Sets requires_grad per parameter; residual scales stay frozen unless
  // learnable_residual is set.
  void set_learnable(const std::function<bool(const std::string&)>& learnable);
  void freeze_all();
  void unfreeze_all();

  void reset_optimizer_state();

 private:
  ad::Var tokens(ad::Tape& tape, const Tensor& images, std::size_t grid) const;
  ad::Var run_blocks(ad::Tape& tape, ad::Var x, const ForwardOptions& opts) const;
  ad::Var block(ad::Tape& tape, ad::Var x, std::size_t index, const ForwardOptions& opts) const;
  ad::Var p(ad::Tape& tape, const std::string& name) const;

  ViTConfig config_;
  ParameterStore params_;
};

// Initialized parameters of a fresh model. Each tensor draws from its own
// named stream so shapes elsewhere never shift its values.
VisionTransformer build_vit(const ViTConfig& config, std::uint64_t seed);
// Draws one parameter as build_vit would under the given stream name.
Tensor init_parameter(const std::string& name, const Shape& shape, Rng& rng);
// Names and shapes of every parameter of one block.
std::vector<std::pair<std::string, Shape>> block_parameter_shapes(const ViTConfig& config, std::size_t index);

// [target, source] interpolation weights, bilinear with aligned corners.
Tensor align_corners_matrix(std::size_t source, std::size_t target);
// [target^2, source^2] weights acting on a flattened source x source grid.
Tensor grid_interpolation_matrix(std::size_t source, std::size_t target);
// pe: [n, n, d] -> [n_target, n_target, d].
Tensor interpolate_pos_encoding(const Tensor& pe, std::size_t n_target);

// [target, source] area-average weights with fractional pixel coverage.
Tensor area_matrix(std::size_t source, std::size_t target);
// images: [B, C, S, S] -> [B, C, n_target*p, n_target*p].
Tensor resize_input(const Tensor& images, std::size_t n_target, std::size_t p);

Tensor timestep_features(const std::vector<std::size_t>& timesteps, std::size_t dim);

}  // namespace autoprog
