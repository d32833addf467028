#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autoprog/data.hpp"
#include "autoprog/errors.hpp"
#include "autoprog/growth.hpp"
#include "autoprog/optimizer.hpp"
#include "autoprog/vit.hpp"

namespace autoprog {

enum class Mode { PretrainAuto, FinetuneAuto, Baseline, ProxyReport, Gradcheck };

Mode parse_mode(const std::string& text);
std::string to_string(Mode mode);

struct ExperimentConfig {
  Mode mode = Mode::Baseline;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/out";

  DatasetSpec data;
  std::uint64_t data_seed = 1234;

  // Model shape. The model kind follows the dataset.
  std::size_t depth = 4;
  std::size_t patch_grid = 4;
  std::size_t embed_dim = 32;
  std::size_t heads = 2;
  std::size_t patch_size = 4;
  std::size_t mlp_ratio = 2;
  std::size_t timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  std::size_t steps = 2000;
  std::size_t stages = 4;
  std::size_t batch_size = 32;
  double s1 = 0.5;
  std::size_t ladder_steps = 0;
  bool search_depth = true;
  bool search_resolution = true;
  // Supernet steps per stage; 0 means two passes over the training set.
  std::size_t search_steps = 0;
  std::size_t eval_samples = 512;

  GrowthKind growth = GrowthKind::MoGrow;
  double ema_momentum = 0.998;
  OptimizerConfig optimizer;

  bool adareg = false;
  double drop_path_min = 0.0;
  double drop_path_max = 0.1;
  double noise_aug_min = 0.0;
  double noise_aug_max = 0.0;

  bool sid_enabled = false;
  std::string pretrained;
  std::size_t proxy_batch = 32;
  std::size_t proxy_batches = 2;

  std::size_t checkpoint_every = 0;
  bool log_wall_time = true;
  std::string baseline_summary;

  std::size_t gradcheck_models = 10;
  std::size_t gradcheck_coords = 100;

  ViTConfig model_config() const;
  DatasetSpec dataset_spec() const;
  std::size_t steps_per_stage() const { return steps / stages; }

  bool operator==(const ExperimentConfig&) const;
};

struct ConfigIssue {
  std::size_t line = 0;  // 0 when not tied to a line
  std::string message;
};

// Thrown with every problem found, one per line of what().
class ConfigErrors : public ConfigError {
 public:
  explicit ConfigErrors(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Applies "key=value" overrides on top of a config, then validates.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides);
std::vector<ConfigIssue> validate(const ExperimentConfig& config);
// Every key in canonical order; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);
std::vector<std::string> config_keys();
// Ignores out_dir, so relocated runs keep their hash.
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace autoprog
