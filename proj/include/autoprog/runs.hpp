#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "autoprog/config.hpp"
#include "autoprog/proxies.hpp"
#include "autoprog/space.hpp"
#include "autoprog/trainer.hpp"
#include "autoprog/vit.hpp"

namespace autoprog {

// Seen at the start of a stage (after the schedule choice, before any update)
// and at its end.
struct StageEvent {
  std::size_t stage = 0;
  bool begin = true;
  const VisionTransformer* model = nullptr;
  // Options and input grid the stage trains with.
  ForwardOptions opts;
  std::size_t grid = 0;
};

struct RunOptions {
  // Continue from <out_dir>/checkpoint.bin.
  bool resume = false;
  // Return after this many steps as if interrupted.
  std::optional<std::size_t> stop_after_step;
  std::function<void(const StageEvent&)> on_stage;
  // Overrides the config's pretrained checkpoint path.
  const VisionTransformer* pretrained = nullptr;
};

struct RunResult {
  VisionTransformer model{ViTConfig{}};
  bool completed = false;
  std::size_t steps = 0;
  double final_loss = 0.0;
  double total_flops = 0.0;
  double wall_ms = 0.0;
  std::vector<std::string> schedule;
};

RunResult run_baseline(const ExperimentConfig& config, const RunOptions& options = {});
RunResult run_autoprog_one(const ExperimentConfig& config, const RunOptions& options = {});
RunResult run_autoprog_zero(const ExperimentConfig& config, const RunOptions& options = {});
// Dispatches on config.mode for the three training modes.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Last `learnable_blocks` blocks plus the final norm and head; the
// embeddings join only when every block is learnable. SID is always learnable.
NamePredicate unfreeze_mask(const ViTConfig& config, std::size_t learnable_blocks);

// Adds a zero-initialized, learnable SID table with one row per stage.
VisionTransformer with_sid(VisionTransformer model, std::size_t stages);

struct CandidateProxy {
  SubNetworkSpec spec;
  ProxyScores scores;
  double rank_score = 0.0;
  // Flops spent computing this candidate's proxies.
  double cost = 0.0;
};

// H_kappa (mean over batches), H_ZiCo and T for every unfreezing candidate on
// the same seeded batches, without changing the model.
std::vector<CandidateProxy> evaluate_proxies(const VisionTransformer& model, const Task& task,
                                             const ExperimentConfig& config, const std::vector<SubNetworkSpec>& candidates,
                                             std::size_t stage);

Task make_task(const ExperimentConfig& config, const Dataset& data);

}  // namespace autoprog
