#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "autoprog/runlog.hpp"
#include "autoprog/runs.hpp"

using namespace autoprog;
namespace fs = std::filesystem;

namespace {

std::string out_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("autoprog_runs_" + name);
  fs::remove_all(p);
  return p.string();
}

ExperimentConfig blobs(const std::string& name, std::vector<std::string> extra = {}) {
  ExperimentConfig c;
  c.log_wall_time = false;
  std::vector<std::string> o = {"dataset=classification-blobs", "depth=4", "embed_dim=8", "steps=48", "stages=3",
                                "search_steps=6", "eval_samples=32", "train_size=128", "eval_size=32", "batch_size=8",
                                "out_dir=" + out_dir(name)};
  o.insert(o.end(), extra.begin(), extra.end());
  apply_overrides(c, o);
  return c;
}

const VisionTransformer& pretrained_denoiser() {
  static const VisionTransformer m = [] {
    ExperimentConfig c;
    c.log_wall_time = false;
    apply_overrides(c, {"dataset=diffusion-textures", "depth=4", "patch_size=2", "patch_grid=4", "embed_dim=8",
                        "steps=20", "stages=1", "train_size=64", "eval_size=16", "batch_size=8",
                        "out_dir=" + out_dir("pre")});
    return run_baseline(c).model;
  }();
  return m;
}

ExperimentConfig textures(const std::string& name, std::vector<std::string> extra = {}) {
  ExperimentConfig c;
  c.log_wall_time = false;
  std::vector<std::string> o = {"mode=finetune-auto", "dataset=diffusion-textures", "depth=4", "patch_size=2",
                                "patch_grid=4", "embed_dim=8", "steps=40", "stages=4", "s1=0.25", "shift=1",
                                "train_size=64", "eval_size=16", "batch_size=8", "proxy_batch=4", "proxy_batches=1",
                                "out_dir=" + out_dir(name)};
  o.insert(o.end(), extra.begin(), extra.end());
  apply_overrides(c, o);
  return c;
}

std::vector<std::string> lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t learnable_blocks(const std::string& spec) {
  const auto u = std::stod(spec.substr(spec.find("u=") + 2));
  return static_cast<std::size_t>(u * 4 + 0.5);
}

}  // namespace

TEST(Runs, AutoProgOneUsesConfiguredStepsAndGrowsMonotonically) {
  const auto cfg = blobs("one", {"mode=pretrain-auto"});
  const RunResult r = run_autoprog_one(cfg);
  EXPECT_TRUE(r.completed);
  EXPECT_EQ(r.steps, 48u);
  EXPECT_EQ(lines(cfg.out_dir + "/metrics.csv").size(), 49u);
  ASSERT_EQ(r.schedule.size(), 3u);
  std::size_t prev_n = 0, prev_l = 0;
  for (const auto& s : r.schedule) {
    const std::size_t n = std::stoul(s.substr(2)), l = std::stoul(s.substr(s.find("l=") + 2));
    EXPECT_GE(n, prev_n);
    EXPECT_GE(l, prev_l);
    prev_n = n;
    prev_l = l;
  }
  EXPECT_EQ(r.schedule.back(), "n=4,l=4,u=1.00");
  EXPECT_EQ(r.model.config().depth, 4u);
  // Trace rows carry exactly one chosen candidate per searched stage.
  const auto trace = lines(cfg.out_dir + "/trace.csv");
  std::size_t chosen = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) chosen += trace[i].back() == '1';
  EXPECT_GE(chosen, 1u);
}

TEST(Runs, AutoProgOneCostsLessThanBaseline) {
  const RunResult base = run_baseline(blobs("cost_base", {"mode=baseline"}));
  const RunResult one = run_autoprog_one(blobs("cost_one", {"mode=pretrain-auto"}));
  EXPECT_LT(one.total_flops, base.total_flops);
}

TEST(Runs, ZeroUnfreezesMonotonicallyAndFreezingIsAbsolute) {
  std::vector<std::pair<StageEvent, VisionTransformer>> events;
  RunOptions ro;
  ro.pretrained = &pretrained_denoiser();
  ro.on_stage = [&](const StageEvent& e) { events.emplace_back(e, *e.model); };
  const RunResult r = run_autoprog_zero(textures("zero", {"sid_enabled=true"}), ro);
  ASSERT_EQ(r.schedule.size(), 4u);
  for (std::size_t i = 1; i < r.schedule.size(); ++i) {
    EXPECT_GE(learnable_blocks(r.schedule[i]), learnable_blocks(r.schedule[i - 1]));
  }
  EXPECT_EQ(r.schedule.back(), "n=4,l=4,u=1.00");
  ASSERT_EQ(events.size(), 8u);
  for (std::size_t i = 0; i < events.size(); i += 2) {
    const auto& begin = events[i].second;
    const auto& end = events[i + 1].second;
    for (const auto& [name, p] : begin.params()) {
      const bool learnable = p.value.requires_grad();
      const bool same = bitwise_equal(p.value, end.param(name).value);
      if (!learnable) EXPECT_TRUE(same) << "stage " << events[i].first.stage << " " << name;
      if (learnable && name.rfind("sid.", 0) != 0) EXPECT_FALSE(same) << name;
    }
  }
  for (const auto& [name, p] : r.model.params()) {
    EXPECT_TRUE(p.value.requires_grad() || name.find("residual_scale") != std::string::npos) << name;
  }
}

TEST(Runs, MaskedForwardIsUnchanged) {
  const auto& m = pretrained_denoiser();
  auto frozen = m;
  frozen.set_learnable(unfreeze_mask(m.config(), 1));
  Rng rng(1, "x");
  const std::size_t side = m.config().patch_grid * m.config().patch_size;
  const Tensor x = normal_tensor({2, m.config().channels, side, side}, rng);
  ad::Tape a, b;
  EXPECT_TRUE(bitwise_equal(m.forward_denoise(a, x, {0, 0}, {5, 50}).value(),
                            frozen.forward_denoise(b, x, {0, 0}, {5, 50}).value()));
}

TEST(Runs, UnfreezeMaskSelectsSuffix) {
  ViTConfig c;
  c.depth = 4;
  const auto mask = unfreeze_mask(c, 1);
  EXPECT_TRUE(mask("blocks.3.mlp.fc1.weight"));
  EXPECT_FALSE(mask("blocks.2.mlp.fc1.weight"));
  EXPECT_TRUE(mask("head.weight"));
  EXPECT_TRUE(mask("norm.bias"));
  EXPECT_TRUE(mask("sid.table"));
  EXPECT_FALSE(mask("patch_embed.weight"));
  EXPECT_FALSE(mask("pos_embed.grid"));
  const auto all = unfreeze_mask(c, 4);
  EXPECT_TRUE(all("patch_embed.weight"));
  EXPECT_TRUE(all("blocks.0.attn.qkv.weight"));
}

TEST(Runs, WithSidAddsZeroTable) {
  const auto m = with_sid(pretrained_denoiser(), 3);
  EXPECT_EQ(m.config().sid_stages, 3u);
  const Tensor& t = m.param("sid.table").value;
  EXPECT_EQ(t.shape(), (Shape{3, 8}));
  for (double v : t.data()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(t.requires_grad());
}

TEST(Runs, ProxyReportCoversCandidates) {
  const auto cfg = textures("proxies");
  const Dataset data = make_dataset(cfg.dataset_spec(), cfg.data_seed);
  const Task task = make_task(cfg, data);
  const GrowthSpace space = build_growth_space({cfg.s1, cfg.stages, cfg.steps, 0, true, true}, 4, 4);
  ASSERT_EQ(space.second_ladder.size(), 4u);
  const auto cands = stage_candidates(space, space.smallest(), 1);
  const auto a = evaluate_proxies(pretrained_denoiser(), task, cfg, cands, 1);
  const auto b = evaluate_proxies(pretrained_denoiser(), task, cfg, cands, 1);
  ASSERT_EQ(a.size(), cands.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].scores.h_kappa, b[i].scores.h_kappa);
    EXPECT_EQ(a[i].scores.h_zico, b[i].scores.h_zico);
    EXPECT_GT(a[i].scores.h_kappa, 1.0);
    EXPECT_GT(a[i].cost, 0.0);
  }
  // Larger learnable sets and grids cost more per step.
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (cands[i].n <= cands[j].n && cands[i].second < cands[j].second) EXPECT_LT(a[i].scores.t, a[j].scores.t);
}

TEST(Runs, Errors) {
  EXPECT_THROW(run_autoprog_zero(textures("nopre")), ConfigError);
  auto cfg = blobs("gradcheck_mode", {"mode=gradcheck"});
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  auto resume = blobs("no_checkpoint", {"mode=baseline"});
  RunOptions ro;
  ro.resume = true;
  EXPECT_THROW(run_baseline(resume, ro), CheckpointError);
}

TEST(Runs, SummaryReportsSpeedup) {
  const auto base = blobs("sum_base", {"mode=baseline"});
  run_baseline(base);
  const auto one = blobs("sum_one", {"mode=pretrain-auto", "baseline_summary=" + base.out_dir + "/summary.txt"});
  const RunResult r = run_autoprog_one(one);
  const auto s = read_summary(one.out_dir + "/summary.txt");
  const auto b = read_summary(base.out_dir + "/summary.txt");
  EXPECT_DOUBLE_EQ(std::stod(s.at("speedup")), std::stod(b.at("total_flops")) / r.total_flops);
  EXPECT_EQ(s.at("mode"), "pretrain-auto");
  EXPECT_EQ(lines(one.out_dir + "/config.txt").size(), config_keys().size());
}
