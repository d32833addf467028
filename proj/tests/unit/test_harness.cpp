#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "autoprog/checkpoint.hpp"
#include "autoprog/config.hpp"
#include "autoprog/data.hpp"
#include "autoprog/flops.hpp"
#include "autoprog/runlog.hpp"
#include "autoprog/trainer.hpp"

using namespace autoprog;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fixture(const std::string& name) { return fs::path(AUTOPROG_FIXTURES_DIR) / name; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("autoprog_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ViTConfig vit_cfg() {
  ViTConfig c;
  c.depth = 4;
  c.patch_grid = 4;
  c.patch_size = 2;
  c.embed_dim = 8;
  c.heads = 2;
  c.num_classes = 3;
  return c;
}

}  // namespace

TEST(Config, DefaultMatchesGolden) { EXPECT_EQ(to_text(ExperimentConfig{}), read_file(fixture("config_default.txt"))); }

TEST(Config, RoundTrip) {
  ExperimentConfig c;
  c.mode = Mode::FinetuneAuto;
  c.seed = 77;
  c.data.kind = DatasetKind::DiffusionTextures;
  c.data.shift = 0.37;
  c.s1 = 0.25;
  c.steps = 999;
  c.stages = 3;
  c.growth = GrowthKind::Identity;
  c.optimizer.kind = OptimizerKind::Sgd;
  c.optimizer.lr = 0.1 / 3.0;
  c.sid_enabled = true;
  c.pretrained = "runs/pre/checkpoint.bin";
  const ExperimentConfig back = parse_config(to_text(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  c.out_dir = "elsewhere";
  EXPECT_EQ(config_hash(back), config_hash(c));
  c.seed = 78;
  EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(Config, CommentsAndOverrides) {
  ExperimentConfig c = parse_config("# header\nseed = 5  # trailing\n\nsteps = 400\n");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.steps, 400u);
  apply_overrides(c, {"stages=2", "lr=0.5"});
  EXPECT_EQ(c.stages, 2u);
  EXPECT_EQ(c.optimizer.lr, 0.5);
  EXPECT_THROW(apply_overrides(c, {"stages"}), ConfigError);
}

TEST(Config, ReportsEveryIssue) {
  try {
    parse_config("seed = 1\nbogus = 2\nsteps = x\nno equals here\nstages = 3\n");
    FAIL() << "expected ConfigErrors";
  } catch (const ConfigErrors& e) {
    std::vector<std::size_t> lines;
    for (const auto& i : e.issues()) lines.push_back(i.line);
    EXPECT_EQ(lines, (std::vector<std::size_t>{2, 3, 4, 0}));
    EXPECT_NE(std::string(e.what()).find("divisible"), std::string::npos);
  }
  EXPECT_THROW(load_config("/nonexistent/config.txt"), ConfigError);
  EXPECT_THROW(parse_config("heads = 3\n"), ConfigError);
}

TEST(Dataset, DeterministicAndSeeded) {
  for (auto kind : {DatasetKind::ClassificationBlobs, DatasetKind::DiffusionTextures}) {
    DatasetSpec s;
    s.kind = kind;
    s.train_size = 40;
    s.eval_size = 10;
    const Dataset a = make_dataset(s, 3), b = make_dataset(s, 3), c = make_dataset(s, 4);
    EXPECT_EQ(a.train_x.shape(), (Shape{40, 1, 16, 16}));
    EXPECT_EQ(a.eval_x.shape(), (Shape{10, 1, 16, 16}));
    EXPECT_TRUE(bitwise_equal(a.train_x, b.train_x));
    EXPECT_EQ(a.train_y, b.train_y);
    EXPECT_FALSE(bitwise_equal(a.train_x, c.train_x));
    for (auto y : a.train_y) EXPECT_LT(y, s.classes);
    EXPECT_TRUE(a.train_x.all_finite());
  }
}

TEST(Dataset, ShiftChangesDistribution) {
  DatasetSpec s;
  s.kind = DatasetKind::DiffusionTextures;
  s.train_size = 20;
  s.eval_size = 4;
  const Dataset a = make_dataset(s, 1);
  s.shift = 1.0;
  const Dataset b = make_dataset(s, 1);
  EXPECT_FALSE(bitwise_equal(a.train_x, b.train_x));
}

TEST(Dataset, SampleBatch) {
  const auto a = sample_batch(10, 50, Rng(1, "batch"));
  EXPECT_EQ(a, sample_batch(10, 50, Rng(1, "batch")));
  for (auto r : a) EXPECT_LT(r, 10u);
}

TEST(Flops, ClosedFormFullyLearnable) {
  const ViTConfig c = vit_cfg();
  const double B = 5, N = 16, d = 8, h = 16, pp = 4, C = 3, L = 4;
  const double patch = 2 * B * N * pp * d, head = 2 * B * d * C;
  const double lin = 2 * B * N * d * 3 * d + 2 * B * N * d * d + 2 * B * N * d * h * 2;
  const double act = 4 * B * N * N * d;
  const FlopsBreakdown f = flops_account(c, 5, 4, 4, all_learnable());
  EXPECT_DOUBLE_EQ(f.forward, patch + L * (lin + act) + head);
  EXPECT_DOUBLE_EQ(f.backward_weight, patch + L * lin + head);
  EXPECT_DOUBLE_EQ(f.backward_input, L * (lin + 2 * act) + head);
  EXPECT_DOUBLE_EQ(forward_flops(c, 5, 4, 4), f.forward);
}

TEST(Flops, AdditiveOverBlocks) {
  const ViTConfig c = vit_cfg();
  const double f1 = forward_flops(c, 2, 4, 1), f2 = forward_flops(c, 2, 4, 2), f4 = forward_flops(c, 2, 4, 4);
  EXPECT_DOUBLE_EQ(f4 - f2, 2 * (f2 - f1));
  const auto t2 = flops_account(c, 2, 4, 2, all_learnable()).train();
  const auto t4 = flops_account(c, 2, 4, 4, all_learnable()).train();
  const auto t3 = flops_account(c, 2, 4, 3, all_learnable()).train();
  EXPECT_DOUBLE_EQ(t4 - t3, t3 - t2);
}

TEST(Flops, FrozenPrefixDiscount) {
  const ViTConfig c = vit_cfg();
  const auto full = flops_account(c, 4, 4, 4, all_learnable());
  const auto last = flops_account(c, 4, 4, 4, [](const std::string& n) {
    return n.rfind("blocks.3.", 0) == 0 || n.rfind("norm.", 0) == 0 || n.rfind("head.", 0) == 0;
  });
  const double patch = 2.0 * 4 * 16 * 4 * 8, head = 2.0 * 4 * 8 * 3;
  EXPECT_DOUBLE_EQ(last.forward, full.forward);
  EXPECT_DOUBLE_EQ(last.backward_weight - head, 0.25 * (full.backward_weight - head - patch));
  EXPECT_LT(last.backward_input, 0.3 * full.backward_input);
  const auto frozen = flops_account(c, 4, 4, 4, [](const std::string&) { return false; });
  EXPECT_EQ(frozen.backward(), 0.0);
}

TEST(Flops, MonotoneInGridAndDepth) {
  const ViTConfig c = vit_cfg();
  for (std::size_t n = 1; n < 4; ++n)
    for (std::size_t l = 1; l <= 4; ++l) {
      EXPECT_LE(forward_flops(c, 3, n, l), forward_flops(c, 3, n + 1, l));
      if (l < 4) EXPECT_LE(forward_flops(c, 3, n, l), forward_flops(c, 3, n, l + 1));
    }
}

TEST(Flops, OrderingMatchesWallTime) {
  ViTConfig c = vit_cfg();
  c.embed_dim = 32;
  DatasetSpec ds;
  ds.side = 8;
  ds.classes = 3;
  ds.train_size = 32;
  ds.eval_size = 4;
  const Dataset data = make_dataset(ds, 1);
  Task task;
  task.data = &data;
  std::vector<double> flops, times;
  for (std::size_t l : {1, 2, 4}) {
    ViTConfig lc = c;
    lc.depth = l;
    auto m = build_vit(lc, 1);
    std::vector<double> reps;
    for (int r = 0; r < 7; ++r) {
      StepInput in;
      in.rows = sample_batch(32, 16, Rng(r, "batch"));
      in.grid = 4;
      const auto t0 = std::chrono::steady_clock::now();
      train_step(m, task, in, OptimizerConfig{}, 1e-3);
      reps.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(reps.begin(), reps.end());
    times.push_back(reps[3]);
    flops.push_back(flops_account(lc, 16, 4, l, all_learnable()).train());
  }
  EXPECT_LT(flops[0], flops[1]);
  EXPECT_LT(flops[1], flops[2]);
  EXPECT_LT(times[0], times[1]);
  EXPECT_LT(times[1], times[2]);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const fs::path dir = scratch("ckpt");
  auto m = build_vit(vit_cfg(), 3);
  for (auto& [n, p] : m.params()) {
    Rng rng(1, n);
    p.m = normal_tensor(p.value.shape(), rng);
    p.v = normal_tensor(p.value.shape(), rng);
    p.steps = 17;
  }
  m.set_learnable([](const std::string& n) { return n.rfind("head.", 0) == 0; });
  Tensor extra({2, 3}, std::vector<double>{1e-300, -0.0, 3.5, 1.0 / 3.0, 7, 8});
  const std::map<std::string, std::string> header = {{"mode", "baseline"}, {"rng", "abc"}};
  save_checkpoint((dir / "c.bin").string(), m, header, {{"ema/x", extra}});
  const Checkpoint back = load_checkpoint((dir / "c.bin").string());
  EXPECT_EQ(back.header.at("mode"), "baseline");
  EXPECT_EQ(back.header.at("rng"), "abc");
  EXPECT_EQ(back.model.config().depth, 4u);
  ASSERT_EQ(back.model.params().size(), m.params().size());
  for (const auto& [n, p] : m.params()) {
    const auto& q = back.model.param(n);
    EXPECT_TRUE(bitwise_equal(p.value, q.value)) << n;
    EXPECT_TRUE(bitwise_equal(p.m, q.m)) << n;
    EXPECT_TRUE(bitwise_equal(p.v, q.v)) << n;
    EXPECT_EQ(p.steps, q.steps);
    EXPECT_EQ(p.value.requires_grad(), q.value.requires_grad()) << n;
  }
  EXPECT_TRUE(bitwise_equal(back.extra.at("ema/x"), extra));
  EXPECT_FALSE(fs::exists(dir / "c.bin.tmp"));
}

TEST(Checkpoint, RejectsDamage) {
  const fs::path dir = scratch("ckpt_bad");
  save_checkpoint((dir / "c.bin").string(), build_vit(vit_cfg(), 1), {});
  const std::string bytes = read_file(dir / "c.bin");
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return (dir / name).string();
  };
  EXPECT_THROW(load_checkpoint(write("trunc.bin", bytes.substr(0, bytes.size() - 9))), CheckpointError);
  EXPECT_THROW(load_checkpoint(write("extra.bin", bytes + "x")), CheckpointError);
  std::string v = bytes;
  v[4] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(load_checkpoint(write("version.bin", v)), CheckpointError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.bin", magic)), CheckpointError);
  EXPECT_THROW(load_checkpoint((dir / "missing.bin").string()), CheckpointError);
}

TEST(RunLogFormat, CsvSchemaGolden) {
  std::ostringstream out;
  out << kMetricsHeader << "\n"
      << format_metrics({12, 2, "n=3,l=4,u=1.00", 1.25, 3.5e9, 17.0, std::nullopt, std::nullopt, 1.5e6, true}) << "\n"
      << format_metrics({7, 1, "n=4,l=4,u=0.25", 0.1, 2e6, 0.0, 878.5, -47.25, 5.7e7, true}) << "\n"
      << kTraceHeader << "\n"
      << format_trace({1, 3, "n=2,l=3,u=1.00", 4567, 1.0986122886681098, 2.5e6, 12.3456, 0.5, 1.75, false}) << "\n"
      << kProxyHeader << "\n"
      << format_proxy({2, 0, 953.2203348240995, -47.225948665875762, 57212928, 4.5, true}) << "\n";
  EXPECT_EQ(out.str(), read_file(fixture("csv_schema.txt")));
  EXPECT_EQ(spec_string(4, 3, 0.5), "n=4,l=3,u=0.50");
}

TEST(RunLogFiles, ResumeTruncatesToCheckpoint) {
  const fs::path dir = scratch("runlog");
  {
    RunLog log(dir.string());
    for (std::size_t s = 1; s <= 5; ++s) log.metrics({s, 1, "n=1,l=1,u=1.00", 1.0, 0, 0, {}, {}, 0, true});
    for (std::size_t i = 0; i < 3; ++i) log.trace({1, i, "x", 1, 1, 1, 0, 0, 1, false});
    log.flush();
  }
  RunLog again = RunLog::resume(dir.string(), 3, 2, 0);
  again.flush();
  std::string metrics = read_file(dir / "metrics.csv");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 4);
  std::string trace = read_file(dir / "trace.csv");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 3);
  EXPECT_EQ(again.trace_rows(), 2u);
}

TEST(Summary, RoundTrip) {
  const fs::path dir = scratch("summary");
  write_summary((dir / "s.txt").string(), {{"speedup", format_g17(1.5)}, {"schedule", "a;b"}});
  const auto s = read_summary((dir / "s.txt").string());
  EXPECT_EQ(s.at("speedup"), "1.5");
  EXPECT_EQ(s.at("schedule"), "a;b");
}
