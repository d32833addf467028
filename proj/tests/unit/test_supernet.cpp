#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "autoprog/supernet.hpp"
#include "autoprog/trainer.hpp"

using namespace autoprog;

namespace {

ViTConfig full_cfg() {
  ViTConfig c;
  c.depth = 4;
  c.patch_grid = 4;
  c.patch_size = 2;
  c.embed_dim = 8;
  c.heads = 2;
  c.num_classes = 3;
  return c;
}

ViTConfig at(ViTConfig c, const SubNetworkSpec& s) {
  c.patch_grid = s.n;
  c.depth = s.second;
  return c;
}

GrowthSpace space4() { return build_growth_space({0.5, 4, 400, 0, true, true}, 4, 4); }

bool subset(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

void expect_nesting(const ElasticSupernet& net) {
  for (const auto& a : net.candidates())
    for (const auto& b : net.candidates()) {
      if (net.parameter_count(a) <= net.parameter_count(b)) {
        EXPECT_TRUE(subset(net.parameter_names(a), net.parameter_names(b)));
      }
    }
}

Tensor logits(const VisionTransformer& m, const Tensor& x, const ForwardOptions& o = {}) {
  ad::Tape tape;
  return m.forward_classify(tape, x, o).value();
}

}  // namespace

TEST(Space, RatioLadder) {
  const auto r = ratio_ladder(0.5, 4);
  EXPECT_EQ(r, (std::vector<double>{0.5, 0.67, 0.83, 1.0}));
  EXPECT_EQ(ratio_ladder(0.25, 4), (std::vector<double>{0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(ratio_ladder(0.3, 1), (std::vector<double>{1.0}));
}

TEST(Space, ResolveRoundsHalfUpAndDeduplicates) {
  const auto v = resolve_ladder({0.5, 0.67, 0.83, 1.0}, 6);
  std::vector<std::size_t> got;
  for (const auto& x : v) got.push_back(x.value);
  EXPECT_EQ(got, (std::vector<std::size_t>{3, 4, 5, 6}));
  const auto d = resolve_ladder({0.5, 0.67, 0.83, 1.0}, 4);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[1].value, 3u);
  EXPECT_DOUBLE_EQ(d[1].ratio, 0.67);
  EXPECT_EQ(resolve_ladder({0.1}, 2).front().value, 1u);
  EXPECT_EQ(round_half_up(2.5), 3u);
}

TEST(Space, FirstStageCrossesSmallestMedianLargest) {
  const GrowthSpace s = build_growth_space({0.5, 4, 400, 0, true, true}, 12, 12);
  ASSERT_EQ(s.n_ladder.size(), 4u);
  const auto c = stage_candidates(s, s.smallest(), 1);
  ASSERT_EQ(c.size(), 9u);
  std::set<std::pair<double, double>> ratios;
  for (const auto& sp : c) ratios.insert({sp.n_ratio, sp.second_ratio});
  std::set<std::pair<double, double>> expected;
  for (double a : {0.5, 0.67, 1.0})
    for (double b : {0.5, 0.67, 1.0}) expected.insert({a, b});
  EXPECT_EQ(ratios, expected);
}

TEST(Space, LaterStagesGrowFromPrevious) {
  const GrowthSpace s = build_growth_space({0.5, 4, 400, 0, true, true}, 12, 12);
  const auto prev = s.spec(1, 0);
  const auto c = stage_candidates(s, prev, 2);
  EXPECT_EQ(c.size(), 8u);
  for (const auto& sp : c) {
    EXPECT_GE(sp.n, prev.n);
    EXPECT_GE(sp.second, prev.second);
    EXPECT_LE(sp.n_index, prev.n_index + 1);
  }
  EXPECT_EQ(stage_candidates(s, s.full(), 2), std::vector<SubNetworkSpec>{s.full()});
  EXPECT_EQ(stage_candidates(s, prev, 4), std::vector<SubNetworkSpec>{s.full()});
  SubNetworkSpec off = prev;
  off.n = 5;
  EXPECT_THROW(stage_candidates(s, off, 2), std::invalid_argument);
}

TEST(Space, UnfreezeLadder) {
  const GrowthSpace s = build_growth_space({0.25, 4, 400, 0, false, true}, 4, 8);
  const auto c = stage_candidates(s, s.smallest(), 1);
  std::set<double> r;
  for (const auto& sp : c) r.insert(sp.second_ratio);
  EXPECT_TRUE(r.count(0.25));
  EXPECT_TRUE(r.count(1.0));
  for (const auto& sp : c) EXPECT_EQ(sp.n, 4u);
}

TEST(Space, Errors) {
  EXPECT_THROW(build_growth_space({0.5, 3, 400, 0, true, true}, 4, 4), std::invalid_argument);
  EXPECT_THROW(build_growth_space({0.5, 0, 400, 0, true, true}, 4, 4), std::invalid_argument);
}

TEST(Supernet, NestingHoldsBeforeAndAfterTraining) {
  const GrowthSpace s = space4();
  const auto cands = stage_candidates(s, s.smallest(), 1);
  const auto base = build_vit(at(full_cfg(), s.smallest()), 1);
  auto net = build_supernet(base, cands, GrowthKind::Interpolation, nullptr, 2);
  expect_nesting(net);

  DatasetSpec ds;
  ds.classes = 3;
  ds.side = 8;
  ds.train_size = 64;
  ds.eval_size = 8;
  const Dataset data = make_dataset(ds, 4);
  Task task;
  task.data = &data;
  OptimizerConfig opt;
  for (std::size_t step = 0; step < 100; ++step) {
    Rng pick = Rng(9, "sample").derive(step);
    const auto& spec = net.sample(pick);
    StepInput in;
    in.rows = sample_batch(64, 4, Rng(9, "batch").derive(step));
    in.grid = spec.n;
    in.opts = net.options(spec);
    train_step(net.store(), task, in, opt, 1e-2);
  }
  expect_nesting(net);

  for (const auto& spec : cands) {
    const auto sub = net.extract(spec);
    EXPECT_EQ(sub.config().depth, spec.second);
    EXPECT_EQ(sub.config().patch_grid, spec.n);
    EXPECT_EQ(sub.parameter_count(), net.parameter_count(spec));
    const Tensor x = batch_images(data.eval_x, {0, 1, 2, 3}, spec.n, 2);
    EXPECT_TRUE(bitwise_equal(logits(sub, x), logits(net.store(), x, net.options(spec))));
  }
}

TEST(Supernet, SingleCandidateIsPlainModel) {
  const GrowthSpace s = space4();
  const auto base = build_vit(at(full_cfg(), s.spec(1, 1)), 3);
  const auto net = build_supernet(base, {s.spec(1, 1)}, GrowthKind::Interpolation, nullptr, 2);
  for (const auto& [name, p] : base.params()) EXPECT_TRUE(bitwise_equal(net.store().param(name).value, p.value));
  Rng rng(1, "sample");
  for (int i = 0; i < 5; ++i) EXPECT_EQ(net.sample(rng), s.spec(1, 1));
  Rng img(2, "x");
  const Tensor x = normal_tensor({2, 1, 6, 6}, img);
  EXPECT_TRUE(bitwise_equal(logits(base, x), logits(net.store(), x, net.options(s.spec(1, 1)))));
}

TEST(Supernet, SamplingIsUniformAndSeeded) {
  const GrowthSpace s = space4();
  const auto cands = stage_candidates(s, s.smallest(), 1);
  const auto net = build_supernet(build_vit(at(full_cfg(), s.smallest()), 1), cands, GrowthKind::Interpolation, nullptr, 2);
  std::map<std::size_t, int> hits;
  Rng a(5, "sample"), b(5, "sample");
  for (int i = 0; i < 4500; ++i) {
    const auto& x = net.sample(a);
    EXPECT_EQ(x, net.sample(b));
    ++hits[net.index_of(x)];
  }
  ASSERT_EQ(hits.size(), cands.size());
  for (const auto& [i, h] : hits) EXPECT_NEAR(h, 4500.0 / cands.size(), 100.0);
}

TEST(Supernet, ForeignSpecRejected) {
  const GrowthSpace s = space4();
  const auto net = build_supernet(build_vit(at(full_cfg(), s.smallest()), 1), {s.smallest(), s.spec(0, 1)},
                                  GrowthKind::Interpolation, nullptr, 2);
  EXPECT_THROW(net.index_of(s.full()), std::invalid_argument);
  EXPECT_THROW(net.extract(s.full()), std::invalid_argument);
}

TEST(Supernet, MomentumExtractionFollowsStore) {
  const GrowthSpace s = space4();
  const auto cands = stage_candidates(s, s.smallest(), 1);
  auto net = build_supernet(build_vit(at(full_cfg(), s.smallest()), 1), cands, GrowthKind::Interpolation, nullptr, 2);
  const auto mn = make_momentum_network(net.store(), 0.9);
  for (const auto& spec : cands) {
    const auto sub_mn = net.extract_momentum(mn, spec);
    const auto sub = net.extract(spec);
    ASSERT_EQ(sub_mn.shadow.size(), sub.params().size());
    for (const auto& [name, p] : sub.params()) EXPECT_TRUE(bitwise_equal(sub_mn.shadow.at(name), p.value)) << name;
  }
}
