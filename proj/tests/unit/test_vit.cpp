#include <gtest/gtest.h>

#include <cmath>

#include "autoprog/errors.hpp"
#include "autoprog/vit.hpp"

using namespace autoprog;

namespace {

ViTConfig small_classifier() {
  ViTConfig c;
  c.depth = 3;
  c.patch_grid = 4;
  c.patch_size = 2;
  c.embed_dim = 8;
  c.heads = 2;
  c.num_classes = 3;
  return c;
}

Tensor random_images(std::size_t b, std::size_t side, std::uint64_t seed) {
  Rng rng(seed, "images");
  return normal_tensor({b, 1, side, side}, rng);
}

Tensor classify(const VisionTransformer& m, const Tensor& x, const ForwardOptions& o = {}) {
  ad::Tape tape;
  return m.forward_classify(tape, x, o).value();
}

}  // namespace

TEST(ViT, ParameterCountMatchesFormula) {
  const ViTConfig c = small_classifier();
  const std::size_t d = c.embed_dim, r = c.mlp_ratio * d, cp = c.channels * c.patch_size * c.patch_size;
  const std::size_t block = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * r + r) + (r * d + d) + 1;
  const std::size_t expected = cp * d + d + c.patch_grid * c.patch_grid * d + c.depth * block + 2 * d + d * c.num_classes + c.num_classes;
  EXPECT_EQ(build_vit(c, 1).parameter_count(), expected);
}

TEST(ViT, ForwardShapeAndDeterminism) {
  const ViTConfig c = small_classifier();
  const auto m = build_vit(c, 7);
  const Tensor x = random_images(5, c.image_side(), 1);
  const Tensor a = classify(m, x), b = classify(m, x);
  EXPECT_EQ(a.shape(), (Shape{5, 3}));
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_TRUE(bitwise_equal(build_vit(c, 7).param("blocks.1.attn.qkv.weight").value, m.param("blocks.1.attn.qkv.weight").value));
  EXPECT_FALSE(bitwise_equal(build_vit(c, 8).param("blocks.1.attn.qkv.weight").value, m.param("blocks.1.attn.qkv.weight").value));
}

TEST(ViT, InitStatistics) {
  ViTConfig c = small_classifier();
  c.embed_dim = 32;
  const auto m = build_vit(c, 3);
  const Tensor& w = m.param("blocks.0.mlp.fc1.weight").value;
  double s = 0.0, s2 = 0.0, mx = 0.0;
  for (double v : w.data()) {
    s += v;
    s2 += v * v;
    mx = std::max(mx, std::abs(v));
  }
  const double n = static_cast<double>(w.numel());
  EXPECT_NEAR(s / n, 0.0, 0.005);
  // Truncation at two standard deviations shrinks the spread below 0.02.
  EXPECT_NEAR(std::sqrt(s2 / n), 0.02 * 0.88, 0.003);
  EXPECT_LE(mx, 0.04);
  for (double v : m.param("blocks.0.norm1.weight").value.data()) EXPECT_EQ(v, 1.0);
  for (double v : m.param("blocks.0.attn.qkv.bias").value.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(m.param("blocks.2.residual_scale").value[0], 1.0);
}

TEST(ViT, ResidualScaleFrozenUnlessLearnable) {
  auto m = build_vit(small_classifier(), 1);
  m.unfreeze_all();
  EXPECT_FALSE(m.param("blocks.0.residual_scale").value.requires_grad());
  EXPECT_TRUE(m.param("blocks.0.attn.qkv.weight").value.requires_grad());
  m.mutable_config().learnable_residual = true;
  m.unfreeze_all();
  EXPECT_TRUE(m.param("blocks.0.residual_scale").value.requires_grad());
}

TEST(ViT, SetLearnableCounts) {
  auto m = build_vit(small_classifier(), 1);
  m.set_learnable([](const std::string& n) { return n.rfind("head.", 0) == 0; });
  const auto c = small_classifier();
  EXPECT_EQ(m.learnable_count(), c.embed_dim * c.num_classes + c.num_classes);
  m.freeze_all();
  EXPECT_EQ(m.learnable_count(), 0u);
}

TEST(ViT, AlignCornersFixture) {
  const Tensor m = align_corners_matrix(2, 3);
  const std::vector<double> expected = {1, 0, 0.5, 0.5, 0, 1};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(m[i], expected[i]);
  const Tensor id = align_corners_matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(id[i * 4 + j], i == j ? 1.0 : 0.0);
}

TEST(ViT, AreaMatrixFixtures) {
  const Tensor a = area_matrix(4, 2);
  const std::vector<double> ea = {0.5, 0.5, 0, 0, 0, 0, 0.5, 0.5};
  for (std::size_t i = 0; i < ea.size(); ++i) EXPECT_DOUBLE_EQ(a[i], ea[i]);
  const Tensor b = area_matrix(3, 2);
  const std::vector<double> eb = {2.0 / 3, 1.0 / 3, 0, 0, 1.0 / 3, 2.0 / 3};
  for (std::size_t i = 0; i < eb.size(); ++i) EXPECT_NEAR(b[i], eb[i], 1e-15);
  EXPECT_THROW(area_matrix(2, 3), ShapeError);
}

TEST(ViT, ResizeInputAveragesBlocks) {
  Tensor x({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
  const Tensor y = resize_input(x, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  // Mean of {0,1,4,5} and so on.
  EXPECT_DOUBLE_EQ(y[0], 2.5);
  EXPECT_DOUBLE_EQ(y[1], 4.5);
  EXPECT_DOUBLE_EQ(y[2], 10.5);
  EXPECT_DOUBLE_EQ(y[3], 12.5);
  EXPECT_THROW(resize_input(x, 5, 1), ShapeError);
  EXPECT_TRUE(bitwise_equal(resize_input(x, 4, 1), x));
}

TEST(ViT, PosInterpolationReproducesLinearFields) {
  const std::size_t s = 3, t = 5, d = 2;
  Tensor pe({s, s, d});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      pe[(i * s + j) * d] = 2.0 * i + 3.0 * j;
      pe[(i * s + j) * d + 1] = -1.0 * i + 0.5;
    }
  const Tensor out = interpolate_pos_encoding(pe, t);
  ASSERT_EQ(out.shape(), (Shape{t, t, d}));
  const double scale = static_cast<double>(s - 1) / static_cast<double>(t - 1);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) {
      EXPECT_NEAR(out[(i * t + j) * d], 2.0 * i * scale + 3.0 * j * scale, 1e-12);
      EXPECT_NEAR(out[(i * t + j) * d + 1], -1.0 * i * scale + 0.5, 1e-12);
    }
}

TEST(ViT, GridOptionMatchesExplicitlyResizedModel) {
  const ViTConfig c = small_classifier();
  const auto m = build_vit(c, 11);
  const std::size_t n = 3;
  const Tensor x = resize_input(random_images(4, c.image_side(), 2), n, c.patch_size);
  ForwardOptions o;
  o.grid = n;
  auto small = m;
  small.mutable_config().patch_grid = n;
  small.param("pos_embed.grid").value = interpolate_pos_encoding(m.param("pos_embed.grid").value, n);
  EXPECT_TRUE(bitwise_equal(classify(m, x, o), classify(small, x)));
}

TEST(ViT, ActiveBlocksSubsetRuns) {
  const ViTConfig c = small_classifier();
  const auto m = build_vit(c, 1);
  const Tensor x = random_images(2, c.image_side(), 3);
  ForwardOptions all;
  all.active_blocks = std::vector<std::size_t>{0, 1, 2};
  EXPECT_TRUE(bitwise_equal(classify(m, x, all), classify(m, x)));
  ForwardOptions some;
  some.active_blocks = std::vector<std::size_t>{0, 2};
  EXPECT_FALSE(bitwise_equal(classify(m, x, some), classify(m, x)));
}

TEST(ViT, DropPathZeroIsIdentity) {
  const ViTConfig c = small_classifier();
  const auto m = build_vit(c, 1);
  const Tensor x = random_images(2, c.image_side(), 3);
  Rng rng(0, "drop");
  ForwardOptions o;
  o.drop_path = 0.0;
  o.drop_rng = &rng;
  EXPECT_TRUE(bitwise_equal(classify(m, x, o), classify(m, x)));
}

TEST(ViT, DenoiserShapeAndZeroSid) {
  ViTConfig c = small_classifier();
  c.kind = ModelKind::Denoiser;
  const auto plain = build_vit(c, 5);
  c.sid_stages = 3;
  auto with = build_vit(c, 5);
  const Tensor x = random_images(3, c.image_side(), 4);
  const std::vector<std::size_t> y = {0, 1, 2}, k = {1, 10, 100};
  ForwardOptions o;
  o.sid_stage = 2;
  ad::Tape t1, t2;
  const Tensor a = plain.forward_denoise(t1, x, y, k).value();
  const Tensor b = with.forward_denoise(t2, x, y, k, o).value();
  EXPECT_EQ(a.shape(), x.shape());
  EXPECT_TRUE(bitwise_equal(a, b));
  o.sid_stage = 3;
  ad::Tape t3;
  EXPECT_THROW(with.forward_denoise(t3, x, y, k, o), std::out_of_range);
}

TEST(ViT, TimestepFeatures) {
  const Tensor f = timestep_features({0, 3}, 4);
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[2], 1.0);
  EXPECT_DOUBLE_EQ(f[4], std::sin(3.0));
  EXPECT_DOUBLE_EQ(f[5], std::sin(3.0 * std::pow(10000.0, -0.5)));
}

TEST(ViT, Errors) {
  ViTConfig c = small_classifier();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  const auto m = build_vit(small_classifier(), 1);
  EXPECT_THROW(classify(m, random_images(1, 6, 1)), ShapeError);
}
