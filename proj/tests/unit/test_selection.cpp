#include <gtest/gtest.h>

#include <cmath>

#include "autoprog/diffusion.hpp"
#include "autoprog/errors.hpp"
#include "autoprog/selection.hpp"

using namespace autoprog;

TEST(Alpha, BalancesLogRanges) {
  EXPECT_DOUBLE_EQ(balance_alpha({{1, 1, 0}, {2, 4, 0}}), 0.5);
  EXPECT_EQ(balance_alpha({{1, 3, 0}, {2, 3, 0}}), 0.0);
  EXPECT_EQ(balance_alpha({{2, 1, 0}, {2, 4, 0}}), 0.0);
  EXPECT_EQ(balance_alpha({{1, 1, 0}, {1e9, 1.0001, 0}}), 10.0);
  EXPECT_THROW(balance_alpha({}), std::invalid_argument);
  EXPECT_THROW(balance_alpha({{0, 1, 0}}), std::invalid_argument);
}

TEST(Score, WeightedProduct) {
  EXPECT_DOUBLE_EQ(score_candidate(2, 4, 0.5), 4.0);
  EXPECT_EQ(score_candidate(3.25, 100, 0), 3.25);
  const std::vector<CandidateResult> r = {{1.0, 2.0, 0}, {0.7, 5.0, 0}, {0.9, 3.0, 0}};
  auto scaled = r;
  for (auto& x : scaled) x.t *= 17.0;
  for (double a : {0.0, 0.3, 1.0, 2.0}) {
    EXPECT_EQ(select_candidate(scaled, a), select_candidate(r, a));
    EXPECT_NEAR(score_candidate(0.7, 5.0 * 17.0, a), std::pow(17.0, a) * score_candidate(0.7, 5.0, a), 1e-12);
  }
}

TEST(Select, TieBreaks) {
  // Equal scores: smaller T wins.
  EXPECT_EQ(select_candidate({{2, 4, 0}, {4, 1, 0}}, 0.5), 1u);
  // Equal score and T: fewer parameters.
  EXPECT_EQ(select_candidate({{1, 2, 9}, {1, 2, 3}}, 1.0), 1u);
  // All equal: candidate order.
  EXPECT_EQ(select_candidate({{1, 2, 3}, {1, 2, 3}}, 1.0), 0u);
  EXPECT_EQ(select_candidate({{1, 2, 3}, {0.5, 2, 3}}, 1.0), 1u);
}

TEST(AdaReg, LinearRamp) {
  EXPECT_EQ(adaptive_regularization(0.0, 0.1, 0.3), 0.1);
  EXPECT_DOUBLE_EQ(adaptive_regularization(0.5, 0.1, 0.3), 0.2);
  EXPECT_EQ(adaptive_regularization(1.0, 0.1, 0.3), 0.3);
  EXPECT_THROW(adaptive_regularization(0.5, 0.4, 0.3), std::invalid_argument);
  EXPECT_THROW(adaptive_regularization(1.5, 0.1, 0.3), std::invalid_argument);
}

TEST(Diffusion, LinearSchedule) {
  const NoiseSchedule s(100, 1e-4, 0.02);
  EXPECT_EQ(s.timesteps(), 100u);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta(100), 0.02);
  EXPECT_NEAR(s.beta(50), 1e-4 + 49.0 * (0.02 - 1e-4) / 99.0, 1e-15);
  double prod = 1.0;
  for (std::size_t k = 1; k <= 100; ++k) {
    prod *= 1.0 - (1e-4 + static_cast<double>(k - 1) * (0.02 - 1e-4) / 99.0);
    EXPECT_NEAR(s.alpha_bar(k), prod, 1e-12);
  }
  EXPECT_THROW(s.beta(0), std::out_of_range);
  EXPECT_THROW(s.alpha_bar(101), std::out_of_range);
}

TEST(Diffusion, ForwardFormula) {
  const NoiseSchedule s;
  const Tensor x0({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor noise({2, 1, 1, 2}, std::vector<double>{0.5, -1, 2, 0});
  const Tensor xt = diffuse_forward(s, x0, {1, 100}, noise);
  const double a1 = s.alpha_bar(1), a2 = s.alpha_bar(100);
  EXPECT_DOUBLE_EQ(xt[0], std::sqrt(a1) * 1 + std::sqrt(1 - a1) * 0.5);
  EXPECT_DOUBLE_EQ(xt[3], std::sqrt(a2) * 4);
  EXPECT_THROW(diffuse_forward(s, x0, {1}, noise), ShapeError);
}

TEST(Diffusion, MonteCarloMoments) {
  const NoiseSchedule s;
  const std::size_t n = 20000;
  const Tensor x0({n, 1, 1, 1}, 2.0);
  const std::vector<std::size_t> k(n, 60);
  Rng rng(3, "noise");
  const Tensor xt = diffuse_forward(s, x0, k, normal_tensor({n, 1, 1, 1}, rng));
  double m = 0, m2 = 0;
  for (double v : xt.data()) {
    m += v;
    m2 += v * v;
  }
  m /= n;
  const double var = m2 / n - m * m;
  const double ab = s.alpha_bar(60);
  EXPECT_NEAR(m, 2.0 * std::sqrt(ab), 4.0 * std::sqrt((1 - ab) / n));
  EXPECT_NEAR(var, 1 - ab, 0.05 * (1 - ab));
}

TEST(Diffusion, BatchAndPredictors) {
  const NoiseSchedule s;
  Rng rng(1, "x");
  const Tensor x0 = normal_tensor({64, 1, 4, 4}, rng);
  const DiffusionBatch b = make_diffusion_batch(s, x0, std::vector<std::size_t>(64, 0), Rng(2, "noise"));
  for (std::size_t k : b.timesteps) {
    EXPECT_GE(k, 1u);
    EXPECT_LE(k, 100u);
  }
  EXPECT_TRUE(bitwise_equal(b.x_t, diffuse_forward(s, x0, b.timesteps, b.noise)));
  const DiffusionBatch again = make_diffusion_batch(s, x0, std::vector<std::size_t>(64, 0), Rng(2, "noise"));
  EXPECT_TRUE(bitwise_equal(b.noise, again.noise));

  ad::Tape t1;
  const NoisePredictor oracle = [&](ad::Tape& t, const Tensor&, const auto&, const auto&) { return t.constant(b.noise); };
  EXPECT_EQ(denoise_loss(t1, oracle, b).value().item(), 0.0);

  ad::Tape t2;
  const NoisePredictor zero = [&](ad::Tape& t, const Tensor& x, const auto&, const auto&) {
    return t.constant(Tensor(x.shape()));
  };
  double expected = 0.0;
  for (double v : b.noise.data()) expected += v * v;
  EXPECT_NEAR(denoise_loss(t2, zero, b).value().item(), expected / 64.0, 1e-12);
  // Per-sample noise energy is 16 on average.
  EXPECT_NEAR(expected / 64.0, 16.0, 3.0);
}
