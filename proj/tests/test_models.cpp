#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "aesmc/models.hpp"
#include "aesmc/oracle.hpp"
#include "support/oracles.hpp"

namespace aesmc {
namespace {

TEST(GaussianLogpdf, StandardNormalAtZero) {
  EXPECT_NEAR(gaussian_logpdf(0.0, {0.0, 1.0}), -0.91893853320467274, 1e-15);
}

TEST(GaussianLogpdf, UnknownMeanMarginal) {
  EXPECT_NEAR(gaussian_logpdf(2.3, {0.0, std::sqrt(2.0)}), -2.5880121234846454, 1e-12);
}

TEST(GaussianLogpdf, ModeDominates) {
  for (double m : {-3.0, 0.0, 1.7}) {
    for (double s : {0.1, 1.0, 4.0}) {
      EXPECT_GT(gaussian_logpdf(m, {m, s}), gaussian_logpdf(m + s, {m, s}));
    }
  }
}

TEST(GaussianLogpdf, RejectsInvalidInput) {
  EXPECT_THROW(gaussian_logpdf(std::nan(""), {0.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(gaussian_logpdf(0.0, {0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(gaussian_logpdf(0.0, {INFINITY, 1.0}), std::invalid_argument);
}

TEST(GaussianLogpdf, DecreasesAwayFromMean) {
  const Gaussian1D g{0.5, 2.0};
  double prev = gaussian_logpdf(0.5, g);
  for (double d = 0.25; d < 10.0; d += 0.25) {
    const double v = gaussian_logpdf(0.5 + d, g);
    EXPECT_LT(v, prev);
    EXPECT_DOUBLE_EQ(v, gaussian_logpdf(0.5 - d, g));
    prev = v;
  }
}

TEST(GaussianReparam, Examples) {
  EXPECT_EQ(gaussian_reparam(0.0, {3.0, 2.0}), 3.0);
  EXPECT_EQ(gaussian_reparam(1.0, {0.0, 1.0}), 1.0);
}

TEST(GaussianReparam, KolmogorovSmirnovAgainstTarget) {
  const Gaussian1D g{1.5, 0.7};
  Rng rng(11);
  const int n = 10000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = gaussian_reparam(rng.normal(), g);
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = 0.5 * std::erfc(-(xs[i] - g.mean) / (g.std * std::sqrt(2.0)));
    d = std::max({d, std::abs(cdf - static_cast<double>(i) / n),
                  std::abs(cdf - static_cast<double>(i + 1) / n)});
  }
  // Asymptotic KS critical value at alpha = 0.01.
  EXPECT_LT(d, 1.628 / std::sqrt(static_cast<double>(n)));
}

TEST(GaussianReparam, ChangeOfVariables) {
  // log N(eps; 0, 1) - log std equals the target density at the pushforward.
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const Gaussian1D g{4.0 * rng.uniform() - 2.0, 0.1 + 3.0 * rng.uniform()};
    const double eps = rng.normal();
    EXPECT_NEAR(gaussian_logpdf(gaussian_reparam(eps, g), g),
                gaussian_logpdf(eps, {0.0, 1.0}) - std::log(g.std), 1e-12);
  }
}

TEST(Simulate, LengthAndDeterminism) {
  Rng a(2024), b(2024);
  const auto s1 = lgssm_simulate({0.9, 1.0}, 200, a);
  const auto s2 = lgssm_simulate({0.9, 1.0}, 200, b);
  EXPECT_EQ(s1.latents.size(), 200u);
  EXPECT_EQ(s1.observations.size(), 200u);
  EXPECT_EQ(s1.latents, s2.latents);
  EXPECT_EQ(s1.observations, s2.observations);
}

TEST(Simulate, IndependentStatesHaveUnitVariance) {
  Rng rng(5);
  const auto s = lgssm_simulate({0.0, 0.3}, 100000, rng);
  double m = 0.0, v = 0.0;
  for (double x : s.latents) m += x;
  m /= s.latents.size();
  for (double x : s.latents) v += (x - m) * (x - m);
  v /= s.latents.size() - 1;
  EXPECT_NEAR(v, 1.0, 0.05);
}

TEST(Simulate, LagOneAutocorrelation) {
  Rng rng(6);
  const std::size_t n = 200000;
  const auto s = lgssm_simulate({0.9, 1.0}, n, rng);
  // Drop a burn-in so the chain is close to stationary.
  const std::vector<double> x(s.latents.begin() + 1000, s.latents.end());
  double m = 0.0;
  for (double v : x) m += v;
  m /= x.size();
  double c0 = 0.0, c1 = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    c0 += (x[t] - m) * (x[t] - m);
    if (t + 1 < x.size()) c1 += (x[t] - m) * (x[t + 1] - m);
  }
  // The AR(1) lag-one estimator has standard deviation about sqrt((1 - 0.81) / n).
  EXPECT_NEAR(c1 / c0, 0.9, 4.0 * std::sqrt(0.19 / x.size()));
}

TEST(Simulate, RejectsEmptyHorizon) {
  Rng rng(1);
  EXPECT_THROW(lgssm_simulate({0.9, 1.0}, 0, rng), std::invalid_argument);
}

TEST(LogJoint, MatchesDirectSum) {
  const GaussianSsm m = make_lgssm({0.7, 1.3});
  const std::vector<double> x{0.2, -0.4, 1.1};
  const std::vector<double> y{0.5, -0.3, 1.6};
  double expected = testing::normal_pdf(x[0], 0.0, 1.0);
  expected = std::log(expected);
  for (std::size_t t = 1; t < 3; ++t) {
    expected += std::log(testing::normal_pdf(x[t], 0.7 * x[t - 1], 1.0));
  }
  for (std::size_t t = 0; t < 3; ++t) {
    expected += std::log(testing::normal_pdf(y[t], 1.3 * x[t], 0.1));
  }
  EXPECT_NEAR(log_joint(m, x, y), expected, 1e-12);
}

TEST(ProposalDensity, BootstrapFirstStepIsPrior) {
  const GaussianSsm m = make_lgssm({0.9, 1.0});
  const std::vector<double> y{0.4};
  for (double x : {-1.0, 0.0, 2.5}) {
    EXPECT_NEAR(proposal_density(m, ProposalSpec::bootstrap(), 0, x, {}, y),
                gaussian_logpdf(x, {0.0, 1.0}), 1e-14);
  }
}

TEST(ProposalDensity, AffineNestsBootstrap) {
  const GaussianSsm m = make_lgssm({0.9, 1.0});
  AffineProposalParams p;
  p.a = 0.9;
  const auto q = ProposalSpec::make_affine(p);
  const std::vector<double> y{0.4, -0.2};
  const std::vector<double> history{0.7};
  for (double x : {-1.0, 0.0, 2.5}) {
    EXPECT_NEAR(proposal_density(m, q, 1, x, history, y),
                proposal_density(m, ProposalSpec::bootstrap(), 1, x, history, y), 1e-14);
  }
  EXPECT_EQ(bootstrap_as_affine(m).a, 0.9);
}

TEST(ProposalDensity, LocallyOptimalMatchesConditional) {
  // p(x_t | x_{t-1}, y_t) for prior N(theta1 x_{t-1}, 1), likelihood
  // N(y_t; theta2 x_t, 0.1): precision 1 + theta2^2 / 0.1.
  const double th1 = 0.9, th2 = 1.0;
  const GaussianSsm m = make_lgssm({th1, th2});
  const auto q = ProposalSpec::make_affine(locally_optimal_proposal(m));
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const double prev = 2.0 * rng.normal();
    const std::vector<double> y{0.0, 3.0 * rng.normal()};
    const double x = rng.normal();
    const double var = 1.0 / (1.0 + th2 * th2 / 0.1);
    const double mean = var * (th1 * prev + th2 * y[1] / 0.1);
    const std::vector<double> history{prev};
    EXPECT_NEAR(proposal_density(m, q, 1, x, history, y),
                std::log(testing::normal_pdf(x, mean, var)), 1e-10);
  }
  // First step conditions the N(0, 1) prior on y_1.
  const std::vector<double> y1{1.2};
  const double var1 = 1.0 / (1.0 + th2 * th2 / 0.1);
  EXPECT_NEAR(proposal_density(m, q, 0, 0.3, {}, y1),
              std::log(testing::normal_pdf(0.3, var1 * th2 * 1.2 / 0.1, var1)), 1e-10);
}

TEST(ProposalDensity, MissingHistoryThrows) {
  const GaussianSsm m = make_lgssm({0.9, 1.0});
  const std::vector<double> y{0.4, -0.2};
  EXPECT_THROW(proposal_density(m, ProposalSpec::bootstrap(), 1, 0.0, {}, y),
               std::invalid_argument);
}

TEST(DiscreteHmm, ValidationRejectsBadRows) {
  DiscreteHmmSpec spec;
  spec.num_states = 2;
  spec.num_obs_symbols = 2;
  spec.initial = {0.6, 0.5};
  spec.transition = {{0.5, 0.5}, {0.5, 0.5}};
  spec.emission = {{0.5, 0.5}, {0.5, 0.5}};
  spec.horizon = 2;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.initial = {0.5, 0.5};
  EXPECT_NO_THROW(spec.validate());
  spec.transition[1] = {1.2, -0.2};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(DiscreteHmm, RandomSpecsAreValid) {
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const auto spec = random_discrete_hmm(3, 2, 4, rng);
    EXPECT_NO_THROW(spec.validate());
    for (const auto& row : spec.transition) {
      double s = 0.0;
      for (double v : row) {
        EXPECT_GT(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(DiscreteHmm, ForwardMatchesBruteForce) {
  Rng rng(10);
  for (std::size_t S = 1; S <= 3; ++S) {
    for (std::size_t T = 1; T <= 4; ++T) {
      const auto spec = random_discrete_hmm(S, 2, T, rng);
      std::vector<int> y(T);
      for (auto& v : y) v = static_cast<int>(rng.next_u64() % 2);
      EXPECT_NEAR(hmm_forward(spec, y).log_marginal, testing::brute_force_log_marginal(spec, y),
                  1e-12);
    }
  }
}

}  // namespace
}  // namespace aesmc
