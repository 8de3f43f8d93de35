#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "aesmc/elbo.hpp"
#include "aesmc/oracle.hpp"
#include "aesmc/particle.hpp"

namespace aesmc {
namespace {

std::vector<double> lgssm_data(std::size_t T, std::uint64_t seed = 2024) {
  Rng rng(seed);
  return lgssm_simulate({0.9, 1.0}, T, rng).observations;
}

TEST(NormalizeLogWeights, Examples) {
  const auto eq = normalize_log_weights(std::vector<double>{-3.0, -3.0, -3.0, -3.0});
  for (double w : eq) EXPECT_NEAR(w, 0.25, 1e-15);
  const auto one_hot = normalize_log_weights(std::vector<double>{0.0, -INFINITY});
  EXPECT_EQ(one_hot[0], 1.0);
  EXPECT_EQ(one_hot[1], 0.0);
  const auto r = normalize_log_weights(std::vector<double>{std::log(1.0), std::log(3.0)});
  EXPECT_NEAR(r[0], 0.25, 1e-15);
  EXPECT_NEAR(r[1], 0.75, 1e-15);
}

TEST(NormalizeLogWeights, HugeMagnitudesSumToOne) {
  const auto w = normalize_log_weights(std::vector<double>{-1e4, -1e4 + 1.0, -1e4 - 2.0});
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
}

TEST(NormalizeLogWeights, AllNegativeInfinityIsDegenerate) {
  EXPECT_THROW(normalize_log_weights(std::vector<double>{-INFINITY, -INFINITY}),
               DegenerateParticleError);
}

TEST(ResampleMultinomial, OneHot) {
  Rng rng(1);
  const auto a = resample_multinomial(std::vector<double>{0.0, 0.0, 1.0, 0.0}, 1000, rng);
  for (auto v : a) EXPECT_EQ(v, 2u);
}

TEST(ResampleMultinomial, UniformChiSquare) {
  Rng rng(2);
  const std::size_t K = 10, n = 100000;
  std::vector<double> w(K, 1.0 / K);
  std::vector<int> counts(K, 0);
  for (std::size_t rep = 0; rep < n / K; ++rep) {
    for (auto a : resample_multinomial(w, K, rng)) ++counts[a];
  }
  const double expected = static_cast<double>(n) / K;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 1% point of chi-square with 9 degrees of freedom.
  EXPECT_LT(chi2, 21.666);
}

TEST(ResampleMultinomial, BinomialFrequency) {
  Rng rng(3);
  const std::size_t n = 100000;
  const auto a = resample_multinomial(std::vector<double>{0.25, 0.75}, n, rng);
  const double freq = static_cast<double>(std::count(a.begin(), a.end(), 1u)) / n;
  EXPECT_NEAR(freq, 0.75, 3.0 * std::sqrt(0.75 * 0.25 / n));
}

TEST(ResampleMultinomial, DeterministicGivenState) {
  Rng a(4), b(4);
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(resample_multinomial(w, 50, a), resample_multinomial(w, 50, b));
}

TEST(IsBatch, PerfectProposalHasConstantWeights) {
  const GaussianSsm m = make_unknown_mean_model();
  const Gaussian1D post = conjugate_posterior_unknown_mean(2.3);
  const auto q = ProposalSpec::make_unknown_mean({post.mean, 2.0 * std::log(post.std)});
  const std::vector<double> y{2.3};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const IsBatch b = is_batch(m, q, y, 7, rng);
    for (double lw : b.log_weights) EXPECT_NEAR(lw, unknown_mean_log_marginal(2.3), 1e-12);
    EXPECT_NEAR(b.log_z_hat, unknown_mean_log_marginal(2.3), 1e-12);
  }
}

TEST(IsBatch, SingleParticleLogZIsTrajectoryWeight) {
  const auto y = lgssm_data(5);
  Rng rng(5);
  const IsBatch b = is_batch(make_lgssm({0.9, 1.0}), ProposalSpec::bootstrap(), y, 1, rng);
  EXPECT_EQ(b.log_z_hat, b.log_weights[0]);
  // Bootstrap weights are the emission densities.
  double expected = 0.0;
  const auto x = b.trajectory(0);
  for (std::size_t t = 0; t < 5; ++t) {
    expected += gaussian_logpdf(y[t], {x[t], std::sqrt(0.1)});
  }
  EXPECT_NEAR(b.log_weights[0], expected, 1e-10);
}

TEST(IsBatch, UnbiasedForUnknownMeanMarginal) {
  const GaussianSsm m = make_unknown_mean_model();
  const std::vector<double> y{2.3};
  Rng rng(6);
  const auto est = elbo_estimate(ObjectiveKind::kIs, m, ProposalSpec::bootstrap(), y, 1,
                                 1000000, rng);
  double mean = 0.0, sq = 0.0;
  for (double s : est.samples) mean += std::exp(s);
  mean /= est.samples.size();
  for (double s : est.samples) sq += (std::exp(s) - mean) * (std::exp(s) - mean);
  const double se = std::sqrt(sq / (est.samples.size() - 1) / est.samples.size());
  EXPECT_LE(std::abs(mean - std::exp(-2.5880192666023363)), 3.0 * se);
}

TEST(SmcSweep, SingleParticleMatchesIs) {
  const auto y = lgssm_data(6);
  const GaussianSsm m = make_lgssm({0.9, 1.0});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng a(seed), b(seed);
    EXPECT_NEAR(smc_sweep(m, ProposalSpec::bootstrap(), y, 1, a).log_z_hat,
                is_batch(m, ProposalSpec::bootstrap(), y, 1, b).log_z_hat, 1e-12);
  }
}

TEST(SmcSweep, ConstantEmissionGivesExactEstimate) {
  const GaussianSsm m = make_constant_emission_model(0.8);
  const std::vector<double> y{0.2, -0.5, 1.0, 0.3};
  double expected = 0.0;
  for (double v : y) expected += gaussian_logpdf(v, {0.0, std::sqrt(0.1)});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    EXPECT_NEAR(smc_sweep(m, ProposalSpec::bootstrap(), y, 8, rng).log_z_hat, expected, 1e-12);
  }
}

TEST(SmcSweep, ConstantEmissionEstimateIsSeedIndependentToTheBit) {
  const GaussianSsm m = make_constant_emission_model(0.8);
  const std::vector<double> y{0.2, -0.5, 1.0, 0.3, -0.7};
  Rng first(0);
  const double reference = smc_sweep(m, ProposalSpec::bootstrap(), y, 10, first).log_z_hat;
  for (std::uint64_t seed = 1; seed < 100; ++seed) {
    Rng rng(seed);
    EXPECT_EQ(smc_sweep(m, ProposalSpec::bootstrap(), y, 10, rng).log_z_hat, reference);
  }
}

TEST(SmcSweep, GenealogyIsConsistent) {
  const auto y = lgssm_data(8);
  const GaussianSsm m = make_lgssm({0.9, 1.0});
  AffineProposalParams p = locally_optimal_proposal(m);
  p.c = 0.1;
  const auto q = ProposalSpec::make_affine(p);
  Rng rng(7);
  const auto g = smc_sweep(m, q, y, 5, rng);
  // log Z-hat is the sum of per-step log mean weights, recomputed from the
  // stored log-weights.
  double lz = 0.0;
  for (std::size_t t = 0; t < g.horizon; ++t) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < 5; ++k) mx = std::max(mx, g.log_weights[t * 5 + k]);
    double s = 0.0;
    for (std::size_t k = 0; k < 5; ++k) s += std::exp(g.log_weights[t * 5 + k] - mx);
    lz += mx + std::log(s / 5.0);
  }
  EXPECT_NEAR(lz, g.log_z_hat, 1e-10);
  // Replaying the noises reproduces the particle values.
  for (std::size_t t = 0; t < g.horizon; ++t) {
    for (std::size_t k = 0; k < 5; ++k) {
      const std::optional<double> prev =
          t == 0 ? std::nullopt : std::optional<double>(g.value(t - 1, g.ancestor(t, k)));
      const Gaussian1D d = proposal_distribution(m, q, t, prev, y);
      EXPECT_EQ(gaussian_reparam(g.noises[t * 5 + k], d), g.value(t, k));
    }
  }
}

TEST(SmcSweep, UnbiasedAgainstKalman) {
  const auto y = lgssm_data(5);
  const GaussianSsm m = make_lgssm({0.9, 1.0});
  const double log_z = kalman_log_marginal(m, y);
  for (auto kind : {ObjectiveKind::kSmc, ObjectiveKind::kIs}) {
    Rng rng(8);
    const auto est = elbo_estimate(kind, m, ProposalSpec::bootstrap(), y, 10, 100000, rng);
    std::vector<double> ratio(est.samples.size());
    for (std::size_t i = 0; i < ratio.size(); ++i) ratio[i] = std::exp(est.samples[i] - log_z);
    double mean = std::accumulate(ratio.begin(), ratio.end(), 0.0) / ratio.size();
    double sq = 0.0;
    for (double r : ratio) sq += (r - mean) * (r - mean);
    const double se = std::sqrt(sq / (ratio.size() - 1) / ratio.size());
    EXPECT_LE(std::abs(mean - 1.0), 3.0 * se) << to_string(kind);
    // The ELBO bound.
    EXPECT_LE(est.mean, log_z + 3.0 * est.standard_error) << to_string(kind);
  }
}

TEST(SmcSweep, DegenerateWeightsCarryStep) {
  // A proposal this far out drives every log-weight at step 2 to -inf.
  const GaussianSsm m = make_lgssm({0.9, 1.0});
  AffineProposalParams p;
  p.c = 1e200;
  p.c1 = 0.0;
  p.log_var = -50.0;
  const std::vector<double> y{0.1, 0.2};
  Rng rng(9);
  try {
    smc_sweep(m, ProposalSpec::make_affine(p), y, 4, rng);
    FAIL() << "expected a degenerate particle system";
  } catch (const DegenerateParticleError& e) {
    EXPECT_EQ(e.step(), 1u);
  }
}

TEST(PosteriorFunctional, Examples) {
  const auto y = lgssm_data(4);
  Rng rng(10);
  const auto g = smc_sweep(make_lgssm({0.9, 1.0}), ProposalSpec::bootstrap(), y, 6, rng);
  EXPECT_NEAR(posterior_functional(g, std::vector<double>(6, 1.0)), 1.0, 1e-14);
  Rng rng1(11);
  const auto g1 = smc_sweep(make_lgssm({0.9, 1.0}), ProposalSpec::bootstrap(), y, 1, rng1);
  EXPECT_EQ(posterior_functional(g1, std::vector<double>{3.5}), 3.5);
  EXPECT_EQ(posterior_marginal_means(g1), g1.trajectory(0));
}

TEST(PosteriorFunctional, SmoothedMeansMatchKalman) {
  const auto y = lgssm_data(3);
  const GaussianSsm m = make_lgssm({0.9, 1.0});
  const auto kf = kalman_filter_smoother(m, y);
  // 3 MC standard deviations estimated from 50 independent sweeps.
  const int reps = 50;
  std::vector<std::vector<double>> means;
  Rng rng(12);
  for (int r = 0; r < reps; ++r) {
    Rng sub = rng.split();
    means.push_back(posterior_marginal_means(smc_sweep(m, ProposalSpec::bootstrap(), y, 10000,
                                                       sub)));
  }
  for (std::size_t t = 0; t < 3; ++t) {
    double mu = 0.0, sq = 0.0;
    for (const auto& v : means) mu += v[t];
    mu /= reps;
    for (const auto& v : means) sq += (v[t] - mu) * (v[t] - mu);
    const double sd = std::sqrt(sq / (reps - 1));
    EXPECT_LE(std::abs(means[0][t] - kf.smoothed_mean[t]), 3.0 * sd + 1e-12) << t;
    EXPECT_LE(std::abs(mu - kf.smoothed_mean[t]), 3.0 * sd / std::sqrt(reps) + 1e-12) << t;
  }
}

TEST(Discrete, InvalidSupportRejected) {
  DiscreteHmmSpec s;
  s.num_states = 2;
  s.num_obs_symbols = 2;
  s.initial = {0.5, 0.5};
  s.transition = {{0.5, 0.5}, {0.5, 0.5}};
  s.emission = {{0.5, 0.5}, {0.5, 0.5}};
  s.horizon = 2;
  DiscreteProposal q = discrete_bootstrap_proposal(s);
  q.initial = {1.0, 0.0};
  const std::vector<int> y{0, 1};
  Rng rng(1);
  EXPECT_THROW(is_batch(s, q, y, 2, rng), std::invalid_argument);
  EXPECT_THROW(smc_sweep(s, q, y, 2, rng), std::invalid_argument);
}

}  // namespace
}  // namespace aesmc
