#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "aesmc/rng.hpp"

namespace aesmc {

// ---------------------------------------------------------------------------
// Gaussian toolkit
// ---------------------------------------------------------------------------

inline constexpr double kHalfLogTwoPi = 0.91893853320467274178;

struct Gaussian1D {
  double mean = 0.0;
  double std = 1.0;

  /// Throws std::invalid_argument unless std > 0 and both fields are finite.
  void validate() const;
};

/// log N(x; mean, std^2). Throws std::invalid_argument on non-finite input.
double gaussian_logpdf(double x, const Gaussian1D& g);

/// mean + std * eps.
double gaussian_reparam(double eps, const Gaussian1D& g);

/// log N(x; mean, exp(log_var)) for any scalar type (double or Dual).
template <typename S>
S normal_logpdf_logvar(const S& x, const S& mean, const S& log_var) {
  using std::exp;
  const S diff = x - mean;
  return -kHalfLogTwoPi - 0.5 * log_var - diff * diff / (2.0 * exp(log_var));
}

// ---------------------------------------------------------------------------
// Gaussian state-space models
// ---------------------------------------------------------------------------

/// Transition coefficient theta1 and emission coefficient theta2.
/// No stationarity constraint: |theta1| >= 1 is allowed.
struct LgssmParams {
  double theta1 = 0.0;
  double theta2 = 0.0;
};

/// Scalar linear-Gaussian state-space model
///
///   x_1 ~ N(0, initial_std^2)
///   x_t ~ N(theta1 x_{t-1}, transition_std^2)
///   y_t ~ N(theta2 x_t, emission_std^2)
///
/// With constant_emission set, y_t ~ N(0, emission_std^2) independently of
/// both x_t and theta2, which makes every bootstrap weight the same constant.
struct GaussianSsm {
  LgssmParams theta;
  double initial_std = 1.0;
  double transition_std = 1.0;
  double emission_std = std::sqrt(0.1);
  bool constant_emission = false;

  void validate() const;
};

/// The benchmark LGSSM: unit initial/transition noise, emission variance 0.1.
GaussianSsm make_lgssm(LgssmParams theta);

/// Unknown-mean model mu ~ N(0, 1), x | mu ~ N(mu, 1) as a horizon-1 SSM.
GaussianSsm make_unknown_mean_model();

/// LGSSM whose emission density does not depend on the latent state.
GaussianSsm make_constant_emission_model(double theta1);

struct SimulatedSequence {
  std::vector<double> latents;
  std::vector<double> observations;
};

/// Ancestral sample of (x_{1:T}, y_{1:T}). Requires T >= 1.
SimulatedSequence simulate(const GaussianSsm& model, std::size_t horizon, Rng& rng);

SimulatedSequence lgssm_simulate(LgssmParams theta, std::size_t horizon, Rng& rng);

/// log p(x_{1:T}, y_{1:T}).
double log_joint(const GaussianSsm& model, std::span<const double> latents,
                 std::span<const double> observations);

// ---------------------------------------------------------------------------
// Proposal families
// ---------------------------------------------------------------------------

/// q_1(x_1 | y_1) = N(b1 y_1 + c1, exp(log_var1)),
/// q_t(x_t | x_{t-1}, y_t) = N(a x_{t-1} + b y_t + c, exp(log_var)) for t >= 2.
struct AffineProposalParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double log_var = 0.0;
  double b1 = 0.0;
  double c1 = 0.0;
  double log_var1 = 0.0;
};

/// q(mu) = N(mu_q, exp(log_var_q)); horizon-1 models only.
struct UnknownMeanProposalParams {
  double mu_q = 0.0;
  double log_var_q = 0.0;
};

enum class ProposalKind { kBootstrap, kAffine, kUnknownMean };

std::string to_string(ProposalKind kind);

struct ProposalSpec {
  ProposalKind kind = ProposalKind::kBootstrap;
  AffineProposalParams affine;
  UnknownMeanProposalParams unknown_mean;

  static ProposalSpec bootstrap() { return {}; }
  static ProposalSpec make_affine(const AffineProposalParams& p) {
    return {ProposalKind::kAffine, p, {}};
  }
  static ProposalSpec make_unknown_mean(const UnknownMeanProposalParams& p) {
    return {ProposalKind::kUnknownMean, {}, p};
  }
};

/// Affine parameters reproducing the bootstrap proposal of `model` exactly.
AffineProposalParams bootstrap_as_affine(const GaussianSsm& model);

/// Affine parameters of the exact one-step conditionals p(x_1 | y_1) and
/// p(x_t | x_{t-1}, y_t) of `model`.
AffineProposalParams locally_optimal_proposal(const GaussianSsm& model);

/// Proposal distribution at step t (0-based). `previous` must be set for t >= 1.
Gaussian1D proposal_distribution(const GaussianSsm& model, const ProposalSpec& proposal,
                                 std::size_t t, std::optional<double> previous,
                                 std::span<const double> observations);

/// log q_t(x_t | x_{1:t-1}, y_{1:t}) at 0-based step t.
///
/// `history` holds x_{1:t-1} (at least t entries for t >= 1) and
/// `observations` at least y_{1:t}. Throws std::invalid_argument when the
/// history is missing.
double proposal_density(const GaussianSsm& model, const ProposalSpec& proposal, std::size_t t,
                        double x, std::span<const double> history,
                        std::span<const double> observations);

namespace detail {

/// Model and proposal parameters lifted to a generic scalar type.
template <typename S>
struct SsmScalars {
  S theta1{}, theta2{};
  S bootstrap_theta1{};  // transition coefficient used by the bootstrap proposal
  S a{}, b{}, c{}, log_var{}, b1{}, c1{}, log_var1{};
  S mu_q{}, log_var_q{};
};

template <typename S>
SsmScalars<S> constant_scalars(const GaussianSsm& model, const ProposalSpec& proposal) {
  SsmScalars<S> s;
  s.theta1 = S(model.theta.theta1);
  s.theta2 = S(model.theta.theta2);
  s.bootstrap_theta1 = S(model.theta.theta1);
  s.a = S(proposal.affine.a);
  s.b = S(proposal.affine.b);
  s.c = S(proposal.affine.c);
  s.log_var = S(proposal.affine.log_var);
  s.b1 = S(proposal.affine.b1);
  s.c1 = S(proposal.affine.c1);
  s.log_var1 = S(proposal.affine.log_var1);
  s.mu_q = S(proposal.unknown_mean.mu_q);
  s.log_var_q = S(proposal.unknown_mean.log_var_q);
  return s;
}

/// Proposal mean and log-variance at 0-based step t.
template <typename S>
void proposal_moments(const GaussianSsm& model, ProposalKind kind, const SsmScalars<S>& p,
                      std::size_t t, const S* previous, double y_t, S& mean, S& log_var) {
  switch (kind) {
    case ProposalKind::kBootstrap:
      if (t == 0) {
        mean = S(0.0);
        log_var = S(2.0 * std::log(model.initial_std));
      } else {
        mean = p.bootstrap_theta1 * *previous;
        log_var = S(2.0 * std::log(model.transition_std));
      }
      return;
    case ProposalKind::kAffine:
      if (t == 0) {
        mean = p.b1 * y_t + p.c1;
        log_var = p.log_var1;
      } else {
        mean = p.a * *previous + p.b * y_t + p.c;
        log_var = p.log_var;
      }
      return;
    case ProposalKind::kUnknownMean:
      if (t != 0) throw std::invalid_argument("unknown-mean proposal supports horizon 1 only");
      mean = p.mu_q;
      log_var = p.log_var_q;
      return;
  }
}

/// Fixed noise scales of a GaussianSsm in the form the densities need.
struct SsmConstants {
  double initial_log_norm, initial_inv_var;
  double transition_log_norm, transition_inv_var;
  double emission_log_norm, emission_inv_var;
  bool constant_emission;
};

inline SsmConstants ssm_constants(const GaussianSsm& model) {
  auto log_norm = [](double sd) { return -kHalfLogTwoPi - std::log(sd); };
  return {log_norm(model.initial_std),    1.0 / (model.initial_std * model.initial_std),
          log_norm(model.transition_std), 1.0 / (model.transition_std * model.transition_std),
          log_norm(model.emission_std),   1.0 / (model.emission_std * model.emission_std),
          model.constant_emission};
}

/// log mu(x_1) or log f(x_t | x_{t-1}).
template <typename S>
S model_log_prior(const SsmConstants& k, const SsmScalars<S>& p, std::size_t t,
                  const S* previous, const S& x) {
  if (t == 0) return k.initial_log_norm - 0.5 * k.initial_inv_var * (x * x);
  const S d = x - p.theta1 * *previous;
  return k.transition_log_norm - 0.5 * k.transition_inv_var * (d * d);
}

/// log g(y_t | x_t).
template <typename S>
S model_log_emission(const SsmConstants& k, const SsmScalars<S>& p, const S& x, double y_t) {
  if (k.constant_emission) {
    return S(k.emission_log_norm - 0.5 * k.emission_inv_var * y_t * y_t);
  }
  const S e = y_t - p.theta2 * x;
  return k.emission_log_norm - 0.5 * k.emission_inv_var * (e * e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Discrete HMM (exact-enumeration testbed)
// ---------------------------------------------------------------------------

using Matrix = std::vector<std::vector<double>>;

/// Finite-state HMM over a fixed horizon. Observations are symbol indices.
struct DiscreteHmmSpec {
  std::size_t num_states = 0;
  std::size_t num_obs_symbols = 0;
  std::vector<double> initial;
  Matrix transition;  // transition[i][j] = p(x_t = j | x_{t-1} = i)
  Matrix emission;    // emission[i][o] = p(y_t = o | x_t = i)
  std::size_t horizon = 0;

  /// Throws std::invalid_argument unless all rows are probability vectors
  /// (non-negative, summing to 1 within 1e-12) of the right sizes.
  void validate() const;

  /// Throws std::invalid_argument unless y has `horizon` in-alphabet symbols.
  void validate_observations(std::span<const int> y) const;
};

/// Markov proposal for a discrete HMM with the observations held fixed:
/// q_1(x_1) = initial, q_t(x_t | x_{t-1}) = steps[t - 2][x_{t-1}][x_t].
struct DiscreteProposal {
  std::vector<double> initial;
  std::vector<Matrix> steps;

  void validate(const DiscreteHmmSpec& spec) const;
};

/// Proposal sampling from the HMM's own prior dynamics.
DiscreteProposal discrete_bootstrap_proposal(const DiscreteHmmSpec& spec);

/// log p(x_{1:t}, y_{1:t}) for the path prefix `path` (t = path.size()).
double discrete_log_joint(const DiscreteHmmSpec& spec, std::span<const int> path,
                          std::span<const int> y);

/// log q(x_{1:t}) for the path prefix `path`.
double discrete_log_proposal(const DiscreteProposal& proposal, std::span<const int> path);

/// Random spec with Dirichlet(1)-like rows drawn from `rng`; all entries positive.
DiscreteHmmSpec random_discrete_hmm(std::size_t num_states, std::size_t num_obs_symbols,
                                    std::size_t horizon, Rng& rng);

}  // namespace aesmc
