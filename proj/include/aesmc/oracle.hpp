#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aesmc/models.hpp"

namespace aesmc {

/// Exact Gaussian filtering and RTS smoothing for a GaussianSsm.
struct KalmanResult {
  std::vector<double> predicted_mean;
  std::vector<double> predicted_var;
  std::vector<double> filtered_mean;
  std::vector<double> filtered_var;
  std::vector<double> smoothed_mean;
  std::vector<double> smoothed_var;
  /// cross_cov[t] = Cov(x_{t+1}, x_t | y_{1:T}), t = 0..T-2 (0-based).
  std::vector<double> smoothed_cross_cov;
  double log_marginal_likelihood = 0.0;
};

/// Throws std::invalid_argument on an empty sequence.
KalmanResult kalman_filter_smoother(const GaussianSsm& model, std::span<const double> y);
KalmanResult kalman_filter_smoother(LgssmParams theta, std::span<const double> y);

/// log p_theta(y_{1:T}) without storing the smoother pass.
double kalman_log_marginal(const GaussianSsm& model, std::span<const double> y);

struct EmResult {
  LgssmParams theta_hat;
  double log_marginal_at_optimum = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Exact log marginal at the initial point and after each iteration.
  std::vector<double> log_marginal_history;
};

inline constexpr int kDefaultEmMaxIters = 500;
inline constexpr double kDefaultEmTolerance = 1e-8;

/// EM for (theta1, theta2) of the benchmark LGSSM with the noise variances held
/// at their model values. Stops once the log-marginal gain drops below `tol`.
/// Requires T >= 2.
EmResult em_fit(std::span<const double> y, LgssmParams init, int max_iters = kDefaultEmMaxIters,
                double tol = kDefaultEmTolerance);

/// Posterior of mu given x for mu ~ N(0, 1), x | mu ~ N(mu, 1).
Gaussian1D conjugate_posterior_unknown_mean(double x_obs);

/// log p(x_obs) = log N(x_obs; 0, 2) for the same model.
double unknown_mean_log_marginal(double x_obs);

struct HmmForwardResult {
  double log_marginal = 0.0;
  /// filtered[t][s] = p(x_t = s | y_{1:t}).
  std::vector<std::vector<double>> filtered;
  /// log_normalizers[t] = log Z_t = log p(y_{1:t}).
  std::vector<double> log_normalizers;
};

/// Forward algorithm. Throws std::invalid_argument on invalid symbols.
HmmForwardResult hmm_forward(const DiscreteHmmSpec& spec, std::span<const int> y);

/// log gamma_t(x_{1:t}) = log p(x_{1:t}, y_{1:t}) for a path prefix.
double hmm_log_gamma(const DiscreteHmmSpec& spec, std::span<const int> y,
                     std::span<const int> prefix);

/// log pi_t(x_{1:t}) = log p(x_{1:t} | y_{1:t}) for a path prefix.
double hmm_log_pi(const DiscreteHmmSpec& spec, std::span<const int> y,
                  std::span<const int> prefix);

/// Markov chain equal to the smoothing posterior p(x_{1:T} | y_{1:T}):
/// q_1 = p(x_1 | y_{1:T}), q_t = p(x_t | x_{t-1}, y_{1:T}).
DiscreteProposal hmm_posterior_proposal(const DiscreteHmmSpec& spec, std::span<const int> y);

}  // namespace aesmc
