#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "aesmc/models.hpp"
#include "aesmc/rng.hpp"

namespace aesmc {

/// Thrown when every particle weight at some step is zero (log-weight -inf) or
/// a weight is NaN. `step()` is the 0-based step at which it happened.
class DegenerateParticleError : public std::runtime_error {
 public:
  explicit DegenerateParticleError(std::size_t step);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// exp(logw_k - logsumexp(logw)). Throws DegenerateParticleError (step 0)
/// when no entry is finite.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// `count` i.i.d. categorical draws from `wbar` by inverse CDF on the
/// cumulative array; a uniform landing on a tie goes to the lower index.
std::vector<std::size_t> resample_multinomial(std::span<const double> wbar, std::size_t count,
                                              Rng& rng);

/// Full record of one SMC sweep. Arrays are step-major: entry (t, k) lives at
/// t * K + k with 0-based t and k.
struct ParticleGenealogy {
  std::size_t horizon = 0;
  std::size_t num_particles = 0;
  std::vector<double> values;       ///< x_t^k
  std::vector<double> noises;       ///< eps_t^k (uniforms for discrete models)
  std::vector<double> log_weights;  ///< log w_t^k
  /// ancestors[(t - 1) * K + k]: index at step t-1 of the parent of particle k
  /// at step t, for t = 1..T-1.
  std::vector<std::size_t> ancestors;
  std::vector<double> log_mean_weights;  ///< log (1/K sum_k w_t^k)
  double log_z_hat = 0.0;

  double value(std::size_t t, std::size_t k) const { return values[t * num_particles + k]; }
  std::size_t ancestor(std::size_t t, std::size_t k) const {
    return ancestors[(t - 1) * num_particles + k];
  }
  /// Reconstructed trajectory x~_{1:T}^k of final particle k.
  std::vector<double> trajectory(std::size_t k) const;
  std::vector<double> final_normalized_weights() const;
};

/// K independent full-trajectory proposals with their importance weights.
struct IsBatch {
  std::size_t horizon = 0;
  std::size_t num_particles = 0;
  std::vector<double> values;       ///< x_t^k at t * K + k
  std::vector<double> noises;
  std::vector<double> log_weights;  ///< log w^k of the whole trajectory
  double log_z_hat = 0.0;

  std::vector<double> trajectory(std::size_t k) const;
  std::vector<double> normalized_weights() const;
};

/// Importance sampling with the trajectory proposal prod_t q_t (no resampling).
IsBatch is_batch(const GaussianSsm& model, const ProposalSpec& proposal,
                 std::span<const double> y, std::size_t num_particles, Rng& rng);
IsBatch is_batch(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                 std::span<const int> y, std::size_t num_particles, Rng& rng);

/// One SMC sweep with multinomial resampling at every step t >= 2. Latent
/// draws use gaussian_reparam on recorded standard-normal noises.
ParticleGenealogy smc_sweep(const GaussianSsm& model, const ProposalSpec& proposal,
                            std::span<const double> y, std::size_t num_particles, Rng& rng);
ParticleGenealogy smc_sweep(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                            std::span<const int> y, std::size_t num_particles, Rng& rng);

/// Self-normalized estimate sum_k wbar_T^k phi(x~^k) given phi evaluated on
/// each final trajectory.
double posterior_functional(const ParticleGenealogy& genealogy,
                            std::span<const double> test_values);

/// mu_t^approx = sum_k wbar_T^k x~_t^k for every t.
std::vector<double> posterior_marginal_means(const ParticleGenealogy& genealogy);
std::vector<double> posterior_marginal_means(const IsBatch& batch);

}  // namespace aesmc
