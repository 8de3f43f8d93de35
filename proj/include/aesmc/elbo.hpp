#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aesmc/models.hpp"
#include "aesmc/rng.hpp"

namespace aesmc {

/// VAE is IS with a single particle.
enum class ObjectiveKind { kVae, kIs, kSmc };

std::string to_string(ObjectiveKind kind);
/// Parses "VAE", "IS" or "SMC" (case-insensitive).
ObjectiveKind parse_objective_kind(const std::string& text);

struct ElboEstimate {
  ObjectiveKind kind = ObjectiveKind::kSmc;
  std::size_t num_particles = 1;
  std::size_t replicates = 1;
  double mean = 0.0;
  double standard_error = 0.0;
  /// log Z-hat of every replicate, in replicate order.
  std::vector<double> samples;
};

/// Mean and standard error of log Z-hat over `replicates` independent sweeps.
/// Replicate r draws from Rng::derive(m, r) where m = rng.next_u64().
ElboEstimate elbo_estimate(ObjectiveKind kind, const GaussianSsm& model,
                           const ProposalSpec& proposal, std::span<const double> y,
                           std::size_t num_particles, std::size_t replicates, Rng& rng);
ElboEstimate elbo_estimate(ObjectiveKind kind, const DiscreteHmmSpec& spec,
                           const DiscreteProposal& proposal, std::span<const int> y,
                           std::size_t num_particles, std::size_t replicates, Rng& rng);

/// Average of per-sequence ELBO estimates. Every sequence is estimated with
/// the same master seed drawn once from `rng`.
double dataset_objective(ObjectiveKind kind, const GaussianSsm& model,
                         const ProposalSpec& proposal,
                         const std::vector<std::vector<double>>& dataset,
                         std::size_t num_particles, std::size_t replicates, Rng& rng);

struct KlGapReport {
  double log_z_exact = 0.0;
  double elbo_exact = 0.0;
  double kl_exact = 0.0;
  /// elbo_exact - (log_z_exact - kl_exact).
  double residual = 0.0;
  double configurations = 0.0;
};

inline constexpr double kMaxEnumeratedConfigurations = 1e6;

/// Exact ELBO_IS and KL(Q_IS || P_IS) by summing over all K-tuples of paths.
/// P_IS is evaluated from its mixture form, not as Q Z-hat / Z.
/// Throws std::invalid_argument when num_states^(T K) exceeds the budget.
KlGapReport enumerate_kl_gap_is(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                                std::span<const int> y, std::size_t num_particles);

/// Exact ELBO_SMC and KL(Q_SMC || P_SMC) over every particle value and
/// ancestor index. P_SMC is evaluated through the lineage of each final
/// particle rather than as Q Z-hat / Z. Intermediate targets are the
/// filtering distributions p(x_{1:t} | y_{1:t}).
KlGapReport enumerate_kl_gap_smc(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                                 std::span<const int> y, std::size_t num_particles);

}  // namespace aesmc
