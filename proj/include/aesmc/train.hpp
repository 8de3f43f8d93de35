#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aesmc/elbo.hpp"
#include "aesmc/grad.hpp"
#include "aesmc/models.hpp"

namespace aesmc {

/// Thrown by sga_step when the gradient has a non-finite component.
class NonFiniteGradientError : public std::runtime_error {
 public:
  NonFiniteGradientError(const std::string& component, std::size_t step);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// params + lr * grad. `step` only labels the error.
ParamVector sga_step(const ParamVector& params, const ParamVector& grad, double lr,
                     std::size_t step = 0);

struct ObjectiveChoice {
  ObjectiveKind kind = ObjectiveKind::kSmc;
  std::size_t num_particles = 1;
};

/// Separate estimators for the model (theta) and proposal (phi) updates.
struct AltPair {
  ObjectiveChoice theta;
  ObjectiveChoice phi;
};

/// Proposal-quality evaluation attached to a training run.
struct QualityProbe {
  LgssmParams theta_ref;  ///< reference model, usually the EM optimum
  ObjectiveKind test_kind = ObjectiveKind::kSmc;
  std::size_t num_particles = 10;
  std::size_t replicates = 20;
  /// Evaluate every this many steps (0: only the final state).
  std::size_t cadence = 0;
};

struct TrainConfig {
  ObjectiveChoice objective;
  std::optional<AltPair> alt;  ///< when set, `objective` is ignored
  double learning_rate = 0.01;
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  ParamMask trainable = ParamMask::kBoth;
  std::size_t cadence = 1;
  /// With a bootstrap proposal, theta is not differentiated through q.
  bool detach_model_in_proposal = true;
  /// Ascend (1/T) ELBO rather than the ELBO itself.
  bool normalize_by_length = true;
  std::optional<QualityProbe> quality;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct QualityResult {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t replicates = 0;
  std::size_t degenerate = 0;  ///< replicates whose sweep degenerated
};

struct TraceRecord {
  std::size_t step = 0;
  ParamVector params;
  double elbo = 0.0;  ///< log Z-hat of the draw used for this step's gradient
  std::optional<double> exact_log_marginal;
  std::optional<QualityResult> quality;
  double wall_seconds = 0.0;  ///< not part of the reproducible output
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  bool diverged = false;
  std::string divergence_reason;
  ParamVector final_params;
};

/// SGA on the configured objective with grad_reparam. Step s draws from
/// Rng::derive(seed, s); for ALT the theta and phi estimators use two
/// generators split from it and both updates start from the same snapshot.
/// Divergence (non-finite gradient or parameters, degenerate sweep) ends the
/// trace early with `diverged` set.
TrainTrace train(const GaussianSsm& model, const ProposalSpec& proposal,
                 const std::vector<std::vector<double>>& dataset, const TrainConfig& config);
TrainTrace train(const GaussianSsm& model, const ProposalSpec& proposal,
                 std::span<const double> y, const TrainConfig& config);

/// sqrt(sum_t (exact_t - approx_t)^2).
double smoothed_mean_error(std::span<const double> exact, std::span<const double> approx);

/// sqrt(sum_t (mu_t^kalman - mu_t^approx)^2) averaged over `replicates` runs
/// of the test sampler with `proposal`, with both the weights and the Kalman
/// smoother under theta_ref. Replicate r uses Rng::derive(m, r), m = rng.next_u64().
QualityResult proposal_quality(LgssmParams theta_ref, const ProposalSpec& proposal,
                               std::span<const double> y, ObjectiveKind test_kind,
                               std::size_t num_particles, std::size_t replicates, Rng& rng);

struct InferGridConfig {
  LgssmParams theta;  ///< fixed model parameters during phi training
  std::vector<ObjectiveKind> train_kinds{ObjectiveKind::kIs, ObjectiveKind::kSmc};
  std::vector<std::size_t> train_particles{10, 100, 1000};
  std::vector<ObjectiveKind> test_kinds{ObjectiveKind::kIs, ObjectiveKind::kSmc};
  std::vector<std::size_t> test_particles{10, 100, 1000};
  AffineProposalParams init_proposal;
  double learning_rate = 0.01;
  std::size_t steps = 500;
  std::size_t replicates = 20;
  std::uint64_t seed = 0;
};

struct GridCell {
  ObjectiveKind train_kind = ObjectiveKind::kIs;
  std::size_t train_particles = 0;
  ObjectiveKind test_kind = ObjectiveKind::kIs;
  std::size_t test_particles = 0;
  QualityResult quality;
  bool diverged = false;
  AffineProposalParams learned;
};

/// Trains phi for every (train kind, K_train) with theta fixed and evaluates
/// the learned proposal with every (test kind, K_test). Cells are ordered
/// train kind, K_train, test kind, K_test.
std::vector<GridCell> infer_eval_grid(const InferGridConfig& config, std::span<const double> y);

}  // namespace aesmc
