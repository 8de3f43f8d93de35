#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aesmc/elbo.hpp"
#include "aesmc/models.hpp"
#include "aesmc/rng.hpp"

namespace aesmc {

enum class ParamGroup { kModel, kProposal };
enum class ParamMask { kModel, kProposal, kBoth };

std::string to_string(ParamMask mask);
ParamMask parse_param_mask(const std::string& text);  // "theta", "phi" or "both"

/// Named real components spanning model (theta) and proposal (phi) parameters.
class ParamVector {
 public:
  void add(const std::string& name, ParamGroup group, double value);

  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  ParamGroup group(std::size_t i) const { return groups_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

  /// Throws std::out_of_range for an unknown name.
  std::size_t index_of(const std::string& name) const;
  double get(const std::string& name) const { return values_[index_of(name)]; }
  bool contains(const std::string& name) const;
  bool in_mask(std::size_t i, ParamMask mask) const;

  /// Same names and groups with all values zero.
  ParamVector zeros_like() const;
  /// Components outside `mask` set to zero.
  ParamVector masked(ParamMask mask) const;
  bool same_layout(const ParamVector& other) const;

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator*=(double s);

 private:
  std::vector<std::string> names_;
  std::vector<ParamGroup> groups_;
  std::vector<double> values_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator*(double s, ParamVector a);

/// theta1, theta2, then the proposal's own parameters: a, b, c, log_var, b1,
/// c1, log_var1 (affine) or mu_q, log_var_q (unknown mean); none for bootstrap.
ParamVector pack_params(const GaussianSsm& model, const ProposalSpec& proposal);

/// Writes the values of `params` back into model and proposal.
void unpack_params(const ParamVector& params, GaussianSsm& model, ProposalSpec& proposal);

enum class GradEstimator {
  kReparam,           ///< reparameterized log Z-hat, ancestor score dropped
  kReinforceReparam,  ///< reparameterized plus ancestor-score correction
  kReinforceFull,     ///< score function of every sampled quantity
};

std::string to_string(GradEstimator estimator);
GradEstimator parse_grad_estimator(const std::string& text);

struct GradientSample {
  ParamVector gradient;  ///< layout of pack_params
  double log_z_hat = 0.0;
};

/// One draw of the gradient of log Z-hat with the ancestor-sampling score term
/// omitted. With `detach_model_in_proposal` and a bootstrap proposal, theta
/// reaches the gradient only through the model densities.
GradientSample grad_reparam(ObjectiveKind kind, const GaussianSsm& model,
                            const ProposalSpec& proposal, std::span<const double> y,
                            std::size_t num_particles, Rng& rng,
                            bool detach_model_in_proposal = false);

/// Reparameterized gradient plus grad log P(ancestors) * log Z-hat; unbiased
/// for the gradient of ELBO_SMC.
GradientSample grad_reinforce_reparam(ObjectiveKind kind, const GaussianSsm& model,
                                      const ProposalSpec& proposal, std::span<const double> y,
                                      std::size_t num_particles, Rng& rng,
                                      bool detach_model_in_proposal = false);

/// Score-function estimator over the full sampling distribution:
/// grad log Q(particles, ancestors) * log Z-hat + grad log Z-hat at fixed draws.
GradientSample grad_reinforce_full(ObjectiveKind kind, const GaussianSsm& model,
                                   const ProposalSpec& proposal, std::span<const double> y,
                                   std::size_t num_particles, Rng& rng,
                                   bool detach_model_in_proposal = false);

/// Everything needed to draw gradient samples from one estimator.
struct GradientProblem {
  GradEstimator estimator = GradEstimator::kReparam;
  ObjectiveKind kind = ObjectiveKind::kSmc;
  GaussianSsm model;
  ProposalSpec proposal;
  std::vector<double> y;
  bool detach_model_in_proposal = false;
};

GradientSample draw_gradient(const GradientProblem& problem, std::size_t num_particles, Rng& rng);

/// `count` independent gradient draws; draw n uses Rng::derive(m, n) with
/// m = rng.next_u64().
std::vector<GradientSample> sample_gradients(const GradientProblem& problem,
                                             std::size_t num_particles, std::size_t count,
                                             Rng& rng);

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for each component
/// in `mask`; other components are zero. `f` must use common random numbers
/// across calls for the differences to be meaningful.
ParamVector finite_difference(const std::function<double(const ParamVector&)>& f,
                              const ParamVector& at, double h, ParamMask mask);

struct ComponentStats {
  std::string name;
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (n - 1 denominator)
  double standard_error = 0.0;
  double snr = 0.0;  ///< |mean| / std; NaN when std == 0
  std::vector<double> samples;  ///< filled only when raw samples are kept
};

struct GradStats {
  std::size_t num_particles = 0;
  std::size_t count = 0;
  std::vector<ComponentStats> components;

  /// Throws std::out_of_range for an unknown name.
  const ComponentStats& component(const std::string& name) const;
};

GradStats gradient_stats(const std::vector<GradientSample>& samples, ParamMask mask,
                         bool keep_samples);

/// GradStats for each K in `particle_counts`, each from `count` draws.
std::vector<GradStats> snr_profile(const GradientProblem& problem, ParamMask mask,
                                   const std::vector<std::size_t>& particle_counts,
                                   std::size_t count, Rng& rng, bool keep_samples = false);

/// Approximate standard error of an SNR estimate from n samples.
double snr_standard_error(double snr, std::size_t n);

/// Least-squares slope of log snr against log K.
double log_log_slope(std::span<const double> particle_counts, std::span<const double> snr);

struct VarianceRatioTest {
  double log_ratio = 0.0;  ///< log(s1^2 / s2^2)
  double threshold = 0.0;  ///< sigma_multiple * sqrt(2/(n1-1) + 2/(n2-1))
  bool significant = false;  ///< log_ratio > threshold
};

/// One-sided test that the first sample has the larger variance, using the
/// normal approximation to the log variance ratio.
VarianceRatioTest variance_ratio_test(std::span<const double> first,
                                      std::span<const double> second,
                                      double sigma_multiple = 3.0);

/// Sample mean and unbiased sample variance.
struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;
};
MeanVar mean_and_variance(std::span<const double> values);

}  // namespace aesmc
