#pragma once

// Generic IS / SMC sweep shared by the particle, elbo and grad modules.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include "aesmc/dual.hpp"
#include "aesmc/models.hpp"
#include "aesmc/particle.hpp"
#include "aesmc/rng.hpp"

namespace aesmc::detail {

enum class Resampling { kNone, kMultinomial };

template <typename S>
struct IsDual : std::false_type {};
template <std::size_t N>
struct IsDual<Dual<N>> : std::true_type {};

/// log (1/K sum_k exp(lw_k)); fills `wbar` with the normalized weights.
/// Returns -inf when no weight is positive.
template <typename S>
S log_mean_exp(std::span<const S> lw, std::vector<double>& wbar) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double m = kNegInf;
  for (const S& x : lw) m = std::max(m, value_of(x));
  wbar.resize(lw.size());
  if (!(m > kNegInf)) return S(kNegInf);
  double sum = 0.0;
  for (std::size_t k = 0; k < lw.size(); ++k) {
    wbar[k] = std::exp(value_of(lw[k]) - m);
    sum += wbar[k];
  }
  for (auto& w : wbar) w /= sum;
  S out(m + std::log(sum / static_cast<double>(lw.size())));
  if constexpr (IsDual<S>::value) {
    for (std::size_t k = 0; k < lw.size(); ++k) {
      if (wbar[k] == 0.0) continue;
      for (std::size_t i = 0; i < out.d.size(); ++i) out.d[i] += wbar[k] * lw[k].d[i];
    }
  }
  return out;
}

/// Optional per-step storage of a sweep.
struct SweepRecord {
  std::vector<double> values;
  std::vector<double> noises;
  std::vector<double> log_weights;
  std::vector<std::size_t> ancestors;
  std::vector<double> log_mean_weights;
  std::vector<double> cumulative_log_weights;  // IS only
};

template <typename S>
struct SweepTotals {
  S log_z_hat{};
  S log_proposal_sum{};   ///< sum of log q over every proposed particle
  S log_ancestor_prob{};  ///< sum of log wbar_{t-1}^{a_{t-1}^k}
};

/// Runs Algorithm-1 style SMC (kMultinomial) or plain sequential IS (kNone).
///
/// Kernel provides: Scalar, State, horizon(), and
/// step(t, const State* parent, Rng& noise) -> {x, log_weight, log_q, noise}.
/// Noises and ancestor uniforms come from two substreams split off `rng`, so
/// IS and SMC consume identical noises given the same generator state.
template <typename Kernel>
SweepTotals<typename Kernel::Scalar> run_sweep(const Kernel& kernel, std::size_t num_particles,
                                               Resampling resampling, Rng& rng,
                                               SweepRecord* record, bool track_scores) {
  using S = typename Kernel::Scalar;
  using State = typename Kernel::State;
  const std::size_t T = kernel.horizon();
  const std::size_t K = num_particles;
  if (K == 0) throw std::invalid_argument("number of particles must be >= 1");
  if (T == 0) throw std::invalid_argument("horizon must be >= 1");

  Rng noise_rng = rng.split();
  Rng ancestor_rng = rng.split();

  std::vector<State> current(K);
  std::vector<State> parents(K);
  std::vector<S> logw(K);
  std::vector<S> cumulative;
  std::vector<double> wbar;
  std::vector<std::size_t> ancestors(K);
  S previous_lse{};
  SweepTotals<S> totals;
  totals.log_z_hat = S(0.0);
  totals.log_proposal_sum = S(0.0);
  totals.log_ancestor_prob = S(0.0);

  if (resampling == Resampling::kNone) cumulative.assign(K, S(0.0));
  if (record != nullptr) {
    record->values.resize(T * K);
    record->noises.resize(T * K);
    record->log_weights.resize(T * K);
    record->ancestors.resize((T - 1) * K);
    record->log_mean_weights.clear();
  }

  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      if (resampling == Resampling::kMultinomial) {
        ancestors = resample_multinomial(wbar, K, ancestor_rng);
        for (std::size_t k = 0; k < K; ++k) parents[k] = current[ancestors[k]];
        if (track_scores) {
          for (std::size_t k = 0; k < K; ++k) {
            totals.log_ancestor_prob += logw[ancestors[k]] - previous_lse;
          }
        }
      } else {
        for (std::size_t k = 0; k < K; ++k) ancestors[k] = k;
        std::swap(parents, current);
      }
      if (record != nullptr) {
        std::copy(ancestors.begin(), ancestors.end(), record->ancestors.begin() + (t - 1) * K);
      }
    }

    for (std::size_t k = 0; k < K; ++k) {
      auto step = kernel.step(t, t == 0 ? nullptr : &parents[k], noise_rng);
      if (std::isnan(value_of(step.log_weight))) throw DegenerateParticleError(t);
      current[k] = step.x;
      logw[k] = step.log_weight;
      if (track_scores) totals.log_proposal_sum += step.log_q;
      if (record != nullptr) {
        record->values[t * K + k] = Kernel::to_double(step.x);
        record->noises[t * K + k] = step.noise;
        record->log_weights[t * K + k] = value_of(step.log_weight);
      }
    }

    if (resampling == Resampling::kMultinomial) {
      const S lme = log_mean_exp<S>(logw, wbar);
      if (!std::isfinite(value_of(lme))) throw DegenerateParticleError(t);
      totals.log_z_hat += lme;
      if (track_scores) previous_lse = lme + std::log(static_cast<double>(K));
      if (record != nullptr) record->log_mean_weights.push_back(value_of(lme));
    } else {
      for (std::size_t k = 0; k < K; ++k) cumulative[k] += logw[k];
    }
  }

  if (resampling == Resampling::kNone) {
    const S lme = log_mean_exp<S>(cumulative, wbar);
    if (!std::isfinite(value_of(lme))) throw DegenerateParticleError(T - 1);
    totals.log_z_hat = lme;
    if (record != nullptr) {
      record->cumulative_log_weights.resize(K);
      for (std::size_t k = 0; k < K; ++k) {
        record->cumulative_log_weights[k] = value_of(cumulative[k]);
      }
    }
  }
  return totals;
}

/// Sweep kernel for a GaussianSsm with a Gaussian proposal family.
///
/// With `reparameterize` set, x = mean + exp(log_var / 2) eps carries
/// derivatives; otherwise particles are constants and only densities do.
template <typename S>
class GaussianKernel {
 public:
  using Scalar = S;
  using State = S;

  struct Step {
    S x;
    S log_weight;
    S log_q;
    double noise;
  };

  GaussianKernel(const GaussianSsm& model, ProposalKind kind, const SsmScalars<S>& params,
                 std::span<const double> y, bool reparameterize)
      : model_(model),
        constants_(ssm_constants(model)),
        kind_(kind),
        params_(params),
        y_(y),
        reparameterize_(reparameterize) {}

  std::size_t horizon() const { return y_.size(); }

  Step step(std::size_t t, const S* parent, Rng& noise_rng) const {
    using std::exp;
    S mean{};
    S log_var{};
    proposal_moments(model_, kind_, params_, t, parent, y_[t], mean, log_var);
    const double eps = noise_rng.normal();
    S x;
    S log_q;
    if (reparameterize_) {
      // (x - mean) / sd == eps identically in the parameters, so the density
      // needs no division.
      x = mean + exp(0.5 * log_var) * eps;
      log_q = (-kHalfLogTwoPi - 0.5 * eps * eps) - 0.5 * log_var;
    } else {
      x = S(value_of(mean) + std::exp(0.5 * value_of(log_var)) * eps);
      log_q = normal_logpdf_logvar(x, mean, log_var);
    }
    S prior_ratio = model_log_prior(constants_, params_, t, parent, x) - log_q;
    // A bootstrap proposal is the prior, so the ratio is exactly zero; rounding
    // would otherwise make constant weights differ. Tangents survive detach.
    if (kind_ == ProposalKind::kBootstrap) prior_ratio = with_value(prior_ratio, 0.0);
    return {x, prior_ratio + model_log_emission(constants_, params_, x, y_[t]), log_q, eps};
  }

  static double to_double(const S& x) { return value_of(x); }

 private:
  const GaussianSsm& model_;
  SsmConstants constants_;
  ProposalKind kind_;
  SsmScalars<S> params_;
  std::span<const double> y_;
  bool reparameterize_;
};

/// Categorical index for uniform u by inverse CDF; ties go to the lower index.
std::size_t sample_categorical(std::span<const double> probs, double u);

/// Sweep kernel for a discrete HMM with a Markov proposal.
class DiscreteKernel {
 public:
  using Scalar = double;
  using State = int;

  struct Step {
    int x;
    double log_weight;
    double log_q;
    double noise;
  };

  DiscreteKernel(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                 std::span<const int> y)
      : spec_(spec), proposal_(proposal), y_(y) {}

  std::size_t horizon() const { return y_.size(); }

  Step step(std::size_t t, const int* parent, Rng& noise_rng) const;

  static double to_double(int x) { return static_cast<double>(x); }

 private:
  const DiscreteHmmSpec& spec_;
  const DiscreteProposal& proposal_;
  std::span<const int> y_;
};

/// Throws std::invalid_argument if the proposal puts zero mass where the
/// model puts positive mass.
void check_discrete_support(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                            std::span<const int> y);

}  // namespace aesmc::detail
