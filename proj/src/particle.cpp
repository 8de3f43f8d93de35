#include "aesmc/particle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "aesmc/detail/sweep.hpp"

namespace aesmc {

DegenerateParticleError::DegenerateParticleError(std::size_t step)
    : std::runtime_error("degenerate particle system at step " + std::to_string(step + 1)),
      step_(step) {}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  if (log_weights.empty()) throw std::invalid_argument("no log-weights to normalize");
  for (double v : log_weights) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw DegenerateParticleError(0);
    }
  }
  std::vector<double> wbar;
  const double lme = detail::log_mean_exp<double>(log_weights, wbar);
  if (!std::isfinite(lme)) throw DegenerateParticleError(0);
  return wbar;
}

std::vector<std::size_t> resample_multinomial(std::span<const double> wbar, std::size_t count,
                                              Rng& rng) {
  if (wbar.empty()) throw std::invalid_argument("empty weight vector");
  std::vector<double> cumulative(wbar.size());
  std::partial_sum(wbar.begin(), wbar.end(), cumulative.begin());
  const double total = cumulative.back();
  // Last index with positive mass, for uniforms that round onto the total.
  std::size_t last = wbar.size() - 1;
  while (last > 0 && wbar[last] <= 0.0) --last;

  std::vector<std::size_t> out(count);
  for (auto& a : out) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    a = std::min(static_cast<std::size_t>(it - cumulative.begin()), last);
  }
  return out;
}

namespace {

ParticleGenealogy to_genealogy(detail::SweepRecord&& rec, std::size_t horizon, std::size_t K,
                               double log_z_hat) {
  ParticleGenealogy g;
  g.horizon = horizon;
  g.num_particles = K;
  g.values = std::move(rec.values);
  g.noises = std::move(rec.noises);
  g.log_weights = std::move(rec.log_weights);
  g.ancestors = std::move(rec.ancestors);
  g.log_mean_weights = std::move(rec.log_mean_weights);
  g.log_z_hat = log_z_hat;
  return g;
}

IsBatch to_batch(detail::SweepRecord&& rec, std::size_t horizon, std::size_t K,
                 double log_z_hat) {
  IsBatch b;
  b.horizon = horizon;
  b.num_particles = K;
  b.values = std::move(rec.values);
  b.noises = std::move(rec.noises);
  b.log_weights = std::move(rec.cumulative_log_weights);
  b.log_z_hat = log_z_hat;
  return b;
}

}  // namespace

std::vector<double> ParticleGenealogy::trajectory(std::size_t k) const {
  std::vector<double> path(horizon);
  std::size_t idx = k;
  for (std::size_t t = horizon; t-- > 0;) {
    path[t] = value(t, idx);
    if (t > 0) idx = ancestor(t, idx);
  }
  return path;
}

std::vector<double> ParticleGenealogy::final_normalized_weights() const {
  const std::span<const double> last(log_weights.data() + (horizon - 1) * num_particles,
                                     num_particles);
  try {
    return normalize_log_weights(last);
  } catch (const DegenerateParticleError&) {
    throw DegenerateParticleError(horizon - 1);
  }
}

std::vector<double> IsBatch::trajectory(std::size_t k) const {
  std::vector<double> path(horizon);
  for (std::size_t t = 0; t < horizon; ++t) path[t] = values[t * num_particles + k];
  return path;
}

std::vector<double> IsBatch::normalized_weights() const {
  return normalize_log_weights(log_weights);
}

IsBatch is_batch(const GaussianSsm& model, const ProposalSpec& proposal,
                 std::span<const double> y, std::size_t num_particles, Rng& rng) {
  model.validate();
  const detail::GaussianKernel<double> kernel(
      model, proposal.kind, detail::constant_scalars<double>(model, proposal), y, true);
  detail::SweepRecord rec;
  const auto totals =
      detail::run_sweep(kernel, num_particles, detail::Resampling::kNone, rng, &rec, false);
  return to_batch(std::move(rec), y.size(), num_particles, totals.log_z_hat);
}

IsBatch is_batch(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                 std::span<const int> y, std::size_t num_particles, Rng& rng) {
  detail::check_discrete_support(spec, proposal, y);
  const detail::DiscreteKernel kernel(spec, proposal, y);
  detail::SweepRecord rec;
  const auto totals =
      detail::run_sweep(kernel, num_particles, detail::Resampling::kNone, rng, &rec, false);
  return to_batch(std::move(rec), y.size(), num_particles, totals.log_z_hat);
}

ParticleGenealogy smc_sweep(const GaussianSsm& model, const ProposalSpec& proposal,
                            std::span<const double> y, std::size_t num_particles, Rng& rng) {
  model.validate();
  const detail::GaussianKernel<double> kernel(
      model, proposal.kind, detail::constant_scalars<double>(model, proposal), y, true);
  detail::SweepRecord rec;
  const auto totals = detail::run_sweep(kernel, num_particles, detail::Resampling::kMultinomial,
                                        rng, &rec, false);
  return to_genealogy(std::move(rec), y.size(), num_particles, totals.log_z_hat);
}

ParticleGenealogy smc_sweep(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                            std::span<const int> y, std::size_t num_particles, Rng& rng) {
  detail::check_discrete_support(spec, proposal, y);
  const detail::DiscreteKernel kernel(spec, proposal, y);
  detail::SweepRecord rec;
  const auto totals = detail::run_sweep(kernel, num_particles, detail::Resampling::kMultinomial,
                                        rng, &rec, false);
  return to_genealogy(std::move(rec), y.size(), num_particles, totals.log_z_hat);
}

double posterior_functional(const ParticleGenealogy& genealogy,
                            std::span<const double> test_values) {
  if (test_values.size() != genealogy.num_particles) {
    throw std::invalid_argument("need one test-function value per final particle");
  }
  const auto wbar = genealogy.final_normalized_weights();
  double total = 0.0;
  for (std::size_t k = 0; k < wbar.size(); ++k) {
    if (wbar[k] > 0.0) total += wbar[k] * test_values[k];
  }
  return total;
}

std::vector<double> posterior_marginal_means(const ParticleGenealogy& genealogy) {
  const auto wbar = genealogy.final_normalized_weights();
  std::vector<double> means(genealogy.horizon, 0.0);
  for (std::size_t k = 0; k < genealogy.num_particles; ++k) {
    if (wbar[k] == 0.0) continue;
    std::size_t idx = k;
    for (std::size_t t = genealogy.horizon; t-- > 0;) {
      means[t] += wbar[k] * genealogy.value(t, idx);
      if (t > 0) idx = genealogy.ancestor(t, idx);
    }
  }
  return means;
}

std::vector<double> posterior_marginal_means(const IsBatch& batch) {
  const auto wbar = batch.normalized_weights();
  std::vector<double> means(batch.horizon, 0.0);
  for (std::size_t t = 0; t < batch.horizon; ++t) {
    for (std::size_t k = 0; k < batch.num_particles; ++k) {
      if (wbar[k] > 0.0) means[t] += wbar[k] * batch.values[t * batch.num_particles + k];
    }
  }
  return means;
}

namespace detail {

std::size_t sample_categorical(std::span<const double> probs, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

DiscreteKernel::Step DiscreteKernel::step(std::size_t t, const int* parent,
                                          Rng& noise_rng) const {
  const std::vector<double>& row =
      t == 0 ? proposal_.initial : proposal_.steps[t - 1][static_cast<std::size_t>(*parent)];
  const double u = noise_rng.uniform();
  const auto x = sample_categorical(row, u);
  const double log_q = std::log(row[x]);
  const double prior = t == 0 ? spec_.initial[x]
                              : spec_.transition[static_cast<std::size_t>(*parent)][x];
  const double log_model =
      std::log(prior) + std::log(spec_.emission[x][static_cast<std::size_t>(y_[t])]);
  return {static_cast<int>(x), log_model - log_q, log_q, u};
}

void check_discrete_support(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                            std::span<const int> y) {
  spec.validate();
  spec.validate_observations(y);
  proposal.validate(spec);
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    const auto obs = static_cast<std::size_t>(y[t]);
    for (std::size_t i = 0; i < (t == 0 ? 1 : spec.num_states); ++i) {
      for (std::size_t j = 0; j < spec.num_states; ++j) {
        const double model = (t == 0 ? spec.initial[j] : spec.transition[i][j]) *
                             spec.emission[j][obs];
        const double q = t == 0 ? proposal.initial[j] : proposal.steps[t - 1][i][j];
        if (model > 0.0 && q <= 0.0) {
          throw std::invalid_argument("proposal has zero density where the model is positive");
        }
      }
    }
  }
}

}  // namespace detail

}  // namespace aesmc
