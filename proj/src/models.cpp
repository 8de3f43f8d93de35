#include "aesmc/models.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace aesmc {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
}

void validate_distribution(std::span<const double> p, std::size_t expected, const char* what) {
  if (p.size() != expected) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(expected) +
                                " entries, got " + std::to_string(p.size()));
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": entries must be finite and >= 0");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument(std::string(what) + ": entries must sum to 1");
  }
}

}  // namespace

void Gaussian1D::validate() const {
  require_finite(mean, "Gaussian mean");
  require_finite(std, "Gaussian std");
  if (!(std > 0.0)) throw std::invalid_argument("Gaussian std must be positive");
}

double gaussian_logpdf(double x, const Gaussian1D& g) {
  require_finite(x, "density argument");
  g.validate();
  const double z = (x - g.mean) / g.std;
  return -kHalfLogTwoPi - std::log(g.std) - 0.5 * z * z;
}

double gaussian_reparam(double eps, const Gaussian1D& g) {
  g.validate();
  return g.mean + g.std * eps;
}

void GaussianSsm::validate() const {
  require_finite(theta.theta1, "theta1");
  require_finite(theta.theta2, "theta2");
  for (double s : {initial_std, transition_std, emission_std}) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("noise std must be positive");
  }
}

GaussianSsm make_lgssm(LgssmParams theta) {
  GaussianSsm m;
  m.theta = theta;
  return m;
}

GaussianSsm make_unknown_mean_model() {
  GaussianSsm m;
  m.theta = {0.0, 1.0};
  m.emission_std = 1.0;
  return m;
}

GaussianSsm make_constant_emission_model(double theta1) {
  GaussianSsm m;
  m.theta = {theta1, 0.0};
  m.constant_emission = true;
  return m;
}

SimulatedSequence simulate(const GaussianSsm& model, std::size_t horizon, Rng& rng) {
  if (horizon == 0) throw std::invalid_argument("horizon must be >= 1");
  model.validate();
  SimulatedSequence out;
  out.latents.resize(horizon);
  out.observations.resize(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    const double mean = t == 0 ? 0.0 : model.theta.theta1 * out.latents[t - 1];
    const double std = t == 0 ? model.initial_std : model.transition_std;
    out.latents[t] = mean + std * rng.normal();
    const double emission_mean =
        model.constant_emission ? 0.0 : model.theta.theta2 * out.latents[t];
    out.observations[t] = emission_mean + model.emission_std * rng.normal();
  }
  return out;
}

SimulatedSequence lgssm_simulate(LgssmParams theta, std::size_t horizon, Rng& rng) {
  return simulate(make_lgssm(theta), horizon, rng);
}

double log_joint(const GaussianSsm& model, std::span<const double> latents,
                 std::span<const double> observations) {
  if (latents.size() != observations.size() || latents.empty()) {
    throw std::invalid_argument("latents and observations must be non-empty and equal length");
  }
  model.validate();
  const double h = model.constant_emission ? 0.0 : model.theta.theta2;
  double total = 0.0;
  for (std::size_t t = 0; t < latents.size(); ++t) {
    total += t == 0 ? gaussian_logpdf(latents[0], {0.0, model.initial_std})
                    : gaussian_logpdf(latents[t],
                                      {model.theta.theta1 * latents[t - 1], model.transition_std});
    total += gaussian_logpdf(observations[t], {h * latents[t], model.emission_std});
  }
  return total;
}

std::string to_string(ProposalKind kind) {
  switch (kind) {
    case ProposalKind::kBootstrap: return "bootstrap";
    case ProposalKind::kAffine: return "affine";
    case ProposalKind::kUnknownMean: return "unknown_mean";
  }
  return "unknown";
}

AffineProposalParams bootstrap_as_affine(const GaussianSsm& model) {
  AffineProposalParams p;
  p.a = model.theta.theta1;
  p.log_var = 2.0 * std::log(model.transition_std);
  p.log_var1 = 2.0 * std::log(model.initial_std);
  return p;
}

AffineProposalParams locally_optimal_proposal(const GaussianSsm& model) {
  const double r = model.emission_std * model.emission_std;
  const double h = model.constant_emission ? 0.0 : model.theta.theta2;
  const double q = model.transition_std * model.transition_std;
  const double p0 = model.initial_std * model.initial_std;

  AffineProposalParams p;
  const double v1 = 1.0 / (1.0 / p0 + h * h / r);
  p.b1 = v1 * h / r;
  p.c1 = 0.0;
  p.log_var1 = std::log(v1);
  const double v = 1.0 / (1.0 / q + h * h / r);
  p.a = v * model.theta.theta1 / q;
  p.b = v * h / r;
  p.c = 0.0;
  p.log_var = std::log(v);
  return p;
}

Gaussian1D proposal_distribution(const GaussianSsm& model, const ProposalSpec& proposal,
                                 std::size_t t, std::optional<double> previous,
                                 std::span<const double> observations) {
  if (t >= observations.size()) throw std::invalid_argument("step index beyond observations");
  if (t > 0 && !previous) throw std::invalid_argument("previous state required for t >= 2");
  const auto p = detail::constant_scalars<double>(model, proposal);
  double mean = 0.0;
  double log_var = 0.0;
  const double prev = previous.value_or(0.0);
  detail::proposal_moments(model, proposal.kind, p, t, t == 0 ? nullptr : &prev,
                           observations[t], mean, log_var);
  return {mean, std::exp(0.5 * log_var)};
}

double proposal_density(const GaussianSsm& model, const ProposalSpec& proposal, std::size_t t,
                        double x, std::span<const double> history,
                        std::span<const double> observations) {
  if (t > 0 && history.size() < t) {
    throw std::invalid_argument("proposal density at step " + std::to_string(t + 1) +
                                " requires history x_{1:" + std::to_string(t) + "}");
  }
  require_finite(x, "density argument");
  std::optional<double> previous;
  if (t > 0) previous = history[t - 1];
  const auto p = detail::constant_scalars<double>(model, proposal);
  double mean = 0.0;
  double log_var = 0.0;
  if (t >= observations.size()) throw std::invalid_argument("step index beyond observations");
  const double prev = previous.value_or(0.0);
  detail::proposal_moments(model, proposal.kind, p, t, t == 0 ? nullptr : &prev,
                           observations[t], mean, log_var);
  return normal_logpdf_logvar(x, mean, log_var);
}

// ---------------------------------------------------------------------------

void DiscreteHmmSpec::validate() const {
  if (num_states == 0 || num_obs_symbols == 0 || horizon == 0) {
    throw std::invalid_argument("HMM sizes and horizon must be positive");
  }
  validate_distribution(initial, num_states, "initial distribution");
  if (transition.size() != num_states || emission.size() != num_states) {
    throw std::invalid_argument("HMM matrices must have num_states rows");
  }
  for (const auto& row : transition) validate_distribution(row, num_states, "transition row");
  for (const auto& row : emission) validate_distribution(row, num_obs_symbols, "emission row");
}

void DiscreteHmmSpec::validate_observations(std::span<const int> y) const {
  if (y.size() != horizon) {
    throw std::invalid_argument("observation sequence length must equal the horizon");
  }
  for (int o : y) {
    if (o < 0 || static_cast<std::size_t>(o) >= num_obs_symbols) {
      throw std::invalid_argument("observation symbol " + std::to_string(o) +
                                  " outside the alphabet");
    }
  }
}

void DiscreteProposal::validate(const DiscreteHmmSpec& spec) const {
  validate_distribution(initial, spec.num_states, "proposal initial distribution");
  if (steps.size() + 1 != spec.horizon) {
    throw std::invalid_argument("proposal needs horizon - 1 transition matrices");
  }
  for (const auto& m : steps) {
    if (m.size() != spec.num_states) throw std::invalid_argument("proposal matrix row count");
    for (const auto& row : m) validate_distribution(row, spec.num_states, "proposal row");
  }
}

DiscreteProposal discrete_bootstrap_proposal(const DiscreteHmmSpec& spec) {
  DiscreteProposal q;
  q.initial = spec.initial;
  q.steps.assign(spec.horizon - 1, spec.transition);
  return q;
}

double discrete_log_joint(const DiscreteHmmSpec& spec, std::span<const int> path,
                          std::span<const int> y) {
  double total = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    const auto s = static_cast<std::size_t>(path[t]);
    total += std::log(t == 0 ? spec.initial[s]
                             : spec.transition[static_cast<std::size_t>(path[t - 1])][s]);
    total += std::log(spec.emission[s][static_cast<std::size_t>(y[t])]);
  }
  return total;
}

double discrete_log_proposal(const DiscreteProposal& proposal, std::span<const int> path) {
  double total = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    const auto s = static_cast<std::size_t>(path[t]);
    total += std::log(t == 0 ? proposal.initial[s]
                             : proposal.steps[t - 1][static_cast<std::size_t>(path[t - 1])][s]);
  }
  return total;
}

DiscreteHmmSpec random_discrete_hmm(std::size_t num_states, std::size_t num_obs_symbols,
                                    std::size_t horizon, Rng& rng) {
  // Normalized Exp(1) draws give a Dirichlet(1, ..., 1) row.
  auto row = [&rng](std::size_t n) {
    std::vector<double> r(n);
    double total = 0.0;
    for (auto& v : r) {
      v = -std::log(1.0 - rng.uniform()) + 1e-3;
      total += v;
    }
    for (auto& v : r) v /= total;
    return r;
  };
  DiscreteHmmSpec spec;
  spec.num_states = num_states;
  spec.num_obs_symbols = num_obs_symbols;
  spec.horizon = horizon;
  spec.initial = row(num_states);
  for (std::size_t i = 0; i < num_states; ++i) {
    spec.transition.push_back(row(num_states));
    spec.emission.push_back(row(num_obs_symbols));
  }
  return spec;
}

}  // namespace aesmc
