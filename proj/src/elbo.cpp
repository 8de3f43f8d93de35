#include "aesmc/elbo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "aesmc/detail/parallel.hpp"
#include "aesmc/detail/sweep.hpp"
#include "aesmc/oracle.hpp"

namespace aesmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Neumaier compensated sum; enumeration adds up to a million terms.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (!(m > kNegInf)) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

template <typename Sweep>
ElboEstimate summarize(ObjectiveKind kind, std::size_t K, std::size_t replicates, Rng& rng,
                       Sweep&& sweep) {
  if (replicates == 0) throw std::invalid_argument("replicates must be >= 1");
  ElboEstimate est;
  est.kind = kind;
  est.num_particles = K;
  est.replicates = replicates;
  est.samples.resize(replicates);
  const std::uint64_t master = rng.next_u64();
  detail::parallel_for(replicates, [&](std::size_t r) {
    Rng rep = Rng::derive(master, r);
    est.samples[r] = sweep(rep);
  });
  double sum = 0.0;
  for (double v : est.samples) sum += v;
  est.mean = sum / static_cast<double>(replicates);
  if (replicates > 1) {
    double ss = 0.0;
    for (double v : est.samples) ss += (v - est.mean) * (v - est.mean);
    est.standard_error =
        std::sqrt(ss / static_cast<double>(replicates - 1) / static_cast<double>(replicates));
  }
  return est;
}

std::size_t effective_particles(ObjectiveKind kind, std::size_t K) {
  if (kind == ObjectiveKind::kVae) return 1;
  if (K == 0) throw std::invalid_argument("number of particles must be >= 1");
  return K;
}

detail::Resampling resampling_for(ObjectiveKind kind) {
  return kind == ObjectiveKind::kSmc ? detail::Resampling::kMultinomial
                                     : detail::Resampling::kNone;
}

double checked_power(double base, double exponent) {
  const double n = std::pow(base, exponent);
  if (n > kMaxEnumeratedConfigurations) {
    throw std::invalid_argument("extended space has " + std::to_string(n) +
                                " configurations, more than the enumeration budget of 1e6");
  }
  return n;
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kVae:
      return "VAE";
    case ObjectiveKind::kIs:
      return "IS";
    case ObjectiveKind::kSmc:
      return "SMC";
  }
  return "?";
}

ObjectiveKind parse_objective_kind(const std::string& text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "VAE") return ObjectiveKind::kVae;
  if (upper == "IS") return ObjectiveKind::kIs;
  if (upper == "SMC") return ObjectiveKind::kSmc;
  throw std::invalid_argument("unknown objective kind '" + text + "' (expected VAE, IS or SMC)");
}

ElboEstimate elbo_estimate(ObjectiveKind kind, const GaussianSsm& model,
                           const ProposalSpec& proposal, std::span<const double> y,
                           std::size_t num_particles, std::size_t replicates, Rng& rng) {
  model.validate();
  const std::size_t K = effective_particles(kind, num_particles);
  const detail::GaussianKernel<double> kernel(
      model, proposal.kind, detail::constant_scalars<double>(model, proposal), y, true);
  return summarize(kind, K, replicates, rng, [&](Rng& rep) {
    return detail::run_sweep(kernel, K, resampling_for(kind), rep, nullptr, false).log_z_hat;
  });
}

ElboEstimate elbo_estimate(ObjectiveKind kind, const DiscreteHmmSpec& spec,
                           const DiscreteProposal& proposal, std::span<const int> y,
                           std::size_t num_particles, std::size_t replicates, Rng& rng) {
  detail::check_discrete_support(spec, proposal, y);
  const std::size_t K = effective_particles(kind, num_particles);
  const detail::DiscreteKernel kernel(spec, proposal, y);
  return summarize(kind, K, replicates, rng, [&](Rng& rep) {
    return detail::run_sweep(kernel, K, resampling_for(kind), rep, nullptr, false).log_z_hat;
  });
}

double dataset_objective(ObjectiveKind kind, const GaussianSsm& model,
                         const ProposalSpec& proposal,
                         const std::vector<std::vector<double>>& dataset,
                         std::size_t num_particles, std::size_t replicates, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("dataset must contain at least one sequence");
  const std::uint64_t master = rng.next_u64();
  double total = 0.0;
  for (const auto& y : dataset) {
    Rng entry(master);
    total += elbo_estimate(kind, model, proposal, y, num_particles, replicates, entry).mean;
  }
  return total / static_cast<double>(dataset.size());
}

KlGapReport enumerate_kl_gap_is(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                                std::span<const int> y, std::size_t num_particles) {
  detail::check_discrete_support(spec, proposal, y);
  const std::size_t K = num_particles;
  if (K == 0) throw std::invalid_argument("number of particles must be >= 1");
  const std::size_t S = spec.num_states;
  const std::size_t T = spec.horizon;
  const double configurations =
      checked_power(static_cast<double>(S), static_cast<double>(T * K));

  const double log_z = hmm_forward(spec, y).log_marginal;
  const auto num_paths = static_cast<std::size_t>(std::pow(static_cast<double>(S), T) + 0.5);
  std::vector<double> log_p(num_paths);
  std::vector<double> log_q(num_paths);
  std::vector<int> path(T);
  for (std::size_t idx = 0; idx < num_paths; ++idx) {
    std::size_t rest = idx;
    for (std::size_t t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rest % S);
      rest /= S;
    }
    log_p[idx] = discrete_log_joint(spec, path, y);
    log_q[idx] = discrete_log_proposal(proposal, path);
  }

  CompensatedSum elbo;
  CompensatedSum kl;
  std::vector<std::size_t> pick(K, 0);
  std::vector<double> log_w(K);
  std::vector<double> mixture(K);
  const auto total = static_cast<std::size_t>(configurations + 0.5);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rest = c;
    double log_big_q = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      pick[k] = rest % num_paths;
      rest /= num_paths;
      log_big_q += log_q[pick[k]];
    }
    if (!(log_big_q > kNegInf)) continue;
    for (std::size_t k = 0; k < K; ++k) {
      log_w[k] = log_p[pick[k]] - log_q[pick[k]];
      // p(x^k | y) prod_{l != k} q(x^l)
      mixture[k] = log_p[pick[k]] - log_z + (log_big_q - log_q[pick[k]]);
    }
    const double log_z_hat = log_sum_exp(log_w) - std::log(static_cast<double>(K));
    const double log_big_p = log_sum_exp(mixture) - std::log(static_cast<double>(K));
    const double weight = std::exp(log_big_q);
    elbo.add(weight * log_z_hat);
    kl.add(weight * (log_big_q - log_big_p));
  }

  KlGapReport report;
  report.log_z_exact = log_z;
  report.elbo_exact = elbo.value();
  report.kl_exact = kl.value();
  report.residual = report.elbo_exact - (report.log_z_exact - report.kl_exact);
  report.configurations = configurations;
  return report;
}

KlGapReport enumerate_kl_gap_smc(const DiscreteHmmSpec& spec, const DiscreteProposal& proposal,
                                 std::span<const int> y, std::size_t num_particles) {
  detail::check_discrete_support(spec, proposal, y);
  const std::size_t K = num_particles;
  if (K == 0) throw std::invalid_argument("number of particles must be >= 1");
  const std::size_t S = spec.num_states;
  const std::size_t T = spec.horizon;
  const double value_configs = std::pow(static_cast<double>(S), static_cast<double>(T * K));
  const double ancestor_configs =
      std::pow(static_cast<double>(K), static_cast<double>((T - 1) * K));
  const double configurations = checked_power(value_configs * ancestor_configs, 1.0);

  const double log_z = hmm_forward(spec, y).log_marginal;
  const double log_k = std::log(static_cast<double>(K));

  // x[t * K + k], a[(t - 1) * K + k]
  std::vector<std::size_t> x(T * K);
  std::vector<std::size_t> a(T > 1 ? (T - 1) * K : 0);
  std::vector<double> log_w(T * K);
  std::vector<double> log_q_step(T * K);
  std::vector<double> log_wbar(T * K);
  std::vector<double> lineage_terms(K);
  std::vector<int> path(T);

  CompensatedSum elbo;
  CompensatedSum kl;
  const auto total = static_cast<std::size_t>(configurations + 0.5);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rest = c;
    for (auto& v : x) {
      v = rest % S;
      rest /= S;
    }
    for (auto& v : a) {
      v = rest % K;
      rest /= K;
    }

    double log_big_q = 0.0;
    double log_z_hat = 0.0;
    bool zero_probability = false;
    for (std::size_t t = 0; t < T && !zero_probability; ++t) {
      const auto obs = static_cast<std::size_t>(y[t]);
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t i = t * K + k;
        const std::size_t s = x[i];
        double log_prior;
        if (t == 0) {
          log_q_step[i] = std::log(proposal.initial[s]);
          log_prior = std::log(spec.initial[s]);
        } else {
          const std::size_t anc = a[(t - 1) * K + k];
          const std::size_t parent = x[(t - 1) * K + anc];
          log_big_q += log_wbar[(t - 1) * K + anc];
          log_q_step[i] = std::log(proposal.steps[t - 1][parent][s]);
          log_prior = std::log(spec.transition[parent][s]);
        }
        log_big_q += log_q_step[i];
        log_w[i] = log_prior + std::log(spec.emission[s][obs]) - log_q_step[i];
      }
      if (!(log_big_q > kNegInf)) {
        zero_probability = true;
        break;
      }
      const std::span<const double> step_w(log_w.data() + t * K, K);
      const double lse = log_sum_exp(step_w);
      if (!(lse > kNegInf)) {
        throw std::domain_error(
            "a positive-probability configuration has all weights zero; the ELBO is -infinity");
      }
      for (std::size_t k = 0; k < K; ++k) log_wbar[t * K + k] = log_w[t * K + k] - lse;
      log_z_hat += lse - log_k;
    }
    if (zero_probability) continue;

    // P_SMC through the lineage b_{1:T} of each final particle k.
    for (std::size_t k = 0; k < K; ++k) {
      double denominator = 0.0;
      std::size_t b = k;
      for (std::size_t t = T; t-- > 0;) {
        path[t] = static_cast<int>(x[t * K + b]);
        denominator += log_q_step[t * K + b];
        if (t > 0) {
          b = a[(t - 1) * K + b];
          denominator += log_wbar[(t - 1) * K + b];
        }
      }
      const double log_pi = discrete_log_joint(spec, path, y) - log_z;
      lineage_terms[k] =
          log_pi - static_cast<double>(T) * log_k + log_big_q - denominator;
    }
    const double log_big_p = log_sum_exp(lineage_terms);
    const double weight = std::exp(log_big_q);
    elbo.add(weight * log_z_hat);
    kl.add(weight * (log_big_q - log_big_p));
  }

  KlGapReport report;
  report.log_z_exact = log_z;
  report.elbo_exact = elbo.value();
  report.kl_exact = kl.value();
  report.residual = report.elbo_exact - (report.log_z_exact - report.kl_exact);
  report.configurations = configurations;
  return report;
}

}  // namespace aesmc
