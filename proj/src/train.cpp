#include "aesmc/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "aesmc/detail/parallel.hpp"
#include "aesmc/oracle.hpp"
#include "aesmc/particle.hpp"

namespace aesmc {

namespace {

bool all_finite(const ParamVector& p) {
  for (double v : p.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

struct StepResult {
  ParamVector gradient;
  double log_z_hat = 0.0;
};

// Average over sequences of the (optionally length-normalized) gradient.
StepResult dataset_gradient(const GaussianSsm& model, const ProposalSpec& proposal,
                            const std::vector<std::vector<double>>& dataset,
                            const ObjectiveChoice& objective, bool detach, bool normalize,
                            Rng& rng) {
  StepResult out;
  out.gradient = pack_params(model, proposal).zeros_like();
  for (const auto& y : dataset) {
    GradientSample g = grad_reparam(objective.kind, model, proposal, y, objective.num_particles,
                                    rng, detach);
    if (normalize) g.gradient *= 1.0 / static_cast<double>(y.size());
    out.gradient += g.gradient;
    out.log_z_hat += g.log_z_hat;
  }
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  out.gradient *= inv_n;
  out.log_z_hat *= inv_n;
  return out;
}

double mean_exact_log_marginal(const GaussianSsm& model,
                               const std::vector<std::vector<double>>& dataset) {
  double total = 0.0;
  for (const auto& y : dataset) total += kalman_log_marginal(model, y);
  return total / static_cast<double>(dataset.size());
}

double fresh_log_z(const GaussianSsm& model, const ProposalSpec& proposal,
                   const std::vector<std::vector<double>>& dataset,
                   const ObjectiveChoice& objective, Rng& rng) {
  double total = 0.0;
  for (const auto& y : dataset) {
    Rng r = rng.split();
    total += elbo_estimate(objective.kind, model, proposal, y, objective.num_particles, 1, r).mean;
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace

NonFiniteGradientError::NonFiniteGradientError(const std::string& component, std::size_t step)
    : std::runtime_error("non-finite gradient component " + component + " at step " +
                         std::to_string(step)),
      step_(step) {}

ParamVector sga_step(const ParamVector& params, const ParamVector& grad, double lr,
                     std::size_t step) {
  if (!params.same_layout(grad)) {
    throw std::invalid_argument("gradient layout does not match the parameters");
  }
  ParamVector out = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(grad[i])) throw NonFiniteGradientError(grad.names()[i], step);
    out[i] += lr * grad[i];
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and non-negative");
  }
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (cadence < 1) throw std::invalid_argument("cadence must be >= 1");
  auto check = [](const ObjectiveChoice& c, const char* field) {
    if (c.num_particles < 1) {
      throw std::invalid_argument(std::string(field) + " particle count must be >= 1");
    }
  };
  if (alt) {
    check(alt->theta, "alt theta");
    check(alt->phi, "alt phi");
  } else {
    check(objective, "objective");
  }
  if (quality && quality->num_particles < 1) {
    throw std::invalid_argument("quality particle count must be >= 1");
  }
}

TrainTrace train(const GaussianSsm& model, const ProposalSpec& proposal,
                 std::span<const double> y, const TrainConfig& config) {
  return train(model, proposal, std::vector<std::vector<double>>{{y.begin(), y.end()}}, config);
}

TrainTrace train(const GaussianSsm& model, const ProposalSpec& proposal,
                 const std::vector<std::vector<double>>& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("dataset must contain at least one sequence");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  GaussianSsm current_model = model;
  ProposalSpec current_proposal = proposal;
  ParamVector params = pack_params(current_model, current_proposal);
  const ObjectiveChoice reported = config.alt ? config.alt->theta : config.objective;
  const bool detach = config.detach_model_in_proposal;
  const bool normalize = config.normalize_by_length;

  TrainTrace trace;
  auto record = [&](std::size_t step, double elbo) {
    TraceRecord r;
    r.step = step;
    r.params = params;
    r.elbo = elbo;
    r.exact_log_marginal = mean_exact_log_marginal(current_model, dataset);
    if (config.quality) {
      const QualityProbe& q = *config.quality;
      const bool due = step == config.steps || (q.cadence > 0 && step % q.cadence == 0);
      if (due) {
        Rng qrng = Rng::derive(~config.seed, step);
        r.quality = proposal_quality(q.theta_ref, current_proposal, dataset.front(), q.test_kind,
                                     q.num_particles, q.replicates, qrng);
      }
    }
    r.wall_seconds = elapsed();
    trace.records.push_back(std::move(r));
  };

  try {
    for (std::size_t step = 0; step < config.steps; ++step) {
      Rng rng = Rng::derive(config.seed, step);
      StepResult g;
      if (config.alt) {
        Rng theta_rng = rng.split();
        Rng phi_rng = rng.split();
        const StepResult gt = dataset_gradient(current_model, current_proposal, dataset,
                                               config.alt->theta, detach, normalize, theta_rng);
        const StepResult gp = dataset_gradient(current_model, current_proposal, dataset,
                                               config.alt->phi, detach, normalize, phi_rng);
        g.gradient = gt.gradient.masked(ParamMask::kModel) + gp.gradient.masked(ParamMask::kProposal);
        g.log_z_hat = gt.log_z_hat;
      } else {
        g = dataset_gradient(current_model, current_proposal, dataset, config.objective, detach,
                             normalize, rng);
      }
      if (step % config.cadence == 0) record(step, g.log_z_hat);

      params = sga_step(params, g.gradient.masked(config.trainable), config.learning_rate, step);
      if (!all_finite(params)) {
        throw std::runtime_error("parameters became non-finite after step " +
                                 std::to_string(step));
      }
      unpack_params(params, current_model, current_proposal);
    }
    Rng final_rng = Rng::derive(config.seed, config.steps);
    record(config.steps,
           fresh_log_z(current_model, current_proposal, dataset, reported, final_rng));
  } catch (const NonFiniteGradientError& e) {
    trace.diverged = true;
    trace.divergence_reason = e.what();
  } catch (const DegenerateParticleError& e) {
    trace.diverged = true;
    trace.divergence_reason = e.what();
  } catch (const std::runtime_error& e) {
    trace.diverged = true;
    trace.divergence_reason = e.what();
  }
  trace.final_params = params;
  return trace;
}

double smoothed_mean_error(std::span<const double> exact, std::span<const double> approx) {
  if (exact.size() != approx.size()) throw std::invalid_argument("mean sequences differ in length");
  double ss = 0.0;
  for (std::size_t t = 0; t < exact.size(); ++t) {
    const double d = exact[t] - approx[t];
    ss += d * d;
  }
  return std::sqrt(ss);
}

QualityResult proposal_quality(LgssmParams theta_ref, const ProposalSpec& proposal,
                               std::span<const double> y, ObjectiveKind test_kind,
                               std::size_t num_particles, std::size_t replicates, Rng& rng) {
  if (num_particles < 1) throw std::invalid_argument("quality needs at least one particle");
  if (replicates < 1) throw std::invalid_argument("quality needs at least one replicate");
  const GaussianSsm reference = make_lgssm(theta_ref);
  const KalmanResult exact = kalman_filter_smoother(reference, y);

  const std::uint64_t master = rng.next_u64();
  std::vector<double> errors(replicates, 0.0);
  std::vector<char> degenerate(replicates, 0);
  detail::parallel_for(replicates, [&](std::size_t r) {
    Rng rep = Rng::derive(master, r);
    try {
      std::vector<double> approx;
      if (test_kind == ObjectiveKind::kSmc) {
        approx = posterior_marginal_means(smc_sweep(reference, proposal, y, num_particles, rep));
      } else {
        const std::size_t K = test_kind == ObjectiveKind::kVae ? 1 : num_particles;
        approx = posterior_marginal_means(is_batch(reference, proposal, y, K, rep));
      }
      errors[r] = smoothed_mean_error(exact.smoothed_mean, approx);
    } catch (const DegenerateParticleError&) {
      degenerate[r] = 1;
    }
  });

  QualityResult out;
  std::vector<double> valid;
  for (std::size_t r = 0; r < replicates; ++r) {
    if (degenerate[r]) {
      ++out.degenerate;
    } else {
      valid.push_back(errors[r]);
    }
  }
  out.replicates = valid.size();
  if (valid.empty()) {
    out.mean = std::numeric_limits<double>::quiet_NaN();
    out.standard_error = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const MeanVar mv = mean_and_variance(valid);
  out.mean = mv.mean;
  out.standard_error = std::sqrt(mv.variance / static_cast<double>(valid.size()));
  return out;
}

std::vector<GridCell> infer_eval_grid(const InferGridConfig& config, std::span<const double> y) {
  struct TrainCell {
    ObjectiveKind kind;
    std::size_t particles;
    TrainTrace trace;
    ProposalSpec learned;
  };
  std::vector<TrainCell> trained;
  for (ObjectiveKind kind : config.train_kinds) {
    for (std::size_t K : config.train_particles) trained.push_back({kind, K, {}, {}});
  }

  const GaussianSsm model = make_lgssm(config.theta);
  const std::vector<std::vector<double>> dataset{{y.begin(), y.end()}};
  detail::parallel_for(trained.size(), [&](std::size_t i) {
    TrainConfig tc;
    tc.objective = {trained[i].kind, trained[i].particles};
    tc.learning_rate = config.learning_rate;
    tc.steps = config.steps;
    tc.seed = Rng::derive(config.seed, i).next_u64();
    tc.trainable = ParamMask::kProposal;
    tc.cadence = config.steps;
    trained[i].learned = ProposalSpec::make_affine(config.init_proposal);
    trained[i].trace = train(model, trained[i].learned, dataset, tc);
    GaussianSsm unused = model;
    unpack_params(trained[i].trace.final_params, unused, trained[i].learned);
  });

  std::vector<GridCell> cells;
  for (std::size_t i = 0; i < trained.size(); ++i) {
    std::size_t j = 0;
    for (ObjectiveKind test_kind : config.test_kinds) {
      for (std::size_t K : config.test_particles) {
        GridCell cell;
        cell.train_kind = trained[i].kind;
        cell.train_particles = trained[i].particles;
        cell.test_kind = test_kind;
        cell.test_particles = K;
        cell.diverged = trained[i].trace.diverged;
        cell.learned = trained[i].learned.affine;
        Rng rng = Rng::derive(~config.seed, i * 1000 + j++);
        cell.quality =
            proposal_quality(config.theta, trained[i].learned, y, test_kind, K, config.replicates, rng);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

}  // namespace aesmc
