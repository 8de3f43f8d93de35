#include "aesmc/oracle.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aesmc {

namespace {

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -kHalfLogTwoPi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

// Forward pass only; fills the filter fields and the log marginal.
void kalman_forward(const GaussianSsm& model, std::span<const double> y, KalmanResult& out) {
  const std::size_t T = y.size();
  const double a = model.theta.theta1;
  const double h = model.constant_emission ? 0.0 : model.theta.theta2;
  const double q = model.transition_std * model.transition_std;
  const double r = model.emission_std * model.emission_std;

  out.predicted_mean.resize(T);
  out.predicted_var.resize(T);
  out.filtered_mean.resize(T);
  out.filtered_var.resize(T);
  out.log_marginal_likelihood = 0.0;

  for (std::size_t t = 0; t < T; ++t) {
    if (t == 0) {
      out.predicted_mean[t] = 0.0;
      out.predicted_var[t] = model.initial_std * model.initial_std;
    } else {
      out.predicted_mean[t] = a * out.filtered_mean[t - 1];
      out.predicted_var[t] = a * a * out.filtered_var[t - 1] + q;
    }
    const double mp = out.predicted_mean[t];
    const double pp = out.predicted_var[t];
    const double s = h * h * pp + r;
    const double gain = pp * h / s;
    out.filtered_mean[t] = mp + gain * (y[t] - h * mp);
    out.filtered_var[t] = (1.0 - gain * h) * pp;
    out.log_marginal_likelihood += log_normal(y[t], h * mp, s);
  }
}

}  // namespace

KalmanResult kalman_filter_smoother(const GaussianSsm& model, std::span<const double> y) {
  if (y.empty()) throw std::invalid_argument("Kalman smoother needs a non-empty sequence");
  model.validate();
  KalmanResult out;
  kalman_forward(model, y, out);

  const std::size_t T = y.size();
  const double a = model.theta.theta1;
  out.smoothed_mean = out.filtered_mean;
  out.smoothed_var = out.filtered_var;
  out.smoothed_cross_cov.assign(T - 1, 0.0);
  for (std::size_t i = T - 1; i-- > 0;) {
    const double gain = out.filtered_var[i] * a / out.predicted_var[i + 1];
    out.smoothed_mean[i] =
        out.filtered_mean[i] + gain * (out.smoothed_mean[i + 1] - out.predicted_mean[i + 1]);
    out.smoothed_var[i] =
        out.filtered_var[i] + gain * gain * (out.smoothed_var[i + 1] - out.predicted_var[i + 1]);
    out.smoothed_cross_cov[i] = gain * out.smoothed_var[i + 1];
  }
  return out;
}

KalmanResult kalman_filter_smoother(LgssmParams theta, std::span<const double> y) {
  return kalman_filter_smoother(make_lgssm(theta), y);
}

double kalman_log_marginal(const GaussianSsm& model, std::span<const double> y) {
  if (y.empty()) throw std::invalid_argument("Kalman filter needs a non-empty sequence");
  model.validate();
  KalmanResult out;
  kalman_forward(model, y, out);
  return out.log_marginal_likelihood;
}

EmResult em_fit(std::span<const double> y, LgssmParams init, int max_iters, double tol) {
  if (y.size() < 2) throw std::invalid_argument("EM needs at least two observations");
  EmResult result;
  result.theta_hat = init;
  GaussianSsm model = make_lgssm(init);
  KalmanResult ks = kalman_filter_smoother(model, y);
  result.log_marginal_history.push_back(ks.log_marginal_likelihood);

  const std::size_t T = y.size();
  for (int iter = 0; iter < max_iters; ++iter) {
    double cross = 0.0;      // sum_{t>=2} E[x_t x_{t-1}]
    double lag_power = 0.0;  // sum_{t>=2} E[x_{t-1}^2]
    double obs_cross = 0.0;  // sum_t y_t E[x_t]
    double power = 0.0;      // sum_t E[x_t^2]
    for (std::size_t t = 0; t < T; ++t) {
      const double second = ks.smoothed_var[t] + ks.smoothed_mean[t] * ks.smoothed_mean[t];
      power += second;
      obs_cross += y[t] * ks.smoothed_mean[t];
      if (t + 1 < T) {
        lag_power += second;
        cross += ks.smoothed_cross_cov[t] + ks.smoothed_mean[t + 1] * ks.smoothed_mean[t];
      }
    }
    model.theta = {cross / lag_power, obs_cross / power};
    ks = kalman_filter_smoother(model, y);
    const double previous = result.log_marginal_history.back();
    result.log_marginal_history.push_back(ks.log_marginal_likelihood);
    result.iterations = iter + 1;
    result.theta_hat = model.theta;
    if (ks.log_marginal_likelihood - previous < tol) {
      result.converged = true;
      break;
    }
  }
  result.log_marginal_at_optimum = result.log_marginal_history.back();
  return result;
}

Gaussian1D conjugate_posterior_unknown_mean(double x_obs) {
  // Prior precision 1 plus likelihood precision 1.
  return {x_obs / 2.0, std::sqrt(0.5)};
}

double unknown_mean_log_marginal(double x_obs) {
  return gaussian_logpdf(x_obs, {0.0, std::numbers::sqrt2});
}

HmmForwardResult hmm_forward(const DiscreteHmmSpec& spec, std::span<const int> y) {
  spec.validate();
  spec.validate_observations(y);
  const std::size_t S = spec.num_states;
  HmmForwardResult out;
  std::vector<double> alpha(S);
  double log_z = 0.0;
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    std::vector<double> next(S, 0.0);
    const auto obs = static_cast<std::size_t>(y[t]);
    for (std::size_t j = 0; j < S; ++j) {
      double prior = 0.0;
      if (t == 0) {
        prior = spec.initial[j];
      } else {
        for (std::size_t i = 0; i < S; ++i) prior += alpha[i] * spec.transition[i][j];
      }
      next[j] = prior * spec.emission[j][obs];
    }
    double norm = 0.0;
    for (double v : next) norm += v;
    log_z += std::log(norm);
    if (norm > 0.0) {
      for (auto& v : next) v /= norm;
    }
    alpha = next;
    out.filtered.push_back(alpha);
    out.log_normalizers.push_back(log_z);
  }
  out.log_marginal = log_z;
  return out;
}

double hmm_log_gamma(const DiscreteHmmSpec& spec, std::span<const int> y,
                     std::span<const int> prefix) {
  if (prefix.size() > y.size()) throw std::invalid_argument("prefix longer than observations");
  return discrete_log_joint(spec, prefix, y);
}

double hmm_log_pi(const DiscreteHmmSpec& spec, std::span<const int> y,
                  std::span<const int> prefix) {
  const auto fwd = hmm_forward(spec, y);
  if (prefix.empty()) return 0.0;
  return hmm_log_gamma(spec, y, prefix) - fwd.log_normalizers[prefix.size() - 1];
}

DiscreteProposal hmm_posterior_proposal(const DiscreteHmmSpec& spec, std::span<const int> y) {
  spec.validate();
  spec.validate_observations(y);
  const std::size_t S = spec.num_states;
  const std::size_t T = spec.horizon;

  // beta[t][i] = p(y_{t+1:T} | x_t = i), rescaled per step.
  std::vector<std::vector<double>> beta(T, std::vector<double>(S, 1.0));
  for (std::size_t t = T - 1; t-- > 0;) {
    const auto obs = static_cast<std::size_t>(y[t + 1]);
    double scale = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < S; ++j) {
        v += spec.transition[i][j] * spec.emission[j][obs] * beta[t + 1][j];
      }
      beta[t][i] = v;
      scale += v;
    }
    if (scale > 0.0) {
      for (auto& v : beta[t]) v /= scale;
    }
  }

  auto normalized = [S](std::vector<double> row) {
    double total = 0.0;
    for (double v : row) total += v;
    if (total <= 0.0) return std::vector<double>(S, 1.0 / static_cast<double>(S));
    for (auto& v : row) v /= total;
    return row;
  };

  DiscreteProposal q;
  std::vector<double> first(S);
  for (std::size_t i = 0; i < S; ++i) {
    first[i] = spec.initial[i] * spec.emission[i][static_cast<std::size_t>(y[0])] * beta[0][i];
  }
  q.initial = normalized(first);
  for (std::size_t t = 1; t < T; ++t) {
    Matrix m(S);
    const auto obs = static_cast<std::size_t>(y[t]);
    for (std::size_t i = 0; i < S; ++i) {
      std::vector<double> row(S);
      for (std::size_t j = 0; j < S; ++j) {
        row[j] = spec.transition[i][j] * spec.emission[j][obs] * beta[t][j];
      }
      m[i] = normalized(row);
    }
    q.steps.push_back(std::move(m));
  }
  return q;
}

}  // namespace aesmc
