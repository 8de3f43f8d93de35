#include "aesmc/grad.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "aesmc/detail/parallel.hpp"
#include "aesmc/detail/sweep.hpp"

namespace aesmc {

namespace {

constexpr std::size_t kSlots = 9;
using D = Dual<kSlots>;

// Tangent slot of every named parameter. The unknown-mean proposal reuses the
// slots of b1 / log_var1, which that model never reads.
constexpr std::array<const char*, kSlots> kSlotNames = {
    "theta1", "theta2", "a", "b", "c", "log_var", "b1", "c1", "log_var1"};

std::size_t slot_of(const std::string& name) {
  if (name == "mu_q") return 7;
  if (name == "log_var_q") return 8;
  for (std::size_t i = 0; i < kSlots; ++i) {
    if (name == kSlotNames[i]) return i;
  }
  throw std::out_of_range("no tangent slot for parameter " + name);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

detail::SsmScalars<D> dual_scalars(const GaussianSsm& model, const ProposalSpec& proposal,
                                   bool detach_model_in_proposal) {
  detail::SsmScalars<D> s;
  s.theta1 = D::variable(model.theta.theta1, 0);
  s.theta2 = D::variable(model.theta.theta2, 1);
  s.bootstrap_theta1 = detach_model_in_proposal ? detach(s.theta1) : s.theta1;
  const auto& f = proposal.affine;
  s.a = D::variable(f.a, 2);
  s.b = D::variable(f.b, 3);
  s.c = D::variable(f.c, 4);
  s.log_var = D::variable(f.log_var, 5);
  s.b1 = D::variable(f.b1, 6);
  s.c1 = D::variable(f.c1, 7);
  s.log_var1 = D::variable(f.log_var1, 8);
  s.mu_q = D::variable(proposal.unknown_mean.mu_q, slot_of("mu_q"));
  s.log_var_q = D::variable(proposal.unknown_mean.log_var_q, slot_of("log_var_q"));
  return s;
}

enum class Mode { kReparam, kReinforceReparam, kReinforceFull };

GradientSample estimate(Mode mode, ObjectiveKind kind, const GaussianSsm& model,
                        const ProposalSpec& proposal, std::span<const double> y,
                        std::size_t num_particles, Rng& rng, bool detach_model_in_proposal) {
  model.validate();
  const std::size_t K = kind == ObjectiveKind::kVae ? 1 : num_particles;
  const auto resampling = kind == ObjectiveKind::kSmc ? detail::Resampling::kMultinomial
                                                      : detail::Resampling::kNone;
  const bool reparameterize = mode != Mode::kReinforceFull;
  const bool scores = mode != Mode::kReparam;
  const detail::GaussianKernel<D> kernel(
      model, proposal.kind, dual_scalars(model, proposal, detach_model_in_proposal), y,
      reparameterize);
  const auto totals = detail::run_sweep(kernel, K, resampling, rng, nullptr, scores);

  std::array<double, kSlots> g = totals.log_z_hat.d;
  const double log_z = totals.log_z_hat.v;
  if (scores) {
    for (std::size_t i = 0; i < kSlots; ++i) {
      double score = totals.log_ancestor_prob.d[i];
      if (mode == Mode::kReinforceFull) score += totals.log_proposal_sum.d[i];
      g[i] += score * log_z;
    }
  }

  GradientSample out;
  out.gradient = pack_params(model, proposal);
  for (std::size_t i = 0; i < out.gradient.size(); ++i) {
    out.gradient[i] = g[slot_of(out.gradient.names()[i])];
  }
  out.log_z_hat = log_z;
  return out;
}

}  // namespace

std::string to_string(ParamMask mask) {
  switch (mask) {
    case ParamMask::kModel:
      return "theta";
    case ParamMask::kProposal:
      return "phi";
    case ParamMask::kBoth:
      return "both";
  }
  return "?";
}

ParamMask parse_param_mask(const std::string& text) {
  const std::string s = lower(text);
  if (s == "theta") return ParamMask::kModel;
  if (s == "phi") return ParamMask::kProposal;
  if (s == "both") return ParamMask::kBoth;
  throw std::invalid_argument("unknown parameter mask '" + text + "' (expected theta, phi or both)");
}

void ParamVector::add(const std::string& name, ParamGroup group, double value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  names_.push_back(name);
  groups_.push_back(group);
  values_.push_back(value);
}

std::size_t ParamVector::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::out_of_range("unknown parameter " + name);
}

bool ParamVector::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

bool ParamVector::in_mask(std::size_t i, ParamMask mask) const {
  switch (mask) {
    case ParamMask::kModel:
      return groups_[i] == ParamGroup::kModel;
    case ParamMask::kProposal:
      return groups_[i] == ParamGroup::kProposal;
    case ParamMask::kBoth:
      return true;
  }
  return false;
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z = *this;
  std::fill(z.values_.begin(), z.values_.end(), 0.0);
  return z;
}

ParamVector ParamVector::masked(ParamMask mask) const {
  ParamVector m = *this;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!in_mask(i, mask)) m.values_[i] = 0.0;
  }
  return m;
}

bool ParamVector::same_layout(const ParamVector& other) const {
  return names_ == other.names_ && groups_ == other.groups_;
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  if (!same_layout(other)) throw std::invalid_argument("parameter vectors have different layouts");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double s) {
  for (auto& v : values_) v *= s;
  return *this;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }

ParamVector pack_params(const GaussianSsm& model, const ProposalSpec& proposal) {
  ParamVector p;
  p.add("theta1", ParamGroup::kModel, model.theta.theta1);
  p.add("theta2", ParamGroup::kModel, model.theta.theta2);
  switch (proposal.kind) {
    case ProposalKind::kBootstrap:
      break;
    case ProposalKind::kAffine: {
      const auto& f = proposal.affine;
      p.add("a", ParamGroup::kProposal, f.a);
      p.add("b", ParamGroup::kProposal, f.b);
      p.add("c", ParamGroup::kProposal, f.c);
      p.add("log_var", ParamGroup::kProposal, f.log_var);
      p.add("b1", ParamGroup::kProposal, f.b1);
      p.add("c1", ParamGroup::kProposal, f.c1);
      p.add("log_var1", ParamGroup::kProposal, f.log_var1);
      break;
    }
    case ProposalKind::kUnknownMean:
      p.add("mu_q", ParamGroup::kProposal, proposal.unknown_mean.mu_q);
      p.add("log_var_q", ParamGroup::kProposal, proposal.unknown_mean.log_var_q);
      break;
  }
  return p;
}

void unpack_params(const ParamVector& params, GaussianSsm& model, ProposalSpec& proposal) {
  if (!params.same_layout(pack_params(model, proposal))) {
    throw std::invalid_argument("parameter vector does not match the model/proposal layout");
  }
  model.theta.theta1 = params.get("theta1");
  model.theta.theta2 = params.get("theta2");
  if (proposal.kind == ProposalKind::kAffine) {
    auto& f = proposal.affine;
    f.a = params.get("a");
    f.b = params.get("b");
    f.c = params.get("c");
    f.log_var = params.get("log_var");
    f.b1 = params.get("b1");
    f.c1 = params.get("c1");
    f.log_var1 = params.get("log_var1");
  } else if (proposal.kind == ProposalKind::kUnknownMean) {
    proposal.unknown_mean.mu_q = params.get("mu_q");
    proposal.unknown_mean.log_var_q = params.get("log_var_q");
  }
}

std::string to_string(GradEstimator estimator) {
  switch (estimator) {
    case GradEstimator::kReparam:
      return "reparam";
    case GradEstimator::kReinforceReparam:
      return "reinforce_reparam";
    case GradEstimator::kReinforceFull:
      return "reinforce_full";
  }
  return "?";
}

GradEstimator parse_grad_estimator(const std::string& text) {
  const std::string s = lower(text);
  if (s == "reparam") return GradEstimator::kReparam;
  if (s == "reinforce_reparam") return GradEstimator::kReinforceReparam;
  if (s == "reinforce_full") return GradEstimator::kReinforceFull;
  throw std::invalid_argument("unknown gradient estimator '" + text +
                              "' (expected reparam, reinforce_reparam or reinforce_full)");
}

GradientSample grad_reparam(ObjectiveKind kind, const GaussianSsm& model,
                            const ProposalSpec& proposal, std::span<const double> y,
                            std::size_t num_particles, Rng& rng, bool detach_model_in_proposal) {
  return estimate(Mode::kReparam, kind, model, proposal, y, num_particles, rng,
                  detach_model_in_proposal);
}

GradientSample grad_reinforce_reparam(ObjectiveKind kind, const GaussianSsm& model,
                                      const ProposalSpec& proposal, std::span<const double> y,
                                      std::size_t num_particles, Rng& rng,
                                      bool detach_model_in_proposal) {
  return estimate(Mode::kReinforceReparam, kind, model, proposal, y, num_particles, rng,
                  detach_model_in_proposal);
}

GradientSample grad_reinforce_full(ObjectiveKind kind, const GaussianSsm& model,
                                   const ProposalSpec& proposal, std::span<const double> y,
                                   std::size_t num_particles, Rng& rng,
                                   bool detach_model_in_proposal) {
  return estimate(Mode::kReinforceFull, kind, model, proposal, y, num_particles, rng,
                  detach_model_in_proposal);
}

GradientSample draw_gradient(const GradientProblem& problem, std::size_t num_particles,
                             Rng& rng) {
  const bool detach = problem.detach_model_in_proposal;
  switch (problem.estimator) {
    case GradEstimator::kReparam:
      return grad_reparam(problem.kind, problem.model, problem.proposal, problem.y, num_particles,
                          rng, detach);
    case GradEstimator::kReinforceReparam:
      return grad_reinforce_reparam(problem.kind, problem.model, problem.proposal, problem.y,
                                    num_particles, rng, detach);
    case GradEstimator::kReinforceFull:
      return grad_reinforce_full(problem.kind, problem.model, problem.proposal, problem.y,
                                 num_particles, rng, detach);
  }
  throw std::logic_error("unhandled estimator");
}

std::vector<GradientSample> sample_gradients(const GradientProblem& problem,
                                             std::size_t num_particles, std::size_t count,
                                             Rng& rng) {
  const std::uint64_t master = rng.next_u64();
  std::vector<GradientSample> out(count);
  detail::parallel_for(count, [&](std::size_t n) {
    Rng rep = Rng::derive(master, n);
    out[n] = draw_gradient(problem, num_particles, rep);
  });
  return out;
}

ParamVector finite_difference(const std::function<double(const ParamVector&)>& f,
                              const ParamVector& at, double h, ParamMask mask) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  ParamVector grad = at.zeros_like();
  for (std::size_t i = 0; i < at.size(); ++i) {
    if (!at.in_mask(i, mask)) continue;
    ParamVector plus = at;
    ParamVector minus = at;
    plus[i] += h;
    minus[i] -= h;
    grad[i] = (f(plus) - f(minus)) / (2.0 * h);
  }
  return grad;
}

const ComponentStats& GradStats::component(const std::string& name) const {
  for (const auto& c : components) {
    if (c.name == name) return c;
  }
  throw std::out_of_range("no statistics for component " + name);
}

MeanVar mean_and_variance(std::span<const double> values) {
  MeanVar mv;
  if (values.empty()) return mv;
  double sum = 0.0;
  for (double v : values) sum += v;
  mv.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mv.mean) * (v - mv.mean);
    mv.variance = ss / static_cast<double>(values.size() - 1);
  }
  return mv;
}

GradStats gradient_stats(const std::vector<GradientSample>& samples, ParamMask mask,
                         bool keep_samples) {
  GradStats stats;
  stats.count = samples.size();
  if (samples.empty()) return stats;
  const ParamVector& layout = samples.front().gradient;
  std::vector<double> column(samples.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!layout.in_mask(i, mask)) continue;
    for (std::size_t n = 0; n < samples.size(); ++n) column[n] = samples[n].gradient[i];
    const MeanVar mv = mean_and_variance(column);
    ComponentStats c;
    c.name = layout.names()[i];
    c.mean = mv.mean;
    c.std = std::sqrt(mv.variance);
    c.standard_error = c.std / std::sqrt(static_cast<double>(samples.size()));
    c.snr = c.std > 0.0 ? std::abs(c.mean) / c.std : std::numeric_limits<double>::quiet_NaN();
    if (keep_samples) c.samples = column;
    stats.components.push_back(std::move(c));
  }
  return stats;
}

std::vector<GradStats> snr_profile(const GradientProblem& problem, ParamMask mask,
                                   const std::vector<std::size_t>& particle_counts,
                                   std::size_t count, Rng& rng, bool keep_samples) {
  if (count < 100) throw std::invalid_argument("SNR profiles need at least 100 samples per K");
  std::vector<GradStats> out;
  for (std::size_t K : particle_counts) {
    Rng stream = rng.split();
    GradStats s = gradient_stats(sample_gradients(problem, K, count, stream), mask, keep_samples);
    s.num_particles = K;
    out.push_back(std::move(s));
  }
  return out;
}

double snr_standard_error(double snr, std::size_t n) {
  // Delta method for |mean| / std with approximately normal samples.
  return std::sqrt((1.0 + 0.5 * snr * snr) / static_cast<double>(n));
}

double log_log_slope(std::span<const double> particle_counts, std::span<const double> snr) {
  if (particle_counts.size() != snr.size() || snr.size() < 2) {
    throw std::invalid_argument("slope fit needs matching inputs with at least two points");
  }
  const auto n = static_cast<double>(snr.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < snr.size(); ++i) {
    const double x = std::log(particle_counts[i]);
    const double y = std::log(snr[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

VarianceRatioTest variance_ratio_test(std::span<const double> first,
                                      std::span<const double> second, double sigma_multiple) {
  if (first.size() < 2 || second.size() < 2) {
    throw std::invalid_argument("variance-ratio test needs at least two samples per group");
  }
  const double v1 = mean_and_variance(first).variance;
  const double v2 = mean_and_variance(second).variance;
  VarianceRatioTest test;
  test.log_ratio = std::log(v1 / v2);
  test.threshold = sigma_multiple * std::sqrt(2.0 / static_cast<double>(first.size() - 1) +
                                              2.0 / static_cast<double>(second.size() - 1));
  test.significant = test.log_ratio > test.threshold;
  return test;
}

}  // namespace aesmc
