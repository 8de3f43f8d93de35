#include "aesmc/cli/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <tuple>

#include "aesmc/cli/csv.hpp"
#include "aesmc/cli/manifest.hpp"
#include "aesmc/elbo.hpp"
#include "aesmc/grad.hpp"
#include "aesmc/oracle.hpp"
#include "aesmc/particle.hpp"

namespace aesmc::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Schemas
// ---------------------------------------------------------------------------

const std::vector<std::string> kKinds{"VAE", "IS", "SMC"};
const std::vector<std::string> kTrainKinds{"IS", "SMC"};
const std::vector<std::string> kProposals{"bootstrap", "affine"};
const std::vector<std::string> kMasks{"theta", "phi", "both"};

KeySpec key(std::string name, ValueType type, std::optional<std::string> def, std::string help,
            std::vector<std::string> choices = {}) {
  return {std::move(name), type, std::move(def), std::move(help), std::move(choices)};
}

Schema common(const std::string& experiment) {
  return {key("seed", ValueType::kUint64, "1", "master seed"),
          key("out", ValueType::kString, "results/" + experiment, "output directory")};
}

Schema data_keys() {
  return {key("T", ValueType::kInt, "200", "sequence length"),
          key("theta1_true", ValueType::kReal, "0.9", "transition coefficient used to simulate"),
          key("theta2_true", ValueType::kReal, "1.0", "emission coefficient used to simulate"),
          key("data_seed", ValueType::kUint64, "2024", "seed of the simulated sequence")};
}

Schema operator+(Schema a, const Schema& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Schema train_keys(bool alt) {
  Schema s{
      key("init_theta1", ValueType::kReal, "0.1", "initial theta1"),
      key("init_theta2", ValueType::kReal, "0.1", "initial theta2"),
      key("proposal", ValueType::kString, alt ? "affine" : "bootstrap", "proposal family",
          kProposals),
      key("learning_rate", ValueType::kReal, "0.01", "SGA step size"),
      key("steps", ValueType::kInt, "500", "number of SGA steps"),
      key("trainable", ValueType::kString, alt ? "both" : "theta", "parameters updated", kMasks),
      key("cadence", ValueType::kInt, "1", "record every this many steps"),
      key("normalize_by_length", ValueType::kBool, "true", "ascend ELBO / T"),
      key("detach", ValueType::kBool, "true",
          "do not differentiate theta through a bootstrap proposal"),
      key("quality_particles", ValueType::kInt, alt ? "10" : "0",
          "particles of the proposal-quality probe (0 disables it)"),
      key("quality_replicates", ValueType::kInt, "20", "replicates of the proposal-quality probe"),
      key("quality_kind", ValueType::kString, "SMC", "sampler of the quality probe", kTrainKinds),
      key("quality_cadence", ValueType::kInt, "0", "probe every this many steps (0: final only)"),
  };
  if (alt) {
    s = s + Schema{key("theta_kind", ValueType::kString, "SMC", "objective for theta", kTrainKinds),
                   key("theta_K", ValueType::kInt, "1000", "particles for theta"),
                   key("phi_kind", ValueType::kString, "IS", "objective for phi", kTrainKinds),
                   key("phi_K", ValueType::kInt, "10", "particles for phi"),
                   key("compare_joint", ValueType::kBool, "false",
                       "also train jointly with (theta_kind, theta_K) and compare")};
  } else {
    s = s + Schema{key("kind", ValueType::kString, "SMC", "objective", kKinds),
                   key("K", ValueType::kInt, "100", "number of particles"),
                   key("require_improvement", ValueType::kBool, "true",
                       "fail unless the exact log marginal increases (theta training)")};
  }
  return s;
}

std::map<std::string, Schema> build_schemas() {
  std::map<std::string, Schema> m;
  m["simulate"] = common("simulate") + data_keys();
  m["train"] = common("train") + data_keys() + train_keys(false);
  m["alt-train"] = common("alt-train") + data_keys() + train_keys(true);
  m["snr"] = common("snr") + data_keys() +
             Schema{key("model", ValueType::kString, "unknown_mean", "model",
                        {"unknown_mean", "lgssm"}),
                    key("x_obs", ValueType::kReal, "2.3", "observation of the unknown-mean model"),
                    key("mu_q", ValueType::kReal, "0.01", "proposal mean (unknown_mean)"),
                    key("log_var_q", ValueType::kReal, "0.01", "proposal log-variance"),
                    key("theta1", ValueType::kReal, "0.1", "evaluation theta1 (lgssm)"),
                    key("theta2", ValueType::kReal, "0.1", "evaluation theta2 (lgssm)"),
                    key("kind", ValueType::kString, "IS", "objective", kKinds),
                    key("estimator", ValueType::kString, "reparam", "gradient estimator",
                        {"reparam", "reinforce_reparam", "reinforce_full"}),
                    key("K_values", ValueType::kUintList, "1,10,100,1000", "particle counts"),
                    key("samples", ValueType::kInt, "10000", "gradient draws per K"),
                    key("mask", ValueType::kString, "phi", "components reported", kMasks),
                    key("component", ValueType::kString, "mu_q", "component checked for decay"),
                    key("check_decay", ValueType::kBool, "true",
                        "require strictly decreasing SNR with log-log slope in [-0.8, -0.2]")};
  m["grad-compare"] =
      common("grad-compare") + data_keys() +
      Schema{key("theta1", ValueType::kReal, "0.1", "evaluation theta1"),
             key("theta2", ValueType::kReal, "0.1", "evaluation theta2"),
             key("kind", ValueType::kString, "SMC", "objective", kKinds),
             key("K", ValueType::kInt, "16", "number of particles"),
             key("samples", ValueType::kInt, "100", "gradient draws per estimator"),
             key("detach", ValueType::kBool, "true", "detach theta in the bootstrap proposal"),
             key("component", ValueType::kString, "theta1", "component of the variance test")};
  m["kl-check"] = common("kl-check") +
                  Schema{key("source", ValueType::kString, "bundled", "HMM source",
                             {"bundled", "random"}),
                         key("num_specs", ValueType::kInt, "1", "random HMMs to draw"),
                         key("states", ValueType::kInt, "2", "states of random HMMs"),
                         key("symbols", ValueType::kInt, "2", "observation symbols"),
                         key("T", ValueType::kInt, "2", "horizon"),
                         key("K", ValueType::kInt, "2", "number of particles"),
                         key("proposal", ValueType::kString, "bootstrap", "proposal",
                             {"bootstrap", "posterior", "random"})};
  m["infer-grid"] = common("infer-grid") + data_keys() +
                    Schema{key("train_K", ValueType::kUintList, "10,100,1000", "K_train values"),
                           key("test_K", ValueType::kUintList, "10,100,1000", "K_test values"),
                           key("learning_rate", ValueType::kReal, "0.01", "SGA step size"),
                           key("steps", ValueType::kInt, "500", "SGA steps per cell"),
                           key("replicates", ValueType::kInt, "20", "quality replicates"),
                           key("check_trends", ValueType::kBool, "true",
                               "require the K_train / K_test / ordering trends")};
  m["zhat-check"] = common("zhat-check") +
                    Schema{key("T", ValueType::kInt, "5", "sequence length"),
                           key("theta1", ValueType::kReal, "0.9", "transition coefficient"),
                           key("theta2", ValueType::kReal, "1.0", "emission coefficient"),
                           key("data_seed", ValueType::kUint64, "2024", "seed of the sequence"),
                           key("K", ValueType::kInt, "10", "number of particles"),
                           key("replicates", ValueType::kInt, "100000", "independent sweeps"),
                           key("z_threshold", ValueType::kReal, "3", "allowed |z-score|")};
  return m;
}

const std::map<std::string, Schema>& schemas() {
  static const std::map<std::string, Schema> m = build_schemas();
  return m;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

std::size_t positive(const ExperimentConfig& c, const std::string& key) {
  const std::int64_t v = c.get_int(key);
  if (v < 1) throw ConfigError("key '" + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

std::size_t non_negative(const ExperimentConfig& c, const std::string& key) {
  const std::int64_t v = c.get_int(key);
  if (v < 0) throw ConfigError("key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

SimulatedSequence simulate_data(const ExperimentConfig& c) {
  Rng rng(c.get_uint64("data_seed"));
  return lgssm_simulate({c.get_real("theta1_true"), c.get_real("theta2_true")}, positive(c, "T"),
                        rng);
}

class Writer {
 public:
  Writer(fs::path dir, RunManifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {}

  void csv(const std::string& name, const std::vector<CsvRecord>& records,
           const CsvSchema& schema) {
    emit_csv(records, schema, (dir_ / name).string());
    manifest_.add_output(name);
  }

  void jsonl(const std::string& name, const std::vector<ordered_json>& lines) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + name);
    for (const auto& j : lines) out << j.dump() << '\n';
    manifest_.add_output(name);
  }

 private:
  fs::path dir_;
  RunManifest& manifest_;
};

ordered_json real_json(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

ExperimentOutcome run_simulate(const ExperimentConfig& c, Writer& w) {
  const auto data = simulate_data(c);
  std::vector<CsvRecord> rows;
  for (std::size_t t = 0; t < data.observations.size(); ++t) {
    rows.push_back({static_cast<std::int64_t>(t + 1), data.latents[t], data.observations[t]});
  }
  w.csv("sequence.csv", rows,
        {{"t", ColumnType::kInt}, {"x", ColumnType::kReal}, {"y", ColumnType::kReal}});
  return {};
}

void write_trace(Writer& w, const std::string& stem, const TrainTrace& trace) {
  CsvSchema schema{{"step", ColumnType::kInt}};
  const ParamVector& layout = trace.records.empty() ? trace.final_params
                                                    : trace.records.front().params;
  for (const auto& n : layout.names()) schema.push_back({n, ColumnType::kReal});
  schema.push_back({"elbo", ColumnType::kReal});
  schema.push_back({"exact_log_marginal", ColumnType::kReal});
  schema.push_back({"quality_mean", ColumnType::kReal});
  schema.push_back({"quality_stderr", ColumnType::kReal});
  schema.push_back({"quality_degenerate", ColumnType::kInt});

  const double nan = std::nan("");
  std::vector<CsvRecord> rows;
  std::vector<ordered_json> lines;
  for (const auto& r : trace.records) {
    CsvRecord row{static_cast<std::int64_t>(r.step)};
    ordered_json j;
    j["step"] = r.step;
    ordered_json params;
    for (std::size_t i = 0; i < r.params.size(); ++i) {
      row.emplace_back(r.params[i]);
      params[r.params.names()[i]] = real_json(r.params[i]);
    }
    j["params"] = params;
    row.emplace_back(r.elbo);
    j["elbo"] = real_json(r.elbo);
    row.emplace_back(r.exact_log_marginal.value_or(nan));
    j["exact_log_marginal"] = r.exact_log_marginal ? real_json(*r.exact_log_marginal)
                                                   : ordered_json(nullptr);
    if (r.quality) {
      row.emplace_back(r.quality->mean);
      row.emplace_back(r.quality->standard_error);
      row.emplace_back(static_cast<std::int64_t>(r.quality->degenerate));
      j["quality"] = {{"mean", real_json(r.quality->mean)},
                      {"stderr", real_json(r.quality->standard_error)},
                      {"degenerate", r.quality->degenerate}};
    } else {
      row.emplace_back(nan);
      row.emplace_back(nan);
      row.emplace_back(std::int64_t{0});
      j["quality"] = nullptr;
    }
    rows.push_back(std::move(row));
    lines.push_back(std::move(j));
  }
  w.csv(stem + ".csv", rows, schema);
  w.jsonl(stem + ".jsonl", lines);
}

struct TrainSetup {
  GaussianSsm model;
  ProposalSpec proposal;
  TrainConfig config;
};

TrainSetup train_setup(const ExperimentConfig& c, const EmResult& em) {
  TrainSetup s;
  s.model = make_lgssm({c.get_real("init_theta1"), c.get_real("init_theta2")});
  s.proposal = c.get_string("proposal") == "affine" ? ProposalSpec::make_affine({})
                                                    : ProposalSpec::bootstrap();
  TrainConfig& tc = s.config;
  tc.learning_rate = c.get_real("learning_rate");
  tc.steps = positive(c, "steps");
  tc.seed = c.get_uint64("seed");
  tc.trainable = parse_param_mask(c.get_string("trainable"));
  tc.cadence = positive(c, "cadence");
  tc.normalize_by_length = c.get_bool("normalize_by_length");
  tc.detach_model_in_proposal = c.get_bool("detach");
  if (const std::size_t qk = non_negative(c, "quality_particles"); qk > 0) {
    QualityProbe probe;
    probe.theta_ref = em.theta_hat;
    probe.test_kind = parse_objective_kind(c.get_string("quality_kind"));
    probe.num_particles = qk;
    probe.replicates = positive(c, "quality_replicates");
    probe.cadence = non_negative(c, "quality_cadence");
    tc.quality = probe;
  }
  return s;
}

void write_summary(Writer& w, const std::string& name, const EmResult& em,
                   const std::vector<std::pair<std::string, const TrainTrace*>>& runs) {
  std::vector<CsvRecord> rows;
  const double nan = std::nan("");
  for (const auto& [label, trace] : runs) {
    const TraceRecord* first = trace->records.empty() ? nullptr : &trace->records.front();
    const TraceRecord* last = trace->records.empty() ? nullptr : &trace->records.back();
    const double final_lm = last ? last->exact_log_marginal.value_or(nan) : nan;
    const double quality = last && last->quality ? last->quality->mean : nan;
    rows.push_back({label, em.theta_hat.theta1, em.theta_hat.theta2, em.log_marginal_at_optimum,
                    first ? first->exact_log_marginal.value_or(nan) : nan, final_lm,
                    em.log_marginal_at_optimum - final_lm, quality,
                    static_cast<std::int64_t>(trace->diverged ? 1 : 0)});
  }
  w.csv(name, rows,
        {{"run", ColumnType::kString},
         {"em_theta1", ColumnType::kReal},
         {"em_theta2", ColumnType::kReal},
         {"em_log_marginal", ColumnType::kReal},
         {"initial_log_marginal", ColumnType::kReal},
         {"final_log_marginal", ColumnType::kReal},
         {"gap_to_em", ColumnType::kReal},
         {"final_quality", ColumnType::kReal},
         {"diverged", ColumnType::kInt}});
}

ExperimentOutcome run_train(const ExperimentConfig& c, Writer& w) {
  const auto data = simulate_data(c);
  const EmResult em = em_fit(data.observations, {0.1, 0.1});
  TrainSetup s = train_setup(c, em);
  s.config.objective = {parse_objective_kind(c.get_string("kind")), positive(c, "K")};
  const TrainTrace trace = train(s.model, s.proposal, data.observations, s.config);
  write_trace(w, "trace", trace);
  write_summary(w, "summary.csv", em, {{"train", &trace}});

  ExperimentOutcome out;
  out.check(!trace.diverged, "training diverged: " + trace.divergence_reason);
  if (c.get_bool("require_improvement") && s.config.trainable != ParamMask::kProposal &&
      !trace.diverged) {
    out.check(*trace.records.back().exact_log_marginal > *trace.records.front().exact_log_marginal,
              "exact log marginal did not increase");
  }
  return out;
}

ExperimentOutcome run_alt_train(const ExperimentConfig& c, Writer& w) {
  const auto data = simulate_data(c);
  const EmResult em = em_fit(data.observations, {0.1, 0.1});
  TrainSetup s = train_setup(c, em);
  const ObjectiveChoice theta_choice{parse_objective_kind(c.get_string("theta_kind")),
                                     positive(c, "theta_K")};
  s.config.alt = AltPair{theta_choice, {parse_objective_kind(c.get_string("phi_kind")),
                                        positive(c, "phi_K")}};
  const TrainTrace alt = train(s.model, s.proposal, data.observations, s.config);
  write_trace(w, "trace", alt);

  ExperimentOutcome out;
  out.check(!alt.diverged, "ALT training diverged: " + alt.divergence_reason);
  if (c.get_bool("compare_joint")) {
    TrainConfig joint_cfg = s.config;
    joint_cfg.alt.reset();
    joint_cfg.objective = theta_choice;
    const TrainTrace joint = train(s.model, s.proposal, data.observations, joint_cfg);
    write_trace(w, "joint_trace", joint);
    write_summary(w, "summary.csv", em, {{"alt", &alt}, {"joint", &joint}});
    out.check(!joint.diverged, "joint training diverged: " + joint.divergence_reason);
    if (!alt.diverged && !joint.diverged && alt.records.back().quality &&
        joint.records.back().quality) {
      out.check(alt.records.back().quality->mean <= joint.records.back().quality->mean,
                "ALT proposal quality is worse than joint training");
    }
  } else {
    write_summary(w, "summary.csv", em, {{"alt", &alt}});
  }
  return out;
}

ExperimentOutcome run_snr(const ExperimentConfig& c, Writer& w) {
  GradientProblem problem;
  problem.estimator = parse_grad_estimator(c.get_string("estimator"));
  problem.kind = parse_objective_kind(c.get_string("kind"));
  if (c.get_string("model") == "unknown_mean") {
    problem.model = make_unknown_mean_model();
    problem.proposal =
        ProposalSpec::make_unknown_mean({c.get_real("mu_q"), c.get_real("log_var_q")});
    problem.y = {c.get_real("x_obs")};
  } else {
    problem.model = make_lgssm({c.get_real("theta1"), c.get_real("theta2")});
    problem.proposal = ProposalSpec::bootstrap();
    problem.y = simulate_data(c).observations;
    problem.detach_model_in_proposal = true;
  }
  const auto Ks = c.get_uint_list("K_values");
  const std::size_t samples = positive(c, "samples");
  Rng rng(c.get_uint64("seed"));
  const auto profile =
      snr_profile(problem, parse_param_mask(c.get_string("mask")), Ks, samples, rng, true);

  std::vector<CsvRecord> rows;
  for (const auto& stats : profile) {
    for (const auto& comp : stats.components) {
      rows.push_back({static_cast<std::int64_t>(stats.num_particles), comp.name, comp.mean,
                      comp.std, comp.standard_error, comp.snr,
                      snr_standard_error(comp.snr, stats.count)});
    }
    CsvSchema sample_schema{{"sample", ColumnType::kInt}};
    for (const auto& comp : stats.components) sample_schema.push_back({comp.name, ColumnType::kReal});
    std::vector<CsvRecord> sample_rows;
    for (std::size_t n = 0; n < stats.count; ++n) {
      CsvRecord r{static_cast<std::int64_t>(n)};
      for (const auto& comp : stats.components) r.emplace_back(comp.samples[n]);
      sample_rows.push_back(std::move(r));
    }
    w.csv("samples_K" + std::to_string(stats.num_particles) + ".csv", sample_rows,
          sample_schema);
  }
  w.csv("snr.csv", rows,
        {{"K", ColumnType::kInt},
         {"component", ColumnType::kString},
         {"mean", ColumnType::kReal},
         {"std", ColumnType::kReal},
         {"stderr", ColumnType::kReal},
         {"snr", ColumnType::kReal},
         {"snr_stderr", ColumnType::kReal}});

  ExperimentOutcome out;
  const std::string component = c.get_string("component");
  std::vector<double> ks;
  std::vector<double> snr;
  for (const auto& stats : profile) {
    ks.push_back(static_cast<double>(stats.num_particles));
    snr.push_back(stats.component(component).snr);
  }
  const double slope = ks.size() >= 2 ? log_log_slope(ks, snr) : std::nan("");
  w.csv("snr_fit.csv", {{component, slope}},
        {{"component", ColumnType::kString}, {"log_log_slope", ColumnType::kReal}});
  if (c.get_bool("check_decay")) {
    for (std::size_t i = 1; i < snr.size(); ++i) {
      const double se = std::hypot(snr_standard_error(snr[i - 1], samples),
                                   snr_standard_error(snr[i], samples));
      out.check(snr[i] < snr[i - 1] - 3.0 * se,
                "SNR does not decrease from K=" + std::to_string(Ks[i - 1]) + " to K=" +
                    std::to_string(Ks[i]));
    }
    out.check(slope >= -0.8 && slope <= -0.2,
              "log-log SNR slope " + format_real(slope) + " outside [-0.8, -0.2]");
  }
  return out;
}

ExperimentOutcome run_grad_compare(const ExperimentConfig& c, Writer& w) {
  GradientProblem problem;
  problem.kind = parse_objective_kind(c.get_string("kind"));
  problem.model = make_lgssm({c.get_real("theta1"), c.get_real("theta2")});
  problem.proposal = ProposalSpec::bootstrap();
  problem.y = simulate_data(c).observations;
  problem.detach_model_in_proposal = c.get_bool("detach");
  const std::size_t K = positive(c, "K");
  const std::size_t samples = positive(c, "samples");
  const std::string component = c.get_string("component");
  Rng rng(c.get_uint64("seed"));

  const std::vector<GradEstimator> estimators{
      GradEstimator::kReparam, GradEstimator::kReinforceReparam, GradEstimator::kReinforceFull};
  std::vector<CsvRecord> stat_rows;
  std::vector<CsvRecord> sample_rows;
  std::map<GradEstimator, std::vector<double>> columns;
  for (GradEstimator est : estimators) {
    problem.estimator = est;
    Rng stream = rng.split();
    const GradStats stats =
        gradient_stats(sample_gradients(problem, K, samples, stream), ParamMask::kBoth, true);
    for (const auto& comp : stats.components) {
      stat_rows.push_back({to_string(est), comp.name, comp.mean, comp.std, comp.standard_error,
                           comp.snr});
      for (std::size_t n = 0; n < comp.samples.size(); ++n) {
        sample_rows.push_back({to_string(est), static_cast<std::int64_t>(n), comp.name,
                               comp.samples[n]});
      }
    }
    columns[est] = stats.component(component).samples;
  }
  w.csv("grad_stats.csv", stat_rows,
        {{"estimator", ColumnType::kString},
         {"component", ColumnType::kString},
         {"mean", ColumnType::kReal},
         {"std", ColumnType::kReal},
         {"stderr", ColumnType::kReal},
         {"snr", ColumnType::kReal}});
  w.csv("grad_samples.csv", sample_rows,
        {{"estimator", ColumnType::kString},
         {"sample", ColumnType::kInt},
         {"component", ColumnType::kString},
         {"value", ColumnType::kReal}});

  // Only the first comparison is a threshold; the second is reported as is.
  const auto test = variance_ratio_test(columns[GradEstimator::kReinforceReparam],
                                        columns[GradEstimator::kReparam]);
  const auto full = variance_ratio_test(columns[GradEstimator::kReinforceFull],
                                        columns[GradEstimator::kReinforceReparam]);
  auto test_row = [&](GradEstimator a, GradEstimator b, const VarianceRatioTest& t) {
    return CsvRecord{to_string(a), to_string(b), component, t.log_ratio, t.threshold,
                     static_cast<std::int64_t>(t.significant ? 1 : 0)};
  };
  w.csv("variance_test.csv",
        {test_row(GradEstimator::kReinforceReparam, GradEstimator::kReparam, test),
         test_row(GradEstimator::kReinforceFull, GradEstimator::kReinforceReparam, full)},
        {{"first", ColumnType::kString},
         {"second", ColumnType::kString},
         {"component", ColumnType::kString},
         {"log_variance_ratio", ColumnType::kReal},
         {"threshold", ColumnType::kReal},
         {"significant", ColumnType::kInt}});
  ExperimentOutcome out;
  out.check(test.significant,
            "reinforce_reparam variance not significantly above reparam on " + component);
  return out;
}

DiscreteHmmSpec bundled_hmm(std::size_t horizon) {
  DiscreteHmmSpec spec;
  spec.num_states = 2;
  spec.num_obs_symbols = 2;
  spec.initial = {0.6, 0.4};
  spec.transition = {{0.7, 0.3}, {0.2, 0.8}};
  spec.emission = {{0.9, 0.1}, {0.3, 0.7}};
  spec.horizon = horizon;
  return spec;
}

DiscreteProposal random_proposal(const DiscreteHmmSpec& spec, Rng& rng) {
  // Rows of a random HMM of the same shape serve as a random Markov proposal.
  const DiscreteHmmSpec donor = random_discrete_hmm(spec.num_states, 1, spec.horizon, rng);
  DiscreteProposal q;
  q.initial = donor.initial;
  for (std::size_t t = 1; t < spec.horizon; ++t) q.steps.push_back(donor.transition);
  return q;
}

ExperimentOutcome run_kl_check(const ExperimentConfig& c, Writer& w) {
  Rng rng(c.get_uint64("seed"));
  const bool bundled = c.get_string("source") == "bundled";
  const std::size_t count = bundled ? 1 : positive(c, "num_specs");
  const std::size_t T = positive(c, "T");
  const std::size_t K = positive(c, "K");
  const std::string proposal_name = c.get_string("proposal");

  ExperimentOutcome out;
  std::vector<CsvRecord> rows;
  for (std::size_t i = 0; i < count; ++i) {
    DiscreteHmmSpec spec = bundled ? bundled_hmm(T)
                                   : random_discrete_hmm(positive(c, "states"),
                                                         positive(c, "symbols"), T, rng);
    std::vector<int> y(T);
    for (std::size_t t = 0; t < T; ++t) {
      y[t] = bundled ? static_cast<int>(t % 2)
                     : static_cast<int>(rng.next_u64() % spec.num_obs_symbols);
    }
    DiscreteProposal q = proposal_name == "posterior" ? hmm_posterior_proposal(spec, y)
                         : proposal_name == "random"  ? random_proposal(spec, rng)
                                                      : discrete_bootstrap_proposal(spec);
    for (const std::string sampler : {"IS", "SMC"}) {
      const KlGapReport r = sampler == "IS" ? enumerate_kl_gap_is(spec, q, y, K)
                                            : enumerate_kl_gap_smc(spec, q, y, K);
      rows.push_back({static_cast<std::int64_t>(i), sampler, proposal_name, r.log_z_exact,
                      r.elbo_exact, r.kl_exact, r.residual, r.configurations});
      out.check(std::abs(r.residual) <= 1e-10,
                "spec " + std::to_string(i) + " " + sampler + " residual " +
                    format_real(r.residual));
      out.check(r.kl_exact >= -1e-12,
                "spec " + std::to_string(i) + " " + sampler + " negative KL");
    }
  }
  w.csv("kl.csv", rows,
        {{"spec", ColumnType::kInt},
         {"sampler", ColumnType::kString},
         {"proposal", ColumnType::kString},
         {"log_z", ColumnType::kReal},
         {"elbo", ColumnType::kReal},
         {"kl", ColumnType::kReal},
         {"residual", ColumnType::kReal},
         {"configurations", ColumnType::kReal}});
  return out;
}

ExperimentOutcome run_infer_grid(const ExperimentConfig& c, Writer& w) {
  const auto data = simulate_data(c);
  InferGridConfig g;
  g.theta = {c.get_real("theta1_true"), c.get_real("theta2_true")};
  g.train_particles = c.get_uint_list("train_K");
  g.test_particles = c.get_uint_list("test_K");
  g.learning_rate = c.get_real("learning_rate");
  g.steps = positive(c, "steps");
  g.replicates = positive(c, "replicates");
  g.seed = c.get_uint64("seed");
  const auto cells = infer_eval_grid(g, data.observations);

  std::vector<CsvRecord> rows;
  for (const auto& cell : cells) {
    rows.push_back({to_string(cell.train_kind), static_cast<std::int64_t>(cell.train_particles),
                    to_string(cell.test_kind), static_cast<std::int64_t>(cell.test_particles),
                    cell.quality.mean, cell.quality.standard_error,
                    static_cast<std::int64_t>(cell.quality.degenerate),
                    static_cast<std::int64_t>(cell.diverged ? 1 : 0), cell.learned.a,
                    cell.learned.b, cell.learned.c, cell.learned.log_var, cell.learned.b1,
                    cell.learned.c1, cell.learned.log_var1});
  }
  w.csv("grid.csv", rows,
        {{"train_kind", ColumnType::kString},
         {"train_K", ColumnType::kInt},
         {"test_kind", ColumnType::kString},
         {"test_K", ColumnType::kInt},
         {"quality_mean", ColumnType::kReal},
         {"quality_stderr", ColumnType::kReal},
         {"degenerate", ColumnType::kInt},
         {"diverged", ColumnType::kInt},
         {"a", ColumnType::kReal},
         {"b", ColumnType::kReal},
         {"c", ColumnType::kReal},
         {"log_var", ColumnType::kReal},
         {"b1", ColumnType::kReal},
         {"c1", ColumnType::kReal},
         {"log_var1", ColumnType::kReal}});

  ExperimentOutcome out;
  for (const auto& cell : cells) {
    out.check(!cell.diverged, "training diverged for " + to_string(cell.train_kind) + " K=" +
                                  std::to_string(cell.train_particles));
  }
  if (c.get_bool("check_trends")) {
    for (const auto& f : grid_trend_failures(cells)) out.check(false, f);
  }
  return out;
}

ExperimentOutcome run_zhat_check(const ExperimentConfig& c, Writer& w) {
  const GaussianSsm model = make_lgssm({c.get_real("theta1"), c.get_real("theta2")});
  Rng data_rng(c.get_uint64("data_seed"));
  const auto data = simulate(model, positive(c, "T"), data_rng);
  const double log_z = kalman_log_marginal(model, data.observations);
  const std::size_t K = positive(c, "K");
  const std::size_t R = positive(c, "replicates");
  const double threshold = c.get_real("z_threshold");
  Rng rng(c.get_uint64("seed"));

  ExperimentOutcome out;
  std::vector<CsvRecord> rows;
  for (ObjectiveKind kind : {ObjectiveKind::kIs, ObjectiveKind::kSmc}) {
    Rng stream = rng.split();
    const ElboEstimate est =
        elbo_estimate(kind, model, ProposalSpec::bootstrap(), data.observations, K, R, stream);
    std::vector<double> ratios(est.samples.size());
    for (std::size_t r = 0; r < ratios.size(); ++r) ratios[r] = std::exp(est.samples[r] - log_z);
    const MeanVar mv = mean_and_variance(ratios);
    const double se = std::sqrt(mv.variance / static_cast<double>(R));
    const double z = (mv.mean - 1.0) / se;
    rows.push_back({to_string(kind), static_cast<std::int64_t>(K), static_cast<std::int64_t>(R),
                    mv.mean * std::exp(log_z), se * std::exp(log_z), std::exp(log_z), log_z,
                    mv.mean, se, z});
    out.check(std::abs(z) <= threshold,
              to_string(kind) + " mean Z-hat is " + format_real(z) + " standard errors away");
  }
  w.csv("zhat.csv", rows,
        {{"kind", ColumnType::kString},
         {"K", ColumnType::kInt},
         {"replicates", ColumnType::kInt},
         {"mean_zhat", ColumnType::kReal},
         {"stderr_zhat", ColumnType::kReal},
         {"exact_z", ColumnType::kReal},
         {"exact_log_z", ColumnType::kReal},
         {"mean_ratio", ColumnType::kReal},
         {"stderr_ratio", ColumnType::kReal},
         {"z_score", ColumnType::kReal}});
  return out;
}

}  // namespace

void ExperimentOutcome::check(bool ok, const std::string& what) {
  if (ok) return;
  passed = false;
  failures.push_back(what);
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"simulate", "train",      "alt-train",
                                              "snr",      "grad-compare", "kl-check",
                                              "infer-grid", "zhat-check"};
  return names;
}

const Schema& experiment_schema(const std::string& experiment) {
  const auto it = schemas().find(experiment);
  if (it == schemas().end()) throw ConfigError("unknown experiment '" + experiment + "'");
  return it->second;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  const fs::path dir = config.get_string("out");
  RunManifest manifest(dir, config);
  manifest.begin();
  Writer writer(dir, manifest);
  try {
    ExperimentOutcome out;
    const std::string& name = config.experiment;
    if (name == "simulate") {
      out = run_simulate(config, writer);
    } else if (name == "train") {
      out = run_train(config, writer);
    } else if (name == "alt-train") {
      out = run_alt_train(config, writer);
    } else if (name == "snr") {
      out = run_snr(config, writer);
    } else if (name == "grad-compare") {
      out = run_grad_compare(config, writer);
    } else if (name == "kl-check") {
      out = run_kl_check(config, writer);
    } else if (name == "infer-grid") {
      out = run_infer_grid(config, writer);
    } else if (name == "zhat-check") {
      out = run_zhat_check(config, writer);
    } else {
      throw ConfigError("unknown experiment '" + name + "'");
    }
    manifest.finish(out.passed, out.failures, elapsed());
    return out;
  } catch (const std::exception& e) {
    manifest.fail(std::string(config.experiment) + ": " + e.what(), elapsed());
    throw;
  }
}

std::vector<std::string> grid_trend_failures(const std::vector<GridCell>& cells, double sigma) {
  using Key = std::tuple<ObjectiveKind, std::size_t, ObjectiveKind, std::size_t>;
  std::map<Key, const GridCell*> index;
  std::vector<ObjectiveKind> train_kinds, test_kinds;
  std::vector<std::size_t> train_ks, test_ks;
  auto note = [](auto& v, auto x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const auto& c : cells) {
    index[{c.train_kind, c.train_particles, c.test_kind, c.test_particles}] = &c;
    note(train_kinds, c.train_kind);
    note(test_kinds, c.test_kind);
    note(train_ks, c.train_particles);
    note(test_ks, c.test_particles);
  }
  std::sort(train_ks.begin(), train_ks.end());
  std::sort(test_ks.begin(), test_ks.end());

  std::vector<std::string> failures;
  auto q = [&](ObjectiveKind a, std::size_t ka, ObjectiveKind b, std::size_t kb) {
    const auto it = index.find({a, ka, b, kb});
    if (it == index.end()) throw std::invalid_argument("incomplete inference grid");
    return it->second->quality;
  };
  auto label = [](ObjectiveKind a, std::size_t ka, ObjectiveKind b, std::size_t kb) {
    return "(train " + to_string(a) + " K=" + std::to_string(ka) + ", test " + to_string(b) +
           " K=" + std::to_string(kb) + ")";
  };
  auto tol = [&](const QualityResult& x, const QualityResult& y) {
    return sigma * std::hypot(x.standard_error, y.standard_error);
  };
  for (const auto& c : cells) {
    if (!std::isfinite(c.quality.mean)) {
      failures.push_back("no valid replicate in " +
                         label(c.train_kind, c.train_particles, c.test_kind, c.test_particles));
    }
  }
  if (!failures.empty()) return failures;

  // Larger K_test must not be worse, and the largest must beat the smallest.
  for (auto a : train_kinds) {
    for (auto ka : train_ks) {
      for (auto b : test_kinds) {
        for (std::size_t i = 1; i < test_ks.size(); ++i) {
          const auto lo = q(a, ka, b, test_ks[i - 1]);
          const auto hi = q(a, ka, b, test_ks[i]);
          if (hi.mean > lo.mean + tol(lo, hi)) {
            failures.push_back("quality worsens with K_test at " + label(a, ka, b, test_ks[i]));
          }
        }
        const auto first = q(a, ka, b, test_ks.front());
        const auto last = q(a, ka, b, test_ks.back());
        if (test_ks.size() > 1 && !(last.mean < first.mean - tol(first, last))) {
          failures.push_back("no significant improvement over K_test for " +
                             label(a, ka, b, test_ks.back()));
        }
      }
    }
  }
  // Larger K_train must not be better; somewhere in each test column it must
  // be significantly worse.
  for (auto b : test_kinds) {
    for (auto kb : test_ks) {
      bool strict = false;
      for (auto a : train_kinds) {
        for (std::size_t i = 1; i < train_ks.size(); ++i) {
          const auto lo = q(a, train_ks[i - 1], b, kb);
          const auto hi = q(a, train_ks[i], b, kb);
          if (hi.mean < lo.mean - tol(lo, hi)) {
            failures.push_back("quality improves with K_train at " +
                               label(a, train_ks[i], b, kb));
          }
        }
        const auto first = q(a, train_ks.front(), b, kb);
        const auto last = q(a, train_ks.back(), b, kb);
        if (last.mean > first.mean + tol(first, last)) strict = true;
      }
      if (train_ks.size() > 1 && !strict) {
        failures.push_back("no significant worsening over K_train for test " + to_string(b) +
                           " K=" + std::to_string(kb));
      }
    }
  }
  // (train IS, test SMC) beats (train SMC, test IS) at matched K.
  const bool has_is = std::count(train_kinds.begin(), train_kinds.end(), ObjectiveKind::kIs) &&
                      std::count(test_kinds.begin(), test_kinds.end(), ObjectiveKind::kIs);
  const bool has_smc = std::count(train_kinds.begin(), train_kinds.end(), ObjectiveKind::kSmc) &&
                       std::count(test_kinds.begin(), test_kinds.end(), ObjectiveKind::kSmc);
  if (has_is && has_smc) {
    for (auto k : train_ks) {
      if (std::find(test_ks.begin(), test_ks.end(), k) == test_ks.end()) continue;
      const auto good = q(ObjectiveKind::kIs, k, ObjectiveKind::kSmc, k);
      const auto bad = q(ObjectiveKind::kSmc, k, ObjectiveKind::kIs, k);
      if (!(good.mean < bad.mean - tol(good, bad))) {
        failures.push_back("(train IS, test SMC) does not beat (train SMC, test IS) at K=" +
                           std::to_string(k));
      }
    }
  }
  return failures;
}

}  // namespace aesmc::cli
