// Command-line front end: one subcommand per experiment. Every schema key is
// settable from a config file (--config) and overridable with --<key>.

#include <CLI11.hpp>
#include <iostream>
#include <map>

#include "aesmc/cli/experiments.hpp"
#include "aesmc/version.hpp"

namespace {

std::string type_hint(aesmc::cli::ValueType t) {
  switch (t) {
    case aesmc::cli::ValueType::kInt: return "INT";
    case aesmc::cli::ValueType::kUint64: return "UINT";
    case aesmc::cli::ValueType::kReal: return "REAL";
    case aesmc::cli::ValueType::kBool: return "BOOL";
    case aesmc::cli::ValueType::kString: return "TEXT";
    case aesmc::cli::ValueType::kUintList: return "LIST";
  }
  return "TEXT";
}

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;
};

}  // namespace

int main(int argc, char** argv) {
  using namespace aesmc::cli;
  CLI::App app{"Particle-filter objectives for learning state-space models"};
  app.set_version_flag("--version", aesmc::kVersion);
  app.require_subcommand(1);

  std::map<std::string, Subcommand> subs;
  for (const auto& name : experiment_names()) {
    Subcommand& sub = subs[name];
    sub.app = app.add_subcommand(name, "run the " + name + " experiment");
    sub.app->add_option("--config", sub.config_path, "key = value configuration file")
        ->check(CLI::ExistingFile);
    for (const auto& spec : experiment_schema(name)) {
      std::string help = spec.help;
      if (spec.default_value) help += " [default: " + *spec.default_value + "]";
      if (!spec.choices.empty()) {
        help += " {";
        for (std::size_t i = 0; i < spec.choices.size(); ++i) {
          help += (i ? "|" : "") + spec.choices[i];
        }
        help += "}";
      }
      sub.app->add_option("--" + spec.name, sub.flags[spec.name], help)
          ->type_name(type_hint(spec.type));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto& [name, sub] : subs) {
      if (!sub.app->parsed()) continue;
      const RawEntries file =
          sub.config_path.empty() ? RawEntries{} : read_config_file(sub.config_path);
      RawEntries overrides;
      for (const auto& spec : experiment_schema(name)) {
        if (sub.app->count("--" + spec.name) > 0) {
          overrides.emplace_back(spec.name, sub.flags[spec.name]);
        }
      }
      const ExperimentConfig config =
          resolve_config(name, experiment_schema(name), file, overrides);
      const ExperimentOutcome outcome = run_experiment(config);
      std::cout << name << ": results in " << config.get_string("out") << '\n';
      if (!outcome.passed) {
        for (const auto& f : outcome.failures) std::cerr << "threshold failed: " << f << '\n';
        return 1;
      }
      std::cout << name << ": all thresholds passed\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
