#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aesmc/cli/config.hpp"

namespace aesmc::cli {

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// manifest.json for one run. `begin` writes it with status "incomplete"
/// before any data file exists; `finish` rewrites it with the digests of the
/// registered outputs, the outcome and the wall-clock time.
class RunManifest {
 public:
  RunManifest(std::filesystem::path out_dir, const ExperimentConfig& config);

  void begin();
  /// Registers a data file written into the output directory.
  void add_output(const std::string& file_name);
  void finish(bool thresholds_passed, const std::vector<std::string>& failures,
              double wall_seconds);
  /// Marks the run failed with a diagnostic (status stays "incomplete").
  void fail(const std::string& error, double wall_seconds);

  const std::filesystem::path& path() const { return path_; }

 private:
  void write(const std::string& status, const std::string& extra_json) const;

  std::filesystem::path dir_;
  std::filesystem::path path_;
  const ExperimentConfig& config_;
  std::vector<std::string> outputs_;
};

}  // namespace aesmc::cli
