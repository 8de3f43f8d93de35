#include "aesmc/cli/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "aesmc/version.hpp"

namespace aesmc::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 initialisation failed");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xF];
  }
  return out;
}

RunManifest::RunManifest(fs::path out_dir, const ExperimentConfig& config)
    : dir_(std::move(out_dir)), path_(dir_ / "manifest.json"), config_(config) {}

void RunManifest::begin() {
  fs::create_directories(dir_);
  write("incomplete", "");
}

void RunManifest::add_output(const std::string& file_name) { outputs_.push_back(file_name); }

void RunManifest::finish(bool thresholds_passed, const std::vector<std::string>& failures,
                         double wall_seconds) {
  ordered_json extra;
  extra["thresholds_passed"] = thresholds_passed;
  extra["failed_checks"] = failures;
  extra["wall_clock_seconds"] = wall_seconds;
  write("complete", extra.dump());
}

void RunManifest::fail(const std::string& error, double wall_seconds) {
  ordered_json extra;
  extra["error"] = error;
  extra["wall_clock_seconds"] = wall_seconds;
  write("incomplete", extra.dump());
}

void RunManifest::write(const std::string& status, const std::string& extra_json) const {
  ordered_json j;
  j["status"] = status;
  j["experiment"] = config_.experiment;
  j["library_version"] = kVersion;
  j["seed"] = config_.get_uint64("seed");
  ordered_json cfg = ordered_json::object();
  for (const auto& [key, value] : config_.values()) {
    cfg[key] = {{"value", value}, {"source", config_.sources().at(key)}};
  }
  j["config"] = cfg;
  ordered_json outputs = ordered_json::array();
  if (status == "complete") {
    for (const auto& name : outputs_) {
      outputs.push_back({{"file", name}, {"sha256", sha256_file(dir_ / name)}});
    }
  }
  j["outputs"] = outputs;
  if (!extra_json.empty()) {
    const ordered_json extra = ordered_json::parse(extra_json);
    for (const auto& [k, v] : extra.items()) j[k] = v;
  }
  const fs::path tmp = path_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path_);
}

}  // namespace aesmc::cli
