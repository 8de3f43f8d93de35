#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aesmc::cli {

/// Error in a configuration; the message names the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ValueType { kInt, kUint64, kReal, kBool, kString, kUintList };

std::string to_string(ValueType type);

struct KeySpec {
  std::string name;
  ValueType type = ValueType::kString;
  /// Absent means the key is required.
  std::optional<std::string> default_value;
  std::string help;
  /// Allowed values for kString keys; empty means any.
  std::vector<std::string> choices;
};

using Schema = std::vector<KeySpec>;

/// Raw key/value text in file order, before validation.
using RawEntries = std::vector<std::pair<std::string, std::string>>;

/// Parses the flat config grammar:
///
///   line    := blank | comment | entry
///   comment := '#' anything
///   entry   := key '=' value [ '#' anything ]
///   key     := [A-Za-z_][A-Za-z0-9_]*
///
/// Whitespace around keys and values is ignored. Values are typed by the
/// schema: integers, reals (any strtod form), booleans (true/false), bare
/// strings, or comma-separated lists of non-negative integers.
RawEntries parse_config_text(const std::string& text);
RawEntries read_config_file(const std::string& path);

/// A fully validated configuration with every schema key resolved.
class ExperimentConfig {
 public:
  std::string experiment;

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint64(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<std::size_t> get_uint_list(const std::string& key) const;

  /// Resolved values in canonical text form, keyed by name.
  const std::map<std::string, std::string>& values() const { return values_; }
  /// "default", "file" or "flag" for each key.
  const std::map<std::string, std::string>& sources() const { return sources_; }

  void set(const std::string& key, const std::string& canonical, const std::string& source);

 private:
  const std::string& raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> sources_;
};

/// Validates file entries and flag overrides (flags win) against `schema`.
/// Throws ConfigError on unknown, duplicate, missing or ill-typed keys.
ExperimentConfig resolve_config(const std::string& experiment, const Schema& schema,
                                const RawEntries& file_entries, const RawEntries& flag_entries);

/// Canonical text for a value of the given type; throws ConfigError naming
/// `key` when the text does not parse.
std::string canonicalize(const std::string& key, ValueType type, const std::string& text,
                         const std::vector<std::string>& choices = {});

}  // namespace aesmc::cli
