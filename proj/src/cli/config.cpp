#include "aesmc/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace aesmc::cli {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_key(const std::string& key) {
  if (key.empty() || !(std::isalpha(static_cast<unsigned char>(key[0])) || key[0] == '_')) {
    return false;
  }
  return std::all_of(key.begin(), key.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_';
  });
}

[[noreturn]] void type_error(const std::string& key, ValueType type, const std::string& text) {
  throw ConfigError("key '" + key + "': expected " + to_string(type) + ", got '" + text + "'");
}

template <typename T>
bool parse_integer(const std::string& text, T& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::string to_string(ValueType type) {
  switch (type) {
    case ValueType::kInt:
      return "integer";
    case ValueType::kUint64:
      return "unsigned 64-bit integer";
    case ValueType::kReal:
      return "real";
    case ValueType::kBool:
      return "boolean";
    case ValueType::kString:
      return "string";
    case ValueType::kUintList:
      return "comma-separated list of non-negative integers";
  }
  return "?";
}

RawEntries parse_config_text(const std::string& text) {
  RawEntries entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": invalid key '" + key + "'");
    }
    entries.emplace_back(key, value);
  }
  return entries;
}

RawEntries read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string canonicalize(const std::string& key, ValueType type, const std::string& text,
                         const std::vector<std::string>& choices) {
  switch (type) {
    case ValueType::kInt: {
      std::int64_t v = 0;
      if (!parse_integer(text, v)) type_error(key, type, text);
      return std::to_string(v);
    }
    case ValueType::kUint64: {
      std::uint64_t v = 0;
      if (!parse_integer(text, v)) type_error(key, type, text);
      return std::to_string(v);
    }
    case ValueType::kReal: {
      if (text.empty()) type_error(key, type, text);
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (end != text.c_str() + text.size() || !std::isfinite(v)) type_error(key, type, text);
      // Shortest text that reads back to the same double.
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, res.ptr);
    }
    case ValueType::kBool:
      if (text == "true" || text == "1") return "true";
      if (text == "false" || text == "0") return "false";
      type_error(key, type, text);
    case ValueType::kString:
      if (text.empty()) type_error(key, type, text);
      if (!choices.empty() && std::find(choices.begin(), choices.end(), text) == choices.end()) {
        std::string allowed;
        for (const auto& c : choices) allowed += (allowed.empty() ? "" : ", ") + c;
        throw ConfigError("key '" + key + "': '" + text + "' is not one of " + allowed);
      }
      return text;
    case ValueType::kUintList: {
      std::string out;
      std::istringstream in(text);
      std::string item;
      while (std::getline(in, item, ',')) {
        std::uint64_t v = 0;
        if (!parse_integer(trim(item), v)) type_error(key, type, text);
        out += (out.empty() ? "" : ",") + std::to_string(v);
      }
      if (out.empty()) type_error(key, type, text);
      return out;
    }
  }
  type_error(key, type, text);
}

void ExperimentConfig::set(const std::string& key, const std::string& canonical,
                           const std::string& source) {
  values_[key] = canonical;
  sources_[key] = source;
}

const std::string& ExperimentConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("key '" + key + "' is not part of this experiment");
  return it->second;
}

std::int64_t ExperimentConfig::get_int(const std::string& key) const {
  return std::stoll(raw(key));
}
std::uint64_t ExperimentConfig::get_uint64(const std::string& key) const {
  return std::stoull(raw(key));
}
double ExperimentConfig::get_real(const std::string& key) const { return std::stod(raw(key)); }
bool ExperimentConfig::get_bool(const std::string& key) const { return raw(key) == "true"; }
const std::string& ExperimentConfig::get_string(const std::string& key) const { return raw(key); }

std::vector<std::size_t> ExperimentConfig::get_uint_list(const std::string& key) const {
  std::vector<std::size_t> out;
  std::istringstream in(raw(key));
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoull(item));
  return out;
}

ExperimentConfig resolve_config(const std::string& experiment, const Schema& schema,
                                const RawEntries& file_entries, const RawEntries& flag_entries) {
  auto find_spec = [&](const std::string& key) -> const KeySpec& {
    for (const auto& s : schema) {
      if (s.name == key) return s;
    }
    throw ConfigError("unknown key '" + key + "' for experiment " + experiment);
  };

  ExperimentConfig config;
  config.experiment = experiment;
  for (const auto& spec : schema) {
    if (spec.default_value) {
      config.set(spec.name, canonicalize(spec.name, spec.type, *spec.default_value, spec.choices),
                 "default");
    }
  }
  std::set<std::string> seen;
  for (const auto& [key, value] : file_entries) {
    const KeySpec& spec = find_spec(key);
    if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "' in config file");
    config.set(key, canonicalize(key, spec.type, value, spec.choices), "file");
  }
  for (const auto& [key, value] : flag_entries) {
    const KeySpec& spec = find_spec(key);
    config.set(key, canonicalize(key, spec.type, value, spec.choices), "flag");
  }
  for (const auto& spec : schema) {
    if (!config.values().count(spec.name)) {
      throw ConfigError("missing required key '" + spec.name + "' for experiment " + experiment);
    }
  }
  return config;
}

}  // namespace aesmc::cli
