#include "aesmc/cli/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace aesmc::cli {

namespace {

const char* type_name(ColumnType t) {
  switch (t) {
    case ColumnType::kReal:
      return "real";
    case ColumnType::kInt:
      return "int";
    case ColumnType::kString:
      return "string";
  }
  return "?";
}

bool matches(const CsvValue& v, ColumnType t) {
  switch (t) {
    case ColumnType::kReal:
      return std::holds_alternative<double>(v);
    case ColumnType::kInt:
      return std::holds_alternative<std::int64_t>(v);
    case ColumnType::kString:
      return std::holds_alternative<std::string>(v);
  }
  return false;
}

bool clean_field(const std::string& s) {
  return s.find_first_of(",\"\r\n") == std::string::npos;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_real(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw CsvError("invalid real field '" + s + "'");
  return v;
}

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void validate_records(const std::vector<CsvRecord>& records, const CsvSchema& schema) {
  for (const auto& c : schema) {
    if (c.name.empty() || !clean_field(c.name)) {
      throw CsvError("invalid column name '" + c.name + "'");
    }
  }
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (records[r].size() != schema.size()) {
      throw CsvError("record " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                     " fields, schema has " + std::to_string(schema.size()));
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (!matches(records[r][c], schema[c].type)) {
        throw CsvError("record " + std::to_string(r) + " column " + schema[c].name +
                       ": expected " + type_name(schema[c].type));
      }
      if (const auto* s = std::get_if<std::string>(&records[r][c]); s && !clean_field(*s)) {
        throw CsvError("record " + std::to_string(r) + " column " + schema[c].name +
                       ": strings may not contain commas, quotes or line breaks");
      }
    }
  }
}

std::string format_csv(const std::vector<CsvRecord>& records, const CsvSchema& schema) {
  validate_records(records, schema);
  std::string out;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out += ',';
    out += schema[c].name;
  }
  out += '\n';
  for (const auto& rec : records) {
    for (std::size_t c = 0; c < rec.size(); ++c) {
      if (c) out += ',';
      if (const auto* d = std::get_if<double>(&rec[c])) {
        out += format_real(*d);
      } else if (const auto* i = std::get_if<std::int64_t>(&rec[c])) {
        out += std::to_string(*i);
      } else {
        out += std::get<std::string>(rec[c]);
      }
    }
    out += '\n';
  }
  return out;
}

void emit_csv(const std::vector<CsvRecord>& records, const CsvSchema& schema,
              const std::string& path) {
  const std::string text = format_csv(records, schema);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw CsvError("failed writing " + path);
}

std::vector<CsvRecord> parse_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw CsvError("missing header");
  const auto header = split_line(line);
  if (header.size() != schema.size()) throw CsvError("header does not match schema");
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (header[c] != schema[c].name) {
      throw CsvError("header column '" + header[c] + "' does not match '" + schema[c].name + "'");
    }
  }
  std::vector<CsvRecord> records;
  while (std::getline(in, line)) {
    const auto fields = split_line(line);
    if (fields.size() != schema.size()) {
      throw CsvError("row " + std::to_string(records.size()) + " has wrong arity");
    }
    CsvRecord rec;
    for (std::size_t c = 0; c < schema.size(); ++c) {
      switch (schema[c].type) {
        case ColumnType::kReal:
          rec.emplace_back(parse_real(fields[c]));
          break;
        case ColumnType::kInt: {
          std::int64_t v = 0;
          const auto& f = fields[c];
          const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
          if (ec != std::errc() || ptr != f.data() + f.size()) {
            throw CsvError("invalid integer field '" + f + "'");
          }
          rec.emplace_back(v);
          break;
        }
        case ColumnType::kString:
          rec.emplace_back(fields[c]);
          break;
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CsvRecord> read_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), schema);
}

}  // namespace aesmc::cli
