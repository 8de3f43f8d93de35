#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace aesmc::cli {

enum class ColumnType { kReal, kInt, kString };

struct Column {
  std::string name;
  ColumnType type = ColumnType::kReal;
};

using CsvSchema = std::vector<Column>;
using CsvValue = std::variant<double, std::int64_t, std::string>;
using CsvRecord = std::vector<CsvValue>;

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checks that every record matches the schema (arity, types, strings free of
/// commas, quotes and line breaks). Throws CsvError naming the record/column.
void validate_records(const std::vector<CsvRecord>& records, const CsvSchema& schema);

/// Header plus one line per record, LF line endings; reals use %.17g
/// ("nan", "inf", "-inf" for non-finite values).
std::string format_csv(const std::vector<CsvRecord>& records, const CsvSchema& schema);

/// Validates all records, then writes the file. Nothing is written when
/// validation fails.
void emit_csv(const std::vector<CsvRecord>& records, const CsvSchema& schema,
              const std::string& path);

/// Parses text produced by format_csv back into records.
std::vector<CsvRecord> parse_csv(const std::string& text, const CsvSchema& schema);
std::vector<CsvRecord> read_csv(const std::string& path, const CsvSchema& schema);

std::string format_real(double v);

}  // namespace aesmc::cli
