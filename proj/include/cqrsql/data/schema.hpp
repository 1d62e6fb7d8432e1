#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cqrsql {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ColumnType { Text, Number, Time, Boolean, Others };

inline ColumnType parse_column_type(const std::string& s) {
  if (s == "text") return ColumnType::Text;
  if (s == "number") return ColumnType::Number;
  if (s == "time") return ColumnType::Time;
  if (s == "boolean") return ColumnType::Boolean;
  return ColumnType::Others;
}

inline const char* to_string(ColumnType t) {
  switch (t) {
    case ColumnType::Text: return "text";
    case ColumnType::Number: return "number";
    case ColumnType::Time: return "time";
    case ColumnType::Boolean: return "boolean";
    case ColumnType::Others: return "others";
  }
  return "others";
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Lowercases and splits on whitespace and punctuation. Underscores split too,
/// so schema identifiers like "singer_in_concert" tokenize into words.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct Column {
  std::string name;                // SQL identifier
  std::vector<std::string> words;  // natural-language tokens
  ColumnType type = ColumnType::Text;
  std::size_t table = 0;
};

struct Table {
  std::string name;
  std::vector<std::string> words;
  std::vector<std::size_t> columns;  // global column ids, in schema order
};

/// One database: tables, columns (global ids), keys.
struct Schema {
  std::string database_id;
  std::vector<Table> tables;
  std::vector<Column> columns;
  std::vector<std::size_t> primary_keys;
  std::vector<std::pair<std::size_t, std::size_t>> foreign_keys;

  std::size_t item_count() const { return tables.size() + columns.size(); }

  std::optional<std::size_t> find_table(const std::string& name) const {
    const std::string n = to_lower(name);
    for (std::size_t i = 0; i < tables.size(); ++i)
      if (to_lower(tables[i].name) == n) return i;
    return std::nullopt;
  }

  std::optional<std::size_t> find_column(std::size_t table, const std::string& name) const {
    const std::string n = to_lower(name);
    for (std::size_t c : tables.at(table).columns)
      if (to_lower(columns[c].name) == n) return c;
    return std::nullopt;
  }

  /// Checks the structural invariants; throws DataError on the first violation.
  void validate() const {
    if (tables.empty()) throw DataError("schema '" + database_id + "' has no tables");
    for (std::size_t i = 0; i < tables.size(); ++i) {
      for (std::size_t j = i + 1; j < tables.size(); ++j)
        if (to_lower(tables[i].name) == to_lower(tables[j].name))
          throw DataError("schema '" + database_id + "': duplicate table '" + tables[i].name + "'");
      if (tables[i].columns.empty())
        throw DataError("schema '" + database_id + "': table '" + tables[i].name + "' has no columns");
      for (std::size_t a = 0; a < tables[i].columns.size(); ++a)
        for (std::size_t b = a + 1; b < tables[i].columns.size(); ++b)
          if (to_lower(columns[tables[i].columns[a]].name) == to_lower(columns[tables[i].columns[b]].name))
            throw DataError("schema '" + database_id + "': duplicate column '" +
                            columns[tables[i].columns[a]].name + "' in table '" + tables[i].name + "'");
    }
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c].table >= tables.size())
        throw DataError("schema '" + database_id + "': column '" + columns[c].name + "' has no table");
    for (auto k : primary_keys)
      if (k >= columns.size()) throw DataError("schema '" + database_id + "': primary key out of range");
    for (auto [a, b] : foreign_keys)
      if (a >= columns.size() || b >= columns.size())
        throw DataError("schema '" + database_id + "': foreign key references a missing column");
  }
};

}  // namespace cqrsql
