#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace csp {

enum class ValueKind { text, number, time, boolean, other };

ValueKind value_kind_from_string(std::string_view declared);
std::string to_string(ValueKind kind);

struct Column {
  int table = -1;
  std::string name;
  ValueKind kind = ValueKind::other;
};

/// A database's tables, columns and one sampled row per table.
struct Schema {
  std::string db_id;
  std::vector<std::string> tables;
  std::vector<Column> columns;
  /// One row per table (empty when the table has no rows), one display value
  /// per column of that table in declaration order.
  std::vector<std::vector<std::string>> sample_rows;

  /// Case-insensitive lookups; -1 when absent.
  int find_table(std::string_view name) const;
  int find_column(int table, std::string_view name) const;
  std::vector<int> columns_of(int table) const;

  /// Table and column names, lowercase, deduplicated.
  std::vector<std::string> identifiers() const;

  /// Throws std::invalid_argument describing the first broken invariant.
  void validate() const;
};

/// "song_name" -> "song name"; how identifiers read inside a question.
std::string natural_name(std::string_view identifier);

}  // namespace csp
