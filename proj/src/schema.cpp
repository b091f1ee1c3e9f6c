#include "csp/schema.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "csp/util.hpp"

namespace csp {

ValueKind value_kind_from_string(std::string_view declared) {
  std::string d = to_lower(declared);
  if (d == "text") return ValueKind::text;
  if (d == "number") return ValueKind::number;
  if (d == "time") return ValueKind::time;
  if (d == "boolean") return ValueKind::boolean;
  return ValueKind::other;
}

std::string to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::text: return "text";
    case ValueKind::number: return "number";
    case ValueKind::time: return "time";
    case ValueKind::boolean: return "boolean";
    case ValueKind::other: return "other";
  }
  return "other";
}

int Schema::find_table(std::string_view name) const {
  for (std::size_t i = 0; i < tables.size(); ++i)
    if (iequals(tables[i], name)) return static_cast<int>(i);
  return -1;
}

int Schema::find_column(int table, std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].table == table && iequals(columns[i].name, name)) return static_cast<int>(i);
  return -1;
}

std::vector<int> Schema::columns_of(int table) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].table == table) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<std::string> Schema::identifiers() const {
  std::set<std::string> ids;
  for (const auto& t : tables) ids.insert(to_lower(t));
  for (const auto& c : columns) ids.insert(to_lower(c.name));
  return {ids.begin(), ids.end()};
}

void Schema::validate() const {
  const std::string where = "schema '" + db_id + "': ";
  std::set<std::string> seen_tables;
  for (const auto& t : tables) {
    if (t.empty()) throw std::invalid_argument(where + "empty table name");
    if (!seen_tables.insert(to_lower(t)).second)
      throw std::invalid_argument(where + "duplicate table name '" + t + "'");
  }
  std::set<std::pair<int, std::string>> seen_columns;
  for (const auto& c : columns) {
    if (c.table < 0 || c.table >= static_cast<int>(tables.size()))
      throw std::invalid_argument(where + "column '" + c.name + "' has invalid table index " +
                                  std::to_string(c.table));
    if (!seen_columns.insert({c.table, to_lower(c.name)}).second)
      throw std::invalid_argument(where + "duplicate column '" + c.name + "' in table '" +
                                  tables[static_cast<std::size_t>(c.table)] + "'");
  }
  if (!sample_rows.empty()) {
    if (sample_rows.size() != tables.size())
      throw std::invalid_argument(where + "sample_rows must have one row per table");
    for (std::size_t t = 0; t < tables.size(); ++t) {
      const auto& row = sample_rows[t];
      if (!row.empty() && row.size() != columns_of(static_cast<int>(t)).size())
        throw std::invalid_argument(where + "sample row for '" + tables[t] +
                                    "' does not match its column count");
    }
  }
}

std::string natural_name(std::string_view identifier) {
  std::string out(identifier);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

}  // namespace csp
