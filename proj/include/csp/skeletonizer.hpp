#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csp/schema.hpp"
#include "csp/sql.hpp"

namespace csp {

/// A SQL query reduced to its syntax: identifiers become [COL]/[TAB],
/// literals become [VAL], aliases are dropped. Two skeletons are the same
/// skeleton iff their canonical strings are equal.
struct SqlSkeleton {
  std::string skeleton;
  std::vector<std::string> token_seq;
  /// Keyword and operator units in first-occurrence order ("GROUP BY" is one unit).
  std::vector<std::string> keywords;
  bool nested = false;

  friend bool operator==(const SqlSkeleton& a, const SqlSkeleton& b) { return a.skeleton == b.skeleton; }
  friend auto operator<=>(const SqlSkeleton& a, const SqlSkeleton& b) { return a.skeleton <=> b.skeleton; }
};

enum class LinkKind { table, column, value };
enum class LinkSide { question, sql };

std::string to_string(LinkKind kind);

struct EntityLink {
  std::string surface;  // text covered by the span
  LinkKind kind = LinkKind::value;
  LinkSide side = LinkSide::sql;
  int table = -1;   // table links, and the owning table of column links
  int column = -1;  // index into Schema::columns; for value links the compared column, if any
  std::string literal;  // value links: the SQL literal token exactly as written
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct DedomainedPair {
  std::string q_de;
  SqlSkeleton z;
  std::vector<EntityLink> links;  // question-side links that were masked
};

/// Table/column a column reference resolves to under its FROM scopes.
struct ResolvedColumn {
  int table = -1;
  int column = -1;
};

std::vector<ResolvedColumn> resolve_columns(const sql::ParsedSql& parsed, const Schema& schema);

/// Links every table, column and literal in the SQL, plus question spans
/// matching a schema identifier or SQL literal (case-insensitive, longest
/// match first, trailing plural "s" ignored). Throws sql::ParseError.
std::vector<EntityLink> link_entities(std::string_view question, std::string_view sql, const Schema& schema);

/// Question-side links only, from an already-parsed statement.
std::vector<EntityLink> link_question(std::string_view question, const sql::ParsedSql& parsed,
                                      const Schema& schema);
std::vector<EntityLink> link_sql(const sql::ParsedSql& parsed, const Schema& schema);

DedomainedPair dedomain(std::string_view question, std::string_view sql, const Schema& schema);

/// Masks identifiers and literals; the schema is not consulted because
/// masking follows the parse roles alone. Throws sql::ParseError.
SqlSkeleton extract_skeleton(std::string_view sql);
SqlSkeleton skeleton_from_parsed(const sql::ParsedSql& parsed);

/// "SELECT;FROM;WHERE;[<,>,=];GROUP BY", with ";NESTING" when nested.
std::string simplify_skeleton(const SqlSkeleton& z);

std::size_t token_edit_distance(std::span<const std::string> a, std::span<const std::string> b);
std::size_t skeleton_edit_distance(const SqlSkeleton& a, const SqlSkeleton& b);

/// Words in text that equal (case-insensitively) one of the given
/// identifiers, or phrases matching one of the literal values.
std::vector<std::string> find_leaks(std::string_view text, std::span<const std::string> identifiers,
                                    std::span<const std::string> values = {});

/// Joins rendered tokens: "count(*)", "IN (SELECT ...)", "[COL], [COL]".
class TokenJoiner {
 public:
  void add(std::string_view piece, bool attaches_paren = false);
  const std::string& str() const { return out_; }

 private:
  std::string out_;
  bool glue_next_ = true;
};

}  // namespace csp
