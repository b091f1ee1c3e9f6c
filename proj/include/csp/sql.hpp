#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace csp::sql {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::string token, std::size_t offset)
      : std::runtime_error(message), token_(std::move(token)), offset_(offset) {}
  const std::string& token() const { return token_; }
  std::size_t offset() const { return offset_; }

 private:
  std::string token_;
  std::size_t offset_;
};

/// Thrown for statements outside the supported SELECT grammar (DML, DDL, CTEs, windows).
class UnsupportedError : public ParseError {
 public:
  using ParseError::ParseError;
};

enum class TokenKind { keyword, identifier, string, number, placeholder, op, lparen, rparen, comma, dot, semicolon, end };

enum class PlaceholderKind { column, table, value };

struct Token {
  TokenKind kind = TokenKind::end;
  std::string text;  // verbatim source slice
  std::size_t begin = 0;
  std::size_t end = 0;
  PlaceholderKind placeholder = PlaceholderKind::value;

  bool is_keyword(std::string_view upper_word) const;
  bool is_op(std::string_view op) const { return kind == TokenKind::op && text == op; }
};

std::vector<Token> tokenize(std::string_view sql);

/// What a token does in the statement; drives every rendering mode.
enum class Role {
  keyword,
  function_name,
  type_name,
  table_ref,
  column_ref,
  qualifier,      // T1 in T1.name
  qualifier_dot,  // the dot after a qualifier
  alias_def,      // T1 in "singer AS T1", cnt in "count(*) AS cnt"
  alias_as,       // AS introducing an alias
  literal,
  literal_sign,   // unary minus folded into a numeric literal
  op,
  star,
  punct,
  terminator,     // trailing semicolon
};

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive token index
  bool empty() const { return begin >= end; }
};

struct OrderItem {
  Range expr;
  bool descending = false;
};

struct SelectCore {
  int scope = -1;
  bool distinct = false;
  std::vector<Range> select_items;     // alias excluded
  std::vector<Range> from_items;       // table token or parenthesised subquery
  std::vector<Range> join_conditions;  // ON conjuncts
  std::vector<Range> where;            // top-level AND conjuncts
  std::vector<Range> group_by;
  std::vector<Range> having;
  std::vector<OrderItem> order_by;
  std::optional<Range> limit;
};

struct Query {
  SelectCore core;
  std::string set_op;  // "", "UNION", "UNION ALL", "INTERSECT", "EXCEPT"
  std::unique_ptr<Query> next;
};

struct ScopeTable {
  std::string name;   // empty for a derived table
  std::string alias;  // empty when unaliased
  std::size_t token = static_cast<std::size_t>(-1);
};

struct Scope {
  int parent = -1;
  std::vector<ScopeTable> tables;
};

struct ColumnRef {
  std::size_t token = 0;
  std::size_t qualifier = static_cast<std::size_t>(-1);  // token index of T1 in T1.name
  int scope = -1;
  bool has_qualifier() const { return qualifier != static_cast<std::size_t>(-1); }
};

/// A literal compared directly against a column (col = 'x', col IN (...), col BETWEEN ...).
struct LiteralBinding {
  std::size_t literal = 0;  // token index
  std::size_t column = 0;   // index into ParsedSql::columns
};

struct ParsedSql {
  std::string source;
  std::vector<Token> tokens;  // terminated by an end token
  std::vector<Role> roles;    // parallel to tokens
  std::vector<Scope> scopes;
  std::vector<ColumnRef> columns;
  std::vector<std::size_t> tables;    // token indices of table references
  std::vector<std::size_t> literals;  // token indices
  std::vector<LiteralBinding> bindings;
  std::unique_ptr<Query> root;
  bool nested = false;

  std::size_t size() const { return tokens.empty() ? 0 : tokens.size() - 1; }

  /// True when the outermost query (or any member of its set-operation
  /// chain) carries ORDER BY.
  bool outer_order_by() const;
};

/// Parses one Spider-class SELECT statement.
/// Throws ParseError or UnsupportedError.
ParsedSql parse(std::string_view sql);

/// Content of a string literal with quotes removed and doubled quotes
/// collapsed; number literals are returned as written.
std::string literal_value(const Token& token);

bool is_string_literal(const Token& token);

/// Aggregate function names (lowercase).
bool is_aggregate(std::string_view name);

/// Reserved words recognised by the lexer.
bool is_reserved_word(std::string_view word);

}  // namespace csp::sql
