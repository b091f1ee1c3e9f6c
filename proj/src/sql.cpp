#include "csp/sql.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "csp/util.hpp"

namespace csp::sql {

namespace {

constexpr std::string_view kReserved[] = {
    "SELECT", "FROM",    "WHERE",   "GROUP",     "BY",      "HAVING", "ORDER",   "ASC",
    "DESC",   "LIMIT",   "OFFSET",  "AND",       "OR",      "NOT",    "IN",      "LIKE",
    "GLOB",   "BETWEEN", "IS",      "NULL",      "EXISTS",  "UNION",  "INTERSECT", "EXCEPT",
    "ALL",    "DISTINCT", "AS",     "JOIN",      "INNER",   "LEFT",   "RIGHT",   "FULL",
    "OUTER",  "CROSS",   "NATURAL", "ON",        "USING",   "CASE",   "WHEN",    "THEN",
    "ELSE",   "END",     "CAST",    "ESCAPE",
};

constexpr std::string_view kUnsupported[] = {
    "WITH", "INSERT", "UPDATE", "DELETE", "CREATE", "DROP", "ALTER", "PRAGMA", "OVER",
};

constexpr std::string_view kAggregates[] = {"count", "sum", "avg", "min", "max"};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::optional<PlaceholderKind> match_placeholder(std::string_view s, std::size_t& len) {
  // [COL] [TAB] [VAL], optionally numbered as in [COL1].
  if (s.size() < 5 || s[0] != '[') return std::nullopt;
  std::string_view tag = s.substr(1, 3);
  PlaceholderKind kind;
  if (tag == "COL") kind = PlaceholderKind::column;
  else if (tag == "TAB") kind = PlaceholderKind::table;
  else if (tag == "VAL") kind = PlaceholderKind::value;
  else return std::nullopt;
  std::size_t i = 4;
  while (i < s.size() && is_digit(s[i])) ++i;
  if (i >= s.size() || s[i] != ']') return std::nullopt;
  len = i + 1;
  return kind;
}

}  // namespace

bool Token::is_keyword(std::string_view upper_word) const {
  return kind == TokenKind::keyword && iequals(text, upper_word);
}

bool is_reserved_word(std::string_view word) {
  std::string up = to_upper(word);
  return std::find(std::begin(kReserved), std::end(kReserved), up) != std::end(kReserved) ||
         std::find(std::begin(kUnsupported), std::end(kUnsupported), up) != std::end(kUnsupported);
}

bool is_aggregate(std::string_view name) {
  std::string low = to_lower(name);
  return std::find(std::begin(kAggregates), std::end(kAggregates), low) != std::end(kAggregates);
}

bool is_string_literal(const Token& token) {
  return token.kind == TokenKind::string;
}

std::string literal_value(const Token& token) {
  if (token.kind != TokenKind::string) return token.text;
  const char q = token.text.front();
  std::string out;
  for (std::size_t i = 1; i + 1 < token.text.size(); ++i) {
    out += token.text[i];
    if (token.text[i] == q && token.text[i + 1] == q) ++i;
  }
  return out;
}

std::vector<Token> tokenize(std::string_view sql) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](TokenKind kind, std::size_t len) {
    Token t;
    t.kind = kind;
    t.text = std::string(sql.substr(i, len));
    t.begin = i;
    t.end = i + len;
    out.push_back(std::move(t));
    i += len;
  };
  while (i < sql.size()) {
    const char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '[') {
      std::size_t len = 0;
      if (auto kind = match_placeholder(sql.substr(i), len)) {
        push(TokenKind::placeholder, len);
        out.back().placeholder = *kind;
        continue;
      }
      std::size_t close = sql.find(']', i);
      if (close == std::string_view::npos) throw ParseError("unterminated bracket identifier", "[", i);
      push(TokenKind::identifier, close - i + 1);
      continue;
    }
    if (c == '\'' || c == '"') {
      std::size_t j = i + 1;
      while (true) {
        if (j >= sql.size()) throw ParseError("unterminated string literal", std::string(1, c), i);
        if (sql[j] == c) {
          if (j + 1 < sql.size() && sql[j + 1] == c) {
            j += 2;
            continue;
          }
          break;
        }
        ++j;
      }
      push(TokenKind::string, j - i + 1);
      continue;
    }
    if (c == '`') {
      std::size_t close = sql.find('`', i + 1);
      if (close == std::string_view::npos) throw ParseError("unterminated quoted identifier", "`", i);
      push(TokenKind::identifier, close - i + 1);
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < sql.size() && is_digit(sql[i + 1]))) {
      std::size_t j = i;
      while (j < sql.size() && is_digit(sql[j])) ++j;
      if (j < sql.size() && sql[j] == '.') {
        ++j;
        while (j < sql.size() && is_digit(sql[j])) ++j;
      }
      if (j < sql.size() && (sql[j] == 'e' || sql[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < sql.size() && (sql[k] == '+' || sql[k] == '-')) ++k;
        if (k < sql.size() && is_digit(sql[k])) {
          j = k;
          while (j < sql.size() && is_digit(sql[j])) ++j;
        }
      }
      if (j < sql.size() && is_ident_start(sql[j]))
        throw ParseError("malformed number", std::string(sql.substr(i, j - i + 1)), i);
      push(TokenKind::number, j - i);
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < sql.size() && is_ident_char(sql[j])) ++j;
      std::string_view word = sql.substr(i, j - i);
      push(is_reserved_word(word) ? TokenKind::keyword : TokenKind::identifier, j - i);
      continue;
    }
    switch (c) {
      case '(': push(TokenKind::lparen, 1); continue;
      case ')': push(TokenKind::rparen, 1); continue;
      case ',': push(TokenKind::comma, 1); continue;
      case '.': push(TokenKind::dot, 1); continue;
      case ';': push(TokenKind::semicolon, 1); continue;
      default: break;
    }
    static constexpr std::array<std::string_view, 6> two = {"<=", ">=", "!=", "<>", "==", "||"};
    bool matched = false;
    for (auto op : two) {
      if (sql.substr(i, 2) == op) {
        push(TokenKind::op, 2);
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("=<>+-*/%").find(c) != std::string_view::npos) {
      push(TokenKind::op, 1);
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", std::string(1, c), i);
  }
  Token end;
  end.kind = TokenKind::end;
  end.begin = end.end = sql.size();
  out.push_back(end);
  return out;
}

bool ParsedSql::outer_order_by() const {
  for (const Query* q = root.get(); q; q = q->next.get())
    if (!q->core.order_by.empty()) return true;
  return false;
}

namespace {

struct ExprInfo {
  Range range;
  enum class Kind { column, literal, other } kind = Kind::other;
  std::size_t index = 0;  // column index or literal token
  std::vector<Range> conjuncts;
};

class Parser {
 public:
  explicit Parser(std::string_view sql) {
    out_.source = std::string(sql);
    out_.tokens = tokenize(sql);
    out_.roles.assign(out_.tokens.size(), Role::punct);
  }

  ParsedSql run() {
    if (peek().kind == TokenKind::end) throw ParseError("empty SQL statement", "", 0);
    out_.root = parse_query(-1);
    if (peek().kind == TokenKind::semicolon) {
      out_.roles[pos_] = Role::terminator;
      ++pos_;
    }
    if (peek().kind != TokenKind::end) fail("unexpected token after statement");
    return std::move(out_);
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = std::min(pos_ + ahead, out_.tokens.size() - 1);
    return out_.tokens[i];
  }

  [[noreturn]] void fail(const std::string& what) const {
    const Token& t = peek();
    if (t.kind == TokenKind::end) throw ParseError(what + " at end of input", "", t.begin);
    throw ParseError(what + ": '" + t.text + "'", t.text, t.begin);
  }

  void check_supported() const {
    const Token& t = peek();
    if (t.kind != TokenKind::keyword && t.kind != TokenKind::identifier) return;
    std::string up = to_upper(t.text);
    if (std::find(std::begin(kUnsupported), std::end(kUnsupported), up) != std::end(kUnsupported))
      throw UnsupportedError("unsupported SQL construct: '" + t.text + "'", t.text, t.begin);
  }

  std::size_t take(Role role) {
    out_.roles[pos_] = role;
    return pos_++;
  }

  bool accept_keyword(std::string_view kw) {
    if (peek().is_keyword(kw)) {
      take(Role::keyword);
      return true;
    }
    return false;
  }

  void expect_keyword(std::string_view kw) {
    if (!accept_keyword(kw)) fail("expected " + std::string(kw));
  }

  void expect(TokenKind kind, const char* what) {
    if (peek().kind != kind) fail(std::string("expected ") + what);
    take(Role::punct);
  }

  std::unique_ptr<Query> parse_query(int parent) {
    check_supported();
    auto q = std::make_unique<Query>();
    q->core = parse_select_core(parent);
    if (peek().is_keyword("UNION")) {
      take(Role::keyword);
      q->set_op = "UNION";
      if (accept_keyword("ALL")) q->set_op = "UNION ALL";
    } else if (peek().is_keyword("INTERSECT") || peek().is_keyword("EXCEPT")) {
      q->set_op = to_upper(peek().text);
      take(Role::keyword);
    }
    if (!q->set_op.empty()) q->next = parse_query(parent);
    return q;
  }

  SelectCore parse_select_core(int parent) {
    check_supported();
    SelectCore core;
    core.scope = static_cast<int>(out_.scopes.size());
    out_.scopes.push_back(Scope{parent, {}});
    const int saved_scope = scope_;
    scope_ = core.scope;

    expect_keyword("SELECT");
    if (accept_keyword("DISTINCT")) core.distinct = true;
    else accept_keyword("ALL");

    do {
      core.select_items.push_back(parse_select_item());
    } while (accept_comma());

    if (accept_keyword("FROM")) parse_from(core);
    if (accept_keyword("WHERE")) core.where = parse_expr().conjuncts;
    if (peek().is_keyword("GROUP")) {
      take(Role::keyword);
      expect_keyword("BY");
      do {
        core.group_by.push_back(parse_expr().range);
      } while (accept_comma());
    }
    if (accept_keyword("HAVING")) core.having = parse_expr().conjuncts;
    if (peek().is_keyword("ORDER")) {
      take(Role::keyword);
      expect_keyword("BY");
      do {
        OrderItem item;
        item.expr = parse_expr().range;
        if (accept_keyword("DESC")) item.descending = true;
        else accept_keyword("ASC");
        core.order_by.push_back(item);
      } while (accept_comma());
    }
    if (accept_keyword("LIMIT")) {
      Range r{pos_, 0};
      parse_expr();
      if (accept_keyword("OFFSET") || accept_comma()) parse_expr();
      r.end = pos_;
      core.limit = r;
    }
    scope_ = saved_scope;
    return core;
  }

  bool accept_comma() {
    if (peek().kind == TokenKind::comma) {
      take(Role::punct);
      return true;
    }
    return false;
  }

  Range parse_select_item() {
    Range r{pos_, 0};
    if (peek().is_op("*")) {
      take(Role::star);
    } else if ((peek().kind == TokenKind::identifier) && peek(1).kind == TokenKind::dot &&
               peek(2).is_op("*")) {
      take(Role::qualifier);
      take(Role::qualifier_dot);
      take(Role::star);
    } else {
      parse_expr();
    }
    r.end = pos_;
    parse_alias();
    return r;
  }

  std::string parse_alias() {
    if (peek().is_keyword("AS")) {
      if (peek(1).kind != TokenKind::identifier && peek(1).kind != TokenKind::string)
        fail("expected alias after AS");
      take(Role::alias_as);
      return to_lower(out_.tokens[take(Role::alias_def)].text);
    }
    if (peek().kind == TokenKind::identifier) return to_lower(out_.tokens[take(Role::alias_def)].text);
    return {};
  }

  void parse_from(SelectCore& core) {
    parse_from_item(core);
    while (true) {
      if (accept_comma()) {
        parse_from_item(core);
        continue;
      }
      bool join = false;
      std::size_t save = pos_;
      accept_keyword("NATURAL");
      if (accept_keyword("LEFT") || accept_keyword("RIGHT") || accept_keyword("FULL")) accept_keyword("OUTER");
      else if (accept_keyword("INNER") || accept_keyword("CROSS")) {}
      if (accept_keyword("JOIN")) join = true;
      if (!join) {
        if (pos_ != save) fail("expected JOIN");
        break;
      }
      parse_from_item(core);
      if (accept_keyword("ON")) {
        auto e = parse_expr();
        core.join_conditions.insert(core.join_conditions.end(), e.conjuncts.begin(), e.conjuncts.end());
      } else if (accept_keyword("USING")) {
        expect(TokenKind::lparen, "(");
        do {
          if (peek().kind != TokenKind::identifier && peek().kind != TokenKind::placeholder)
            fail("expected column in USING");
          add_column(take(Role::column_ref), static_cast<std::size_t>(-1));
        } while (accept_comma());
        expect(TokenKind::rparen, ")");
      }
    }
  }

  void parse_from_item(SelectCore& core) {
    ScopeTable entry;
    Range r{pos_, 0};
    if (peek().kind == TokenKind::lparen) {
      if (!peek(1).is_keyword("SELECT")) fail("unsupported parenthesised FROM item");
      take(Role::punct);
      out_.nested = true;
      parse_query(out_.scopes[scope_].parent);
      expect(TokenKind::rparen, ")");
    } else if (peek().kind == TokenKind::identifier || peek().kind == TokenKind::placeholder) {
      entry.token = pos_;
      if (peek().kind == TokenKind::identifier) entry.name = to_lower(unquote_ident(peek().text));
      out_.tables.push_back(take(Role::table_ref));
    } else {
      check_supported();
      fail("expected table name");
    }
    r.end = pos_;
    core.from_items.push_back(r);
    entry.alias = parse_alias();
    out_.scopes[scope_].tables.push_back(entry);
  }

  static std::string unquote_ident(const std::string& text) {
    if (text.size() >= 2 && (text.front() == '`' || text.front() == '['))
      return text.substr(1, text.size() - 2);
    return text;
  }

  void add_column(std::size_t token, std::size_t qualifier) {
    ColumnRef ref;
    ref.token = token;
    ref.qualifier = qualifier;
    ref.scope = scope_;
    out_.columns.push_back(ref);
  }

  ExprInfo parse_expr() { return parse_or(); }

  ExprInfo parse_or() {
    ExprInfo first = parse_and();
    if (!peek().is_keyword("OR")) return first;
    ExprInfo out;
    out.range.begin = first.range.begin;
    while (accept_keyword("OR")) parse_and();
    out.range.end = pos_;
    out.conjuncts = {out.range};
    return out;
  }

  ExprInfo parse_and() {
    ExprInfo first = parse_not();
    if (!peek().is_keyword("AND")) {
      first.conjuncts = {first.range};
      return first;
    }
    ExprInfo out;
    out.range.begin = first.range.begin;
    out.conjuncts.push_back(first.range);
    while (accept_keyword("AND")) out.conjuncts.push_back(parse_not().range);
    out.range.end = pos_;
    return out;
  }

  ExprInfo parse_not() {
    if (peek().is_keyword("NOT") && !peek(1).is_keyword("EXISTS")) {
      std::size_t begin = take(Role::keyword);
      ExprInfo inner = parse_not();
      ExprInfo out;
      out.range = {begin, pos_};
      return out;
    }
    return parse_comparison();
  }

  void bind(const ExprInfo& a, const ExprInfo& b) {
    if (a.kind == ExprInfo::Kind::column && b.kind == ExprInfo::Kind::literal)
      out_.bindings.push_back({b.index, a.index});
    else if (b.kind == ExprInfo::Kind::column && a.kind == ExprInfo::Kind::literal)
      out_.bindings.push_back({a.index, b.index});
  }

  ExprInfo parse_comparison() {
    ExprInfo lhs = parse_additive();
    ExprInfo out;
    out.range.begin = lhs.range.begin;
    bool any = false;
    while (true) {
      const Token& t = peek();
      if (t.kind == TokenKind::op &&
          (t.text == "=" || t.text == "==" || t.text == "!=" || t.text == "<>" || t.text == "<" ||
           t.text == ">" || t.text == "<=" || t.text == ">=")) {
        take(Role::op);
        ExprInfo rhs = parse_additive();
        bind(lhs, rhs);
        any = true;
        continue;
      }
      if (t.is_keyword("IS")) {
        take(Role::keyword);
        accept_keyword("NOT");
        if (!accept_keyword("NULL")) parse_additive();
        any = true;
        continue;
      }
      std::size_t save = pos_;
      bool negated = false;
      if (t.is_keyword("NOT")) {
        take(Role::keyword);
        negated = true;
      }
      if (peek().is_keyword("IN")) {
        take(Role::keyword);
        expect(TokenKind::lparen, "(");
        if (peek().is_keyword("SELECT")) {
          out_.nested = true;
          parse_query(scope_);
        } else {
          do {
            ExprInfo item = parse_additive();
            bind(lhs, item);
          } while (accept_comma());
        }
        expect(TokenKind::rparen, ")");
        any = true;
        continue;
      }
      if (peek().is_keyword("LIKE") || peek().is_keyword("GLOB")) {
        take(Role::keyword);
        ExprInfo rhs = parse_additive();
        bind(lhs, rhs);
        if (accept_keyword("ESCAPE")) parse_additive();
        any = true;
        continue;
      }
      if (peek().is_keyword("BETWEEN")) {
        take(Role::keyword);
        ExprInfo lo = parse_additive();
        expect_keyword("AND");
        ExprInfo hi = parse_additive();
        bind(lhs, lo);
        bind(lhs, hi);
        any = true;
        continue;
      }
      if (negated) {
        out_.roles[save] = Role::punct;
        pos_ = save;
      }
      break;
    }
    if (!any) return lhs;
    out.range.end = pos_;
    return out;
  }

  ExprInfo parse_additive() {
    ExprInfo lhs = parse_multiplicative();
    if (!(peek().is_op("+") || peek().is_op("-") || peek().is_op("||"))) return lhs;
    ExprInfo out;
    out.range.begin = lhs.range.begin;
    while (peek().is_op("+") || peek().is_op("-") || peek().is_op("||")) {
      take(Role::op);
      parse_multiplicative();
    }
    out.range.end = pos_;
    return out;
  }

  ExprInfo parse_multiplicative() {
    ExprInfo lhs = parse_unary();
    if (!(peek().is_op("*") || peek().is_op("/") || peek().is_op("%"))) return lhs;
    ExprInfo out;
    out.range.begin = lhs.range.begin;
    while (peek().is_op("*") || peek().is_op("/") || peek().is_op("%")) {
      take(Role::op);
      parse_unary();
    }
    out.range.end = pos_;
    return out;
  }

  ExprInfo parse_unary() {
    if ((peek().is_op("-") || peek().is_op("+"))) {
      if (peek(1).kind == TokenKind::number) {
        std::size_t begin = take(Role::literal_sign);
        std::size_t lit = take(Role::literal);
        out_.literals.push_back(lit);
        ExprInfo e;
        e.range = {begin, pos_};
        e.kind = ExprInfo::Kind::literal;
        e.index = lit;
        return e;
      }
      std::size_t begin = take(Role::op);
      parse_unary();
      ExprInfo e;
      e.range = {begin, pos_};
      return e;
    }
    return parse_primary();
  }

  ExprInfo parse_primary() {
    check_supported();
    ExprInfo e;
    e.range.begin = pos_;
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::number:
      case TokenKind::string: {
        e.kind = ExprInfo::Kind::literal;
        e.index = take(Role::literal);
        out_.literals.push_back(e.index);
        break;
      }
      case TokenKind::placeholder: {
        if (t.placeholder == PlaceholderKind::value) {
          e.kind = ExprInfo::Kind::literal;
          e.index = take(Role::literal);
          out_.literals.push_back(e.index);
        } else {
          e.kind = ExprInfo::Kind::column;
          e.index = out_.columns.size();
          add_column(take(Role::column_ref), static_cast<std::size_t>(-1));
        }
        break;
      }
      case TokenKind::identifier: {
        if (peek(1).kind == TokenKind::lparen) {
          parse_function();
          break;
        }
        if (peek(1).kind == TokenKind::dot) {
          std::size_t qual = take(Role::qualifier);
          take(Role::qualifier_dot);
          if (peek().is_op("*")) {
            take(Role::star);
            break;
          }
          if (peek().kind != TokenKind::identifier && peek().kind != TokenKind::placeholder)
            fail("expected column name after '.'");
          e.kind = ExprInfo::Kind::column;
          e.index = out_.columns.size();
          add_column(take(Role::column_ref), qual);
          break;
        }
        e.kind = ExprInfo::Kind::column;
        e.index = out_.columns.size();
        add_column(take(Role::column_ref), static_cast<std::size_t>(-1));
        break;
      }
      case TokenKind::lparen: {
        take(Role::punct);
        if (peek().is_keyword("SELECT")) {
          out_.nested = true;
          parse_query(scope_);
        } else {
          ExprInfo inner = parse_expr();
          if (peek().kind == TokenKind::comma) {
            while (accept_comma()) parse_expr();
          } else if (inner.kind != ExprInfo::Kind::other) {
            // keep (col) bindable
            e.kind = inner.kind;
            e.index = inner.index;
          }
        }
        expect(TokenKind::rparen, ")");
        break;
      }
      case TokenKind::keyword: {
        if (t.is_keyword("EXISTS")) {
          take(Role::keyword);
          expect(TokenKind::lparen, "(");
          if (!peek().is_keyword("SELECT")) fail("expected subquery after EXISTS");
          out_.nested = true;
          parse_query(scope_);
          expect(TokenKind::rparen, ")");
          break;
        }
        if (t.is_keyword("NOT") && peek(1).is_keyword("EXISTS")) {
          take(Role::keyword);
          return parse_primary_from(e.range.begin);
        }
        if (t.is_keyword("NULL")) {
          take(Role::keyword);
          break;
        }
        if (t.is_keyword("CASE")) {
          parse_case();
          break;
        }
        if (t.is_keyword("CAST")) {
          take(Role::keyword);
          expect(TokenKind::lparen, "(");
          parse_expr();
          expect_keyword("AS");
          if (peek().kind != TokenKind::identifier) fail("expected type name");
          take(Role::type_name);
          expect(TokenKind::rparen, ")");
          break;
        }
        fail("unexpected keyword");
      }
      default:
        fail("unexpected token");
    }
    e.range.end = pos_;
    return e;
  }

  ExprInfo parse_primary_from(std::size_t begin) {
    ExprInfo inner = parse_primary();
    inner.range.begin = begin;
    inner.kind = ExprInfo::Kind::other;
    return inner;
  }

  void parse_function() {
    take(Role::function_name);
    take(Role::punct);  // (
    if (peek().is_op("*")) {
      take(Role::star);
    } else if (peek().kind != TokenKind::rparen) {
      if (!accept_keyword("DISTINCT")) accept_keyword("ALL");
      do {
        parse_expr();
      } while (accept_comma());
    }
    expect(TokenKind::rparen, ")");
  }

  void parse_case() {
    take(Role::keyword);
    if (!peek().is_keyword("WHEN")) parse_expr();
    if (!peek().is_keyword("WHEN")) fail("expected WHEN");
    while (accept_keyword("WHEN")) {
      parse_expr();
      expect_keyword("THEN");
      parse_expr();
    }
    if (accept_keyword("ELSE")) parse_expr();
    expect_keyword("END");
  }

  ParsedSql out_;
  std::size_t pos_ = 0;
  int scope_ = -1;
};

}  // namespace

ParsedSql parse(std::string_view sql) { return Parser(sql).run(); }

}  // namespace csp::sql
