#include "csp/skeletonizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <tuple>

#include "csp/util.hpp"

namespace csp {

using sql::ParsedSql;
using sql::Role;
using sql::TokenKind;

std::string to_string(LinkKind kind) {
  switch (kind) {
    case LinkKind::table: return "table";
    case LinkKind::column: return "column";
    case LinkKind::value: return "value";
  }
  return "value";
}

void TokenJoiner::add(std::string_view piece, bool attaches_paren) {
  if (!out_.empty() && !glue_next_ && piece != ")" && piece != ",") out_ += ' ';
  out_ += piece;
  glue_next_ = piece == "(" || attaches_paren;
}

namespace {

std::string unquote_identifier(const std::string& text) {
  if (text.size() >= 2 && (text.front() == '`' || text.front() == '['))
    return text.substr(1, text.size() - 2);
  return text;
}

std::string normalize_op(const std::string& op) {
  if (op == "<>") return "!=";
  if (op == "==") return "=";
  return op;
}

struct Word {
  std::string norm;
  std::size_t begin;
  std::size_t end;
};

std::string stem(std::string w) {
  w = to_lower(w);
  if (w.size() > 1 && w.back() == 's') w.pop_back();
  return w;
}

std::vector<Word> words_of(std::string_view text, bool with_underscore) {
  std::vector<Word> out;
  std::size_t i = 0;
  auto is_word_char = [&](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || (with_underscore && c == '_');
  };
  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    out.push_back({stem(std::string(text.substr(i, j - i))), i, j});
    i = j;
  }
  return out;
}

std::vector<std::string> phrase_of(std::string_view text) {
  std::vector<std::string> out;
  for (auto& w : words_of(text, false)) out.push_back(w.norm);
  return out;
}

struct Candidate {
  std::size_t begin;
  std::size_t end;
  LinkKind kind;
  int table;
  int column;
  std::string literal;
  int priority;  // lower wins among equal spans
  int target;    // stable tiebreak
};

}  // namespace

std::vector<ResolvedColumn> resolve_columns(const ParsedSql& parsed, const Schema& schema) {
  std::vector<ResolvedColumn> out;
  out.reserve(parsed.columns.size());
  for (const auto& ref : parsed.columns) {
    ResolvedColumn r;
    const auto& tok = parsed.tokens[ref.token];
    if (tok.kind == TokenKind::placeholder) {
      out.push_back(r);
      continue;
    }
    const std::string name = unquote_identifier(tok.text);
    if (ref.has_qualifier()) {
      const std::string q = to_lower(unquote_identifier(parsed.tokens[ref.qualifier].text));
      for (int s = ref.scope; s >= 0 && r.table < 0; s = parsed.scopes[static_cast<std::size_t>(s)].parent) {
        for (const auto& t : parsed.scopes[static_cast<std::size_t>(s)].tables) {
          if (t.alias == q || (t.alias.empty() && t.name == q) || (!t.name.empty() && t.name == q)) {
            r.table = schema.find_table(t.name);
            break;
          }
        }
      }
      if (r.table < 0) r.table = schema.find_table(q);
      if (r.table >= 0) r.column = schema.find_column(r.table, name);
    } else {
      for (int s = ref.scope; s >= 0 && r.column < 0; s = parsed.scopes[static_cast<std::size_t>(s)].parent) {
        for (const auto& t : parsed.scopes[static_cast<std::size_t>(s)].tables) {
          int ti = schema.find_table(t.name);
          if (ti < 0) continue;
          int ci = schema.find_column(ti, name);
          if (ci >= 0) {
            r.table = ti;
            r.column = ci;
            break;
          }
        }
      }
      if (r.column < 0) {
        for (std::size_t ci = 0; ci < schema.columns.size(); ++ci) {
          if (iequals(schema.columns[ci].name, name)) {
            r.table = schema.columns[ci].table;
            r.column = static_cast<int>(ci);
            break;
          }
        }
      }
    }
    out.push_back(r);
  }
  return out;
}

std::vector<EntityLink> link_sql(const ParsedSql& parsed, const Schema& schema) {
  std::vector<EntityLink> links;
  const auto resolved = resolve_columns(parsed, schema);
  for (std::size_t i = 0; i < parsed.columns.size(); ++i) {
    const auto& tok = parsed.tokens[parsed.columns[i].token];
    if (tok.kind == TokenKind::placeholder) continue;
    EntityLink l;
    l.surface = tok.text;
    l.kind = LinkKind::column;
    l.side = LinkSide::sql;
    l.table = resolved[i].table;
    l.column = resolved[i].column;
    l.begin = tok.begin;
    l.end = tok.end;
    links.push_back(std::move(l));
  }
  for (std::size_t ti : parsed.tables) {
    const auto& tok = parsed.tokens[ti];
    if (tok.kind == TokenKind::placeholder) continue;
    EntityLink l;
    l.surface = tok.text;
    l.kind = LinkKind::table;
    l.side = LinkSide::sql;
    l.table = schema.find_table(unquote_identifier(tok.text));
    l.begin = tok.begin;
    l.end = tok.end;
    links.push_back(std::move(l));
  }
  for (std::size_t li : parsed.literals) {
    const auto& tok = parsed.tokens[li];
    if (tok.kind == TokenKind::placeholder) continue;
    EntityLink l;
    l.surface = tok.text;
    l.kind = LinkKind::value;
    l.side = LinkSide::sql;
    l.literal = tok.text;
    for (const auto& b : parsed.bindings) {
      if (b.literal == li) {
        l.column = resolved[b.column].column;
        l.table = resolved[b.column].table;
        break;
      }
    }
    l.begin = tok.begin;
    l.end = tok.end;
    links.push_back(std::move(l));
  }
  std::sort(links.begin(), links.end(), [](const EntityLink& a, const EntityLink& b) { return a.begin < b.begin; });
  return links;
}

std::vector<EntityLink> link_question(std::string_view question, const ParsedSql& parsed, const Schema& schema) {
  const auto words = words_of(question, false);
  std::vector<Candidate> candidates;

  auto add_matches = [&](const std::vector<std::string>& phrase, LinkKind kind, int table, int column,
                         const std::string& literal, int priority, int target) {
    if (phrase.empty() || phrase.size() > words.size()) return;
    for (std::size_t i = 0; i + phrase.size() <= words.size(); ++i) {
      bool ok = true;
      for (std::size_t k = 0; k < phrase.size() && ok; ++k) ok = words[i + k].norm == phrase[k];
      if (ok)
        candidates.push_back({words[i].begin, words[i + phrase.size() - 1].end, kind, table, column, literal,
                              priority, target});
    }
  };

  const auto resolved = resolve_columns(parsed, schema);
  int target = 0;
  for (const auto& li : parsed.literals) {
    const auto& tok = parsed.tokens[li];
    if (tok.kind == TokenKind::placeholder) continue;
    std::string value = sql::literal_value(tok);
    // LIKE patterns match on their fixed text
    value.erase(std::remove(value.begin(), value.end(), '%'), value.end());
    int column = -1, table = -1;
    for (const auto& b : parsed.bindings) {
      if (b.literal == li) {
        column = resolved[b.column].column;
        table = resolved[b.column].table;
        break;
      }
    }
    add_matches(phrase_of(value), LinkKind::value, table, column, tok.text, 0, target++);
  }
  for (std::size_t t = 0; t < schema.tables.size(); ++t)
    add_matches(phrase_of(natural_name(schema.tables[t])), LinkKind::table, static_cast<int>(t), -1, "", 1,
                target++);
  for (std::size_t c = 0; c < schema.columns.size(); ++c)
    add_matches(phrase_of(natural_name(schema.columns[c].name)), LinkKind::column, schema.columns[c].table,
                static_cast<int>(c), "", 2, target++);

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::make_tuple(-(static_cast<long>(a.end - a.begin)), a.begin, a.priority, a.target) <
           std::make_tuple(-(static_cast<long>(b.end - b.begin)), b.begin, b.priority, b.target);
  });

  std::vector<EntityLink> links;
  for (const auto& c : candidates) {
    bool overlaps = std::any_of(links.begin(), links.end(),
                                [&](const EntityLink& l) { return c.begin < l.end && l.begin < c.end; });
    if (overlaps) continue;
    EntityLink l;
    l.surface = std::string(question.substr(c.begin, c.end - c.begin));
    l.kind = c.kind;
    l.side = LinkSide::question;
    l.table = c.table;
    l.column = c.column;
    l.literal = c.literal;
    l.begin = c.begin;
    l.end = c.end;
    links.push_back(std::move(l));
  }
  std::sort(links.begin(), links.end(), [](const EntityLink& a, const EntityLink& b) { return a.begin < b.begin; });
  return links;
}

std::vector<EntityLink> link_entities(std::string_view question, std::string_view sql_text, const Schema& schema) {
  const ParsedSql parsed = sql::parse(sql_text);
  auto links = link_question(question, parsed, schema);
  auto sql_links = link_sql(parsed, schema);
  links.insert(links.end(), sql_links.begin(), sql_links.end());
  return links;
}

namespace {

std::string placeholder_for(LinkKind kind) {
  switch (kind) {
    case LinkKind::table: return "[TAB]";
    case LinkKind::column: return "[COL]";
    case LinkKind::value: return "[VAL]";
  }
  return "[VAL]";
}

}  // namespace

DedomainedPair dedomain(std::string_view question, std::string_view sql_text, const Schema& schema) {
  const ParsedSql parsed = sql::parse(sql_text);
  DedomainedPair out;
  out.links = link_question(question, parsed, schema);
  out.q_de = std::string(question);
  for (auto it = out.links.rbegin(); it != out.links.rend(); ++it)
    out.q_de.replace(it->begin, it->end - it->begin, placeholder_for(it->kind));
  out.z = skeleton_from_parsed(parsed);
  return out;
}

SqlSkeleton skeleton_from_parsed(const ParsedSql& parsed) {
  SqlSkeleton z;
  z.nested = parsed.nested;
  TokenJoiner joiner;
  std::vector<std::pair<std::string, Role>> pieces;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const auto& tok = parsed.tokens[i];
    std::string piece;
    switch (parsed.roles[i]) {
      case Role::keyword: piece = to_upper(tok.text); break;
      case Role::function_name: piece = to_lower(tok.text); break;
      case Role::type_name: piece = to_upper(tok.text); break;
      case Role::table_ref: piece = "[TAB]"; break;
      case Role::column_ref: piece = "[COL]"; break;
      case Role::literal: piece = "[VAL]"; break;
      case Role::op: piece = normalize_op(tok.text); break;
      case Role::star: piece = "*"; break;
      case Role::punct: piece = tok.text; break;
      case Role::qualifier:
      case Role::qualifier_dot:
      case Role::alias_def:
      case Role::alias_as:
      case Role::literal_sign:
      case Role::terminator: continue;
    }
    joiner.add(piece, parsed.roles[i] == Role::function_name);
    z.token_seq.push_back(piece);
    pieces.emplace_back(piece, parsed.roles[i]);
  }
  z.skeleton = joiner.str();

  // keyword units
  bool pending_between_and = false;
  auto add_unit = [&](const std::string& u) {
    if (std::find(z.keywords.begin(), z.keywords.end(), u) == z.keywords.end()) z.keywords.push_back(u);
  };
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& [text, role] = pieces[i];
    if (role == Role::keyword) {
      if ((text == "GROUP" || text == "ORDER") && i + 1 < pieces.size() && pieces[i + 1].first == "BY") {
        add_unit(text + " BY");
        ++i;
        continue;
      }
      if (text == "AND" && pending_between_and) {
        pending_between_and = false;
        continue;
      }
      if (text == "BETWEEN") pending_between_and = true;
      add_unit(text);
    } else if (role == Role::function_name) {
      if (sql::is_aggregate(text)) add_unit(to_upper(text));
    } else if (role == Role::op) {
      add_unit(text);
    }
  }
  return z;
}

SqlSkeleton extract_skeleton(std::string_view sql_text) { return skeleton_from_parsed(sql::parse(sql_text)); }

std::string simplify_skeleton(const SqlSkeleton& z) {
  static const std::vector<std::string> kGroupExtras = {"!=", ">=", "<=", "LIKE", "GLOB", "IN", "BETWEEN",
                                                       "+",  "-",  "*",  "/",    "%",    "||"};
  static const std::set<std::string> kGrouped = {"<",  ">",    "=",    "!=", ">=", "<=", "LIKE",
                                                 "GLOB", "IN", "BETWEEN", "+", "-",  "*",  "/", "%", "||"};
  std::vector<std::string> parts;
  bool group_placed = false;
  std::string group = "[<,>,=";
  for (const auto& extra : kGroupExtras)
    if (std::find(z.keywords.begin(), z.keywords.end(), extra) != z.keywords.end()) group += "," + extra;
  group += "]";
  for (const auto& unit : z.keywords) {
    if (kGrouped.count(unit)) {
      if (!group_placed) parts.push_back(group);
      group_placed = true;
      continue;
    }
    parts.push_back(unit);
  }
  if (z.nested) parts.emplace_back("NESTING");
  return join(parts, ";");
}

std::size_t token_edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t skeleton_edit_distance(const SqlSkeleton& a, const SqlSkeleton& b) {
  return token_edit_distance(a.token_seq, b.token_seq);
}

std::vector<std::string> find_leaks(std::string_view text, std::span<const std::string> identifiers,
                                    std::span<const std::string> values) {
  std::string scrubbed(text);
  for (const char* ph : {"[COL]", "[TAB]", "[VAL]"}) {
    std::size_t pos;
    while ((pos = scrubbed.find(ph)) != std::string::npos) scrubbed.replace(pos, 5, " ");
  }
  std::vector<std::string> leaks;
  std::set<std::string> ids;
  for (const auto& id : identifiers) ids.insert(to_lower(id));
  for (const auto& w : words_of(scrubbed, true)) {
    std::string raw = to_lower(scrubbed.substr(w.begin, w.end - w.begin));
    if (ids.count(raw)) leaks.push_back(raw);
  }
  // literal values as whole-word phrases
  std::vector<std::string> text_words;
  for (const auto& w : words_of(scrubbed, false)) text_words.push_back(to_lower(scrubbed.substr(w.begin, w.end - w.begin)));
  for (const auto& v : values) {
    std::vector<std::string> phrase;
    for (const auto& w : words_of(v, false)) phrase.push_back(to_lower(v.substr(w.begin, w.end - w.begin)));
    if (phrase.empty() || phrase.size() > text_words.size()) continue;
    for (std::size_t i = 0; i + phrase.size() <= text_words.size(); ++i) {
      if (std::equal(phrase.begin(), phrase.end(), text_words.begin() + static_cast<long>(i))) {
        leaks.push_back(v);
        break;
      }
    }
  }
  return leaks;
}

}  // namespace csp
