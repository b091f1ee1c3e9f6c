#include "csp/llm_gateway.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>

namespace csp {

std::string to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::generate: return "generate";
    case PromptKind::generate_nested: return "generate_nested";
    case PromptKind::verify: return "verify";
    case PromptKind::revise: return "revise";
    case PromptKind::rephrase: return "rephrase";
  }
  return "generate";
}

PromptKind prompt_kind_from_string(const std::string& s) {
  for (auto k : {PromptKind::generate, PromptKind::generate_nested, PromptKind::verify, PromptKind::revise,
                 PromptKind::rephrase})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown prompt kind '" + s + "'");
}

ChatRequest ChatRequest::for_prompt(PromptKind kind, std::string prompt) {
  ChatRequest r;
  r.kind = kind;
  r.messages.push_back({"user", std::move(prompt)});
  if (kind == PromptKind::verify || kind == PromptKind::revise) r.temperature = 0.0;
  return r;
}

void ChatRequest::validate() const {
  if (messages.empty()) throw std::invalid_argument("chat request without messages");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
}

namespace {

const std::string kGenerate =
    "You write training data for a text-to-SQL parser over the SQLite database below.\n"
    "\n"
    "### Database schema\n"
    "{{schema_block}}\n"
    "\n"
    "### One sample row per table\n"
    "{{sample_rows}}\n"
    "\n"
    "### SQL keywords to use\n"
    "{{keywords}}\n"
    "\n"
    "Write one SQL query over this schema that uses exactly the keywords above, then a natural\n"
    "language question that the query answers. Reply in this format and nothing else:\n"
    "Question: <question>\n"
    "SQL: <query>\n";

const std::string kGenerateNested =
    "You write training data for a text-to-SQL parser over the SQLite database below.\n"
    "\n"
    "### Database schema\n"
    "{{schema_block}}\n"
    "\n"
    "### One sample row per table\n"
    "{{sample_rows}}\n"
    "\n"
    "### SQL keywords to use\n"
    "{{keywords}}\n"
    "\n"
    "### Nesting\n"
    "{{nesting_hint}}\n"
    "\n"
    "Write one SQL query over this schema that uses exactly the keywords above, then a natural\n"
    "language question that the query answers. Reply in this format and nothing else:\n"
    "Question: <question>\n"
    "SQL: <query>\n";

const std::string kVerify =
    "Check whether a SQL query answers a question over the SQLite database below.\n"
    "\n"
    "### Database schema\n"
    "{{schema_block}}\n"
    "\n"
    "### Question\n"
    "{{question}}\n"
    "\n"
    "### SQL\n"
    "{{sql}}\n"
    "\n"
    "### Result returned by the SQL executor\n"
    "{{execution_result}}\n"
    "\n"
    "Answer with one word, Correct or Incorrect, then a short reason.\n";

const std::string kRevise =
    "The SQL query below does not answer the question correctly. Fix it.\n"
    "\n"
    "### Database schema\n"
    "{{schema_block}}\n"
    "\n"
    "### Question\n"
    "{{question}}\n"
    "\n"
    "### SQL\n"
    "{{sql}}\n"
    "\n"
    "### Result returned by the SQL executor\n"
    "{{execution_result}}\n"
    "\n"
    "### Error message\n"
    "{{error_message}}\n"
    "\n"
    "Reply in this format and nothing else:\n"
    "SQL: <corrected query>\n";

const std::string kRephrase =
    "Rephrase the question below so it asks for exactly the same thing in different words.\n"
    "Keep every name, number and quoted value unchanged. Reply with the new question only.\n"
    "\n"
    "{{question}}\n";

}  // namespace

const char* const kNestingHint =
    "The query must contain a nested subquery (for example in a WHERE ... IN (...) or a comparison "
    "against (SELECT ...)).";

const std::string& template_text(PromptKind kind) {
  switch (kind) {
    case PromptKind::generate: return kGenerate;
    case PromptKind::generate_nested: return kGenerateNested;
    case PromptKind::verify: return kVerify;
    case PromptKind::revise: return kRevise;
    case PromptKind::rephrase: return kRephrase;
  }
  return kGenerate;
}

std::vector<std::string> required_slots(PromptKind kind) {
  std::vector<std::string> out;
  const std::string& t = template_text(kind);
  for (std::size_t pos = t.find("{{"); pos != std::string::npos; pos = t.find("{{", pos + 2)) {
    const auto close = t.find("}}", pos);
    std::string name = t.substr(pos + 2, close - pos - 2);
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
  }
  return out;
}

std::string render_prompt(PromptKind kind, const Slots& slots, std::size_t budget) {
  for (const auto& name : required_slots(kind))
    if (!slots.count(name)) throw PromptError("missing slot '" + name + "' for " + to_string(kind) + " prompt");
  const std::string& t = template_text(kind);
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = t.find("{{", pos);
    if (open == std::string::npos) {
      out.append(t, pos);
      break;
    }
    const auto close = t.find("}}", open);
    out.append(t, pos, open - pos);
    out += slots.at(t.substr(open + 2, close - open - 2));
    pos = close + 2;
  }
  if (out.size() > budget)
    throw PromptError(to_string(kind) + " prompt is " + std::to_string(out.size()) + " characters, budget is " +
                      std::to_string(budget));
  return out;
}

std::string render_schema_block(const Schema& schema) {
  std::string out;
  for (std::size_t t = 0; t < schema.tables.size(); ++t) {
    std::vector<std::string> cols;
    for (int c : schema.columns_of(static_cast<int>(t))) cols.push_back(schema.columns[static_cast<std::size_t>(c)].name);
    out += schema.tables[t] + "(" + join(cols, ", ") + ")\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::string render_sample_rows(const Schema& schema) {
  std::string out;
  for (std::size_t t = 0; t < schema.tables.size(); ++t) {
    const bool has = t < schema.sample_rows.size() && !schema.sample_rows[t].empty();
    out += schema.tables[t] + ": " + (has ? "(" + join(schema.sample_rows[t], ", ") + ")" : "(empty)") + "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

MockProvider::MockProvider(std::vector<Entry> script) : script_(std::move(script)) {}

std::vector<MockProvider::Entry> MockProvider::parse_script(const std::string& text) {
  std::vector<Entry> script;
  for (const auto& rec : parse_jsonl(text, "mock script")) {
    Entry e;
    if (rec.contains("match")) {
      const auto& m = rec["match"];
      if (m.contains("kind")) e.kind = prompt_kind_from_string(m["kind"].get<std::string>());
      if (m.contains("ordinal")) e.ordinal = m["ordinal"].get<int>();
      if (m.contains("contains")) {
        if (m["contains"].is_array())
          e.contains = m["contains"].get<std::vector<std::string>>();
        else
          e.contains.push_back(m["contains"].get<std::string>());
      }
    }
    if (rec.contains("response")) e.response = rec["response"].get<std::string>();
    if (rec.contains("error")) e.error = rec["error"].get<std::string>();
    if (!e.response && !e.error) throw std::invalid_argument("mock script entry without response or error");
    e.repeat = rec.value("repeat", false);
    script.push_back(std::move(e));
  }
  return script;
}

MockProvider MockProvider::from_jsonl(const std::string& text) { return MockProvider(parse_script(text)); }

MockProvider MockProvider::from_file(const std::filesystem::path& path) { return from_jsonl(read_file(path)); }

std::string MockProvider::complete(const ChatRequest& request) {
  request.validate();
  std::lock_guard lock(mu_);
  ++calls_;
  const int kind_ordinal = ++kind_calls_[request.kind];
  const std::string& prompt = request.prompt();
  for (auto& e : script_) {
    if (e.used) continue;
    if (e.kind && *e.kind != request.kind) continue;
    if (e.ordinal && *e.ordinal != (e.kind ? kind_ordinal : calls_)) continue;
    if (!std::all_of(e.contains.begin(), e.contains.end(),
                     [&](const std::string& s) { return prompt.find(s) != std::string::npos; }))
      continue;
    if (!e.repeat) e.used = true;
    if (e.error) throw ProviderError("mock: " + *e.error);
    return *e.response;
  }
  throw ProviderError("mock script exhausted at call " + std::to_string(calls_) + " (" + to_string(request.kind) +
                      " #" + std::to_string(kind_ordinal) + ")");
}

int MockProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

RemoteLlmConfig RemoteLlmConfig::from_env() {
  RemoteLlmConfig cfg;
  cfg.base_url = env_or("LLM_API_BASE", "");
  cfg.api_key = env_or("LLM_API_KEY", "");
  cfg.model = env_or("LLM_MODEL", "gpt-3.5-turbo");
  return cfg;
}

RemoteProvider::RemoteProvider(RemoteLlmConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) throw ProviderError("LLM_API_BASE is not set");
}

std::string chat_request_body(const std::string& model, const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return json{{"model", model},
              {"messages", messages},
              {"temperature", request.temperature},
              {"top_p", request.top_p},
              {"max_tokens", request.max_tokens}}
      .dump();
}

std::string parse_chat_response(const std::string& body) {
  try {
    const json doc = json::parse(body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed chat response: ") + e.what());
  }
}

std::string RemoteProvider::complete(const ChatRequest& request) {
  request.validate();
  const std::string body = chat_request_body(cfg_.model, request);
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<4>& s;
    ~Release() { s.release(); }
  } release{in_flight_};
  HttpReply reply = post_with_retries(
      cfg_.retry,
      [&] { return http_post_json(cfg_.base_url, "/chat/completions", cfg_.api_key, body, cfg_.timeout); },
      "chat completion");
  return parse_chat_response(reply.body);
}

namespace {

std::size_t find_marker(const std::string& lower, const std::string& marker, std::size_t from) {
  for (auto pos = lower.find(marker, from); pos != std::string::npos; pos = lower.find(marker, pos + 1)) {
    if (pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]))) return pos;
  }
  return std::string::npos;
}

std::string strip_fences(std::string text) {
  const auto open = text.find("```");
  if (open != std::string::npos) {
    auto body = text.find('\n', open);
    if (body == std::string::npos) body = open + 3;
    const auto close = text.find("```", body);
    text = text.substr(body, close == std::string::npos ? std::string::npos : close - body);
  }
  return trim(text);
}

}  // namespace

GeneratedPair parse_pair(const std::string& response) {
  const std::string lower = to_lower(response);
  const auto q = find_marker(lower, "question:", 0);
  if (q == std::string::npos) throw ResponseFormatError("missing marker 'Question:'");
  const auto s = find_marker(lower, "sql:", q + 9);
  if (s == std::string::npos) throw ResponseFormatError("missing marker 'SQL:'");
  GeneratedPair pair;
  pair.question = trim(strip_fences(response.substr(q + 9, s - q - 9)));
  std::string sql = response.substr(s + 4);
  if (sql.find("```") != std::string::npos) {
    sql = strip_fences(sql);
  } else {
    const auto blank = sql.find("\n\n", sql.find_first_not_of(" \t\n"));
    if (blank != std::string::npos) sql = sql.substr(0, blank);
  }
  pair.sql = trim(sql);
  while (!pair.sql.empty() && pair.sql.back() == ';') pair.sql = trim(pair.sql.substr(0, pair.sql.size() - 1));
  if (pair.question.empty()) throw ResponseFormatError("empty question");
  if (pair.sql.empty()) throw ResponseFormatError("empty SQL");
  return pair;
}

std::string parse_sql_reply(const std::string& response) {
  const std::string lower = to_lower(response);
  const auto s = find_marker(lower, "sql:", 0);
  std::string sql = s == std::string::npos ? response : response.substr(s + 4);
  sql = sql.find("```") != std::string::npos ? strip_fences(sql) : trim(sql);
  while (!sql.empty() && sql.back() == ';') sql = trim(sql.substr(0, sql.size() - 1));
  if (sql.empty()) throw ResponseFormatError("empty SQL");
  return sql;
}

Verdict parse_verdict(const std::string& response) {
  std::string word;
  auto check = [&](Verdict& v) {
    const std::string w = to_lower(word);
    word.clear();
    if (w == "correct") {
      v.correct = true;
      return true;
    }
    return w == "incorrect";
  };
  Verdict v;
  for (char c : response) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      word += c;
    } else if (!word.empty() && check(v)) {
      return v;
    }
  }
  if (!word.empty() && check(v)) return v;
  v.warning = true;
  spdlog::warn("verdict not found in response; treating as Incorrect");
  return v;
}

}  // namespace csp
