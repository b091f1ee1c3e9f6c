#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include "csp/http.hpp"
#include "csp/schema.hpp"
#include "csp/util.hpp"

namespace csp {

enum class PromptKind { generate, generate_nested, verify, revise, rephrase };

std::string to_string(PromptKind kind);
PromptKind prompt_kind_from_string(const std::string& s);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  PromptKind kind = PromptKind::generate;
  std::vector<ChatMessage> messages;
  double temperature = 0.6;
  double top_p = 0.95;
  int max_tokens = 150;

  /// Generation uses the sampling defaults; verify and revise are greedy.
  static ChatRequest for_prompt(PromptKind kind, std::string prompt);
  /// Throws std::invalid_argument.
  void validate() const;
  const std::string& prompt() const { return messages.back().content; }
};

class PromptError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Slots = std::map<std::string, std::string>;

inline constexpr std::size_t kDefaultPromptBudget = 24000;

/// Required slot names for a template kind, in template order.
std::vector<std::string> required_slots(PromptKind kind);
const std::string& template_text(PromptKind kind);

/// Substitutes {{slot}} markers in one pass; slot text is copied verbatim and
/// never re-scanned. Throws PromptError naming a missing slot, or reporting
/// the measured size when the result exceeds the budget.
std::string render_prompt(PromptKind kind, const Slots& slots, std::size_t budget = kDefaultPromptBudget);

/// "table(col1, col2, ...)" per line.
std::string render_schema_block(const Schema& schema);
/// "table: (v1, v2, ...)" per line, one sample row per table.
std::string render_sample_rows(const Schema& schema);
extern const char* const kNestingHint;

class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual std::string mode() const = 0;
  /// Throws ProviderError.
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// Scripted responses. Each line of the script is
///   {"match": {"kind"?, "ordinal"?, "contains"?}, "response" | "error", "repeat"?}
/// ordinal is 1-based and counts calls of the matched kind (all calls when
/// kind is absent); contains is a string or list of strings that must all
/// occur in the prompt. The first unused entry that matches answers the call;
/// entries without repeat are used once.
class MockProvider : public LlmProvider {
 public:
  struct Entry {
    std::optional<PromptKind> kind;
    std::optional<int> ordinal;
    std::vector<std::string> contains;
    std::optional<std::string> response;
    std::optional<std::string> error;
    bool repeat = false;
    bool used = false;
  };

  explicit MockProvider(std::vector<Entry> script);
  static std::vector<Entry> parse_script(const std::string& text);
  static MockProvider from_jsonl(const std::string& text);
  static MockProvider from_file(const std::filesystem::path& path);

  std::string mode() const override { return "mock"; }
  std::string complete(const ChatRequest& request) override;
  int calls() const;

 private:
  mutable std::mutex mu_;
  std::vector<Entry> script_;
  std::map<PromptKind, int> kind_calls_;
  int calls_ = 0;
};

struct RemoteLlmConfig {
  std::string base_url;  // LLM_API_BASE
  std::string api_key;   // LLM_API_KEY
  std::string model;     // LLM_MODEL
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
  static RemoteLlmConfig from_env();
};

/// OpenAI-compatible chat endpoint with at most four requests in flight.
class RemoteProvider : public LlmProvider {
 public:
  explicit RemoteProvider(RemoteLlmConfig cfg);
  std::string mode() const override { return "remote"; }
  std::string complete(const ChatRequest& request) override;

 private:
  RemoteLlmConfig cfg_;
  std::counting_semaphore<4> in_flight_{4};
};

std::string chat_request_body(const std::string& model, const ChatRequest& request);
/// choices[0].message.content; throws ProviderError on a malformed body.
std::string parse_chat_response(const std::string& body);

class ResponseFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeneratedPair {
  std::string question;
  std::string sql;
};

/// Reads the "Question:" and "SQL:" sections; code fences are removed.
/// Throws ResponseFormatError.
GeneratedPair parse_pair(const std::string& response);

/// SQL after an optional "SQL:" marker, fences removed. Throws ResponseFormatError.
std::string parse_sql_reply(const std::string& response);

struct Verdict {
  bool correct = false;
  bool warning = false;  // neither verdict word was found
};

/// First standalone "correct"/"incorrect" word, case-insensitive.
Verdict parse_verdict(const std::string& response);

}  // namespace csp
