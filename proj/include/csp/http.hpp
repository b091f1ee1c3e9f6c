#pragma once

#include <chrono>
#include <functional>
#include <stdexcept>
#include <string>

namespace csp {

/// Failure talking to a model endpoint (chat, embeddings or the mock script).
class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& what, bool retriable = false) : std::runtime_error(what), retriable_(retriable) {}
  bool retriable() const { return retriable_; }

 private:
  bool retriable_;
};

struct RetryPolicy {
  int max_retries = 3;
  /// Delay before retry i (0-based) is backoff_base * 2^i.
  std::chrono::milliseconds backoff_base{1000};
};

struct HttpReply {
  int status = 0;  // 0 when the request never got an answer
  std::string body;
  std::string error;
};

/// POSTs a JSON body to base_url + path with a bearer key. base_url may carry
/// a path prefix ("http://host:8000/v1").
HttpReply http_post_json(const std::string& base_url, const std::string& path, const std::string& api_key,
                         const std::string& body, std::chrono::seconds timeout);

/// Runs send() until it answers 2xx, retrying network errors, 429 and 5xx.
/// At most 1 + max_retries attempts. Throws ProviderError when the budget is
/// spent or the status is not retriable.
HttpReply post_with_retries(const RetryPolicy& policy, const std::function<HttpReply()>& send,
                            const std::string& what);

std::string env_or(const char* name, const std::string& fallback);

}  // namespace csp
