#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <thread>

#include "csp/http.hpp"

namespace csp {

HttpReply http_post_json(const std::string& base_url, const std::string& path, const std::string& api_key,
                         const std::string& body, std::chrono::seconds timeout) {
  std::string host = base_url;
  std::string prefix;
  const auto scheme = base_url.find("://");
  const auto slash = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash != std::string::npos) {
    host = base_url.substr(0, slash);
    prefix = base_url.substr(slash);
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(host);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  HttpReply reply;
  auto res = client.Post(prefix + path, headers, body, "application/json");
  if (!res) {
    reply.error = httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

HttpReply post_with_retries(const RetryPolicy& policy, const std::function<HttpReply()>& send,
                            const std::string& what) {
  std::string last;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto delay = policy.backoff_base * (1 << (attempt - 1));
      spdlog::warn("{}: retry {} after {} ms ({})", what, attempt, delay.count(), last);
      std::this_thread::sleep_for(delay);
    }
    HttpReply reply = send();
    if (reply.status >= 200 && reply.status < 300) return reply;
    if (reply.status == 0) {
      last = "network error: " + reply.error;
    } else if (reply.status == 429 || reply.status >= 500) {
      last = "HTTP " + std::to_string(reply.status);
    } else {
      throw ProviderError(what + ": HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 300));
    }
  }
  throw ProviderError(what + ": retries exhausted (" + last + ")", true);
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace csp
