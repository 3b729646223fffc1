#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clarifykit/io.hpp"

namespace clarifykit::gateway {

enum class Role { system, user, assistant };

std::string_view to_string(Role r);
Role parse_role(std::string_view text);

struct Message {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

inline constexpr double kJudgeTemperature = 0.0;
inline constexpr double kSynthesisTemperature = 1.0;

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = kJudgeTemperature;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;

  /// Throws PreconditionError on an empty message list, a leading assistant
  /// turn, negative temperature, or non-positive max_tokens.
  void validate() const;

  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason f);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
};

struct ChatResponse {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  bool cached = false;
  int attempts = 0;
  /// cache_key of the request that produced this response.
  std::string request_digest;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30'000};

  /// Delay before attempt `attempt` + 1 (attempt is 1-based).
  std::chrono::milliseconds backoff_after(int attempt) const;
};

/// All attempts failed; carries the last cause.
class GatewayError : public Error {
 public:
  GatewayError(const std::string& what, int attempts, std::string last_cause)
      : Error(what), attempts_(attempts), last_cause_(std::move(last_cause)) {}
  int attempts() const { return attempts_; }
  const std::string& last_cause() const { return last_cause_; }

 private:
  int attempts_;
  std::string last_cause_;
};

/// Credential rejected; never retried.
class AuthError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Connection-level failure raised by a Transport; retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

struct HttpReply {
  int status = 200;
  std::string body;
};

/// Sends one serialized chat-completion request body and returns the raw reply.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post(const std::string& body) = 0;
};

/// JSON wire body in the common chat-completions schema.
std::string serialize_request(const ChatRequest& req);
ChatRequest parse_request(std::string_view body);

/// Canonical text the cache key hashes: every request field, messages in
/// order, numbers in fixed notation.
std::string canonical_form(const ChatRequest& req);
std::string cache_key(const ChatRequest& req);

/// Parses a chat-completions reply body. Throws ParseError on schema mismatch.
ChatResponse parse_completion(std::string_view body);
/// Builds a chat-completions reply body carrying `content`.
std::string make_completion_body(std::string_view content, FinishReason finish = FinishReason::stop);

/// Content-addressed on-disk store: `<dir>/<digest>.json`, written atomically.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<ChatResponse> get(const std::string& key) const;
  void put(const std::string& key, const ChatResponse& response) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct GatewayOptions {
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  std::optional<std::filesystem::path> cache_dir;
  /// Replaceable for tests.
  std::function<void(std::chrono::milliseconds)> sleep;
};

class Gateway {
 public:
  Gateway(std::shared_ptr<Transport> transport, GatewayOptions options = {});

  ChatResponse complete(const ChatRequest& req);
  ChatResponse complete(const ChatRequest& req, const RetryPolicy& policy);

  std::size_t transport_calls() const { return transport_calls_.load(); }
  const GatewayOptions& options() const { return options_; }

 private:
  class Slot;

  std::shared_ptr<Transport> transport_;
  GatewayOptions options_;
  std::optional<ResponseCache> cache_;
  std::atomic<std::size_t> transport_calls_{0};
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  std::size_t in_flight_ = 0;
};

/// Endpoint settings; `from_env` reads CLARIFY_API_BASE, CLARIFY_API_KEY,
/// CLARIFY_JUDGE_MODEL and CLARIFY_GEN_MODEL.
struct EndpointConfig {
  std::string base_url;
  std::string api_key;
  /// Appended to base_url, which carries any version prefix (".../v1").
  std::string path = "/chat/completions";
  std::string judge_model = "gpt-4o-mini";
  std::string gen_model;
  std::chrono::seconds timeout{120};

  static EndpointConfig from_env();
};

std::shared_ptr<Transport> make_http_transport(const EndpointConfig& config);

/// In-process transport for tests and offline runs. Records every body it
/// receives, in arrival order.
class MockTransport : public Transport {
 public:
  using Responder = std::function<HttpReply(const ChatRequest& request)>;

  explicit MockTransport(Responder responder);

  HttpReply post(const std::string& body) override;

  std::vector<std::string> recorded() const;
  std::size_t calls() const;

  static HttpReply reply(std::string_view content, FinishReason finish = FinishReason::stop);
  static HttpReply status(int code, std::string body = "");

 private:
  Responder responder_;
  mutable std::mutex mutex_;
  std::vector<std::string> bodies_;
};

/// Rule-driven responder loaded from a JSON document:
///
///   {"rules": [{"model": "m", "contains": ["a", "b"], "response": "..."},
///              {"contains": "x", "responses": ["first", "second"]}],
///    "default": "..."}
///
/// The first rule whose `model` (if given) equals the request model and whose
/// `contains` strings all occur in the last user message wins. `responses`
/// are served in order, the last one repeating. A `{"status": 503}` object in
/// place of a string produces that HTTP status. No match and no default
/// yields HTTP 404.
MockTransport::Responder scripted_responder(std::string_view script_json);
MockTransport::Responder scripted_responder_file(const std::filesystem::path& path);

}  // namespace clarifykit::gateway
