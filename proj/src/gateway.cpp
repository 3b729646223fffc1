#include "clarifykit/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "json.hpp"
#include "json_util.hpp"

namespace clarifykit::gateway {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::system;
  if (text == "user") return Role::user;
  if (text == "assistant") return Role::assistant;
  throw ParseError("unknown role '" + std::string(text) + "'");
}

std::string_view to_string(FinishReason f) {
  switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

namespace {

FinishReason parse_finish(const json& j) {
  if (!j.is_string()) return FinishReason::stop;
  const auto s = j.get<std::string>();
  if (s == "stop" || s == "eos" || s == "end_turn") return FinishReason::stop;
  if (s == "length" || s == "max_tokens") return FinishReason::length;
  return FinishReason::error;
}

std::string fixed_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ChatRequest::validate() const {
  if (messages.empty()) throw PreconditionError("chat request has no messages");
  if (messages.front().role == Role::assistant) {
    throw PreconditionError("chat request must start with a system or user message");
  }
  if (!(temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");
  if (max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
  if (model.empty()) throw PreconditionError("chat request has no model");
}

std::chrono::milliseconds RetryPolicy::backoff_after(int attempt) const {
  const double scaled = static_cast<double>(initial_backoff.count()) *
                        std::pow(multiplier, std::max(0, attempt - 1));
  const double capped = std::min(scaled, static_cast<double>(max_backoff.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

std::string serialize_request(const ChatRequest& req) {
  ordered_json j;
  j["model"] = req.model;
  ordered_json msgs = ordered_json::array();
  for (const auto& m : req.messages) {
    ordered_json mj;
    mj["role"] = std::string(to_string(m.role));
    mj["content"] = m.content;
    msgs.push_back(std::move(mj));
  }
  j["messages"] = std::move(msgs);
  j["temperature"] = req.temperature;
  j["max_tokens"] = req.max_tokens;
  if (req.seed) j["seed"] = *req.seed;
  return detail::dump_line(j);
}

ChatRequest parse_request(std::string_view body) {
  ChatRequest req;
  try {
    const auto j = json::parse(body);
    req.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
      req.messages.push_back({parse_role(m.at("role").get<std::string>()),
                              m.at("content").get<std::string>()});
    }
    req.temperature = j.value("temperature", 0.0);
    req.max_tokens = j.value("max_tokens", 1024);
    if (auto s = j.find("seed"); s != j.end() && s->is_number_integer()) {
      req.seed = s->get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed chat request: ") + e.what());
  }
  return req;
}

std::string canonical_form(const ChatRequest& req) {
  // Length-prefixed fields: no two distinct requests share a canonical form.
  std::string out = "chat-v1";
  auto field = [&out](std::string_view name, std::string_view value) {
    out += '\n';
    out += name;
    out += ':';
    out += std::to_string(value.size());
    out += ':';
    out += value;
  };
  field("model", req.model);
  field("temperature", fixed_number(req.temperature));
  field("max_tokens", std::to_string(req.max_tokens));
  field("seed", req.seed ? std::to_string(*req.seed) : std::string("none"));
  field("messages", std::to_string(req.messages.size()));
  for (const auto& m : req.messages) {
    field("role", to_string(m.role));
    field("content", m.content);
  }
  return out;
}

std::string cache_key(const ChatRequest& req) { return io::sha256_hex(canonical_form(req)); }

ChatResponse parse_completion(std::string_view body) {
  ChatResponse r;
  try {
    const auto j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    r.content = content.is_string() ? content.get<std::string>() : std::string();
    r.finish_reason = parse_finish(choice.value("finish_reason", json("stop")));
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      r.usage.prompt_tokens = u->value("prompt_tokens", std::int64_t{0});
      r.usage.completion_tokens = u->value("completion_tokens", std::int64_t{0});
      r.usage.total_tokens = u->value("total_tokens", std::int64_t{0});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed chat completion: ") + e.what());
  }
  return r;
}

std::string make_completion_body(std::string_view content, FinishReason finish) {
  ordered_json j;
  j["object"] = "chat.completion";
  ordered_json choice;
  choice["index"] = 0;
  choice["message"] = ordered_json{{"role", "assistant"}, {"content", std::string(content)}};
  choice["finish_reason"] = std::string(to_string(finish));
  j["choices"] = ordered_json::array({choice});
  j["usage"] = ordered_json{{"prompt_tokens", 0}, {"completion_tokens", 0}, {"total_tokens", 0}};
  return detail::dump_line(j);
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<ChatResponse> ResponseCache::get(const std::string& key) const {
  const auto path = dir_ / (key + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const auto j = json::parse(io::read_file(path));
    ChatResponse r;
    r.content = j.at("content").get<std::string>();
    r.finish_reason = parse_finish(j.at("finish_reason"));
    r.usage.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
    r.usage.completion_tokens = j.value("completion_tokens", std::int64_t{0});
    r.usage.total_tokens = j.value("total_tokens", std::int64_t{0});
    r.request_digest = key;
    return r;
  } catch (const std::exception&) {
    // A corrupt entry is a miss; the next put overwrites it.
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const ChatResponse& response) const {
  ordered_json j;
  j["content"] = response.content;
  j["finish_reason"] = std::string(to_string(response.finish_reason));
  j["prompt_tokens"] = response.usage.prompt_tokens;
  j["completion_tokens"] = response.usage.completion_tokens;
  j["total_tokens"] = response.usage.total_tokens;
  io::write_file_atomic(dir_ / (key + ".json"), detail::dump_line(j) + "\n");
}

// ---------------------------------------------------------------------------

class Gateway::Slot {
 public:
  explicit Slot(Gateway& g) : g_(g) {
    std::unique_lock lock(g_.slots_mutex_);
    g_.slots_cv_.wait(lock, [this] { return g_.in_flight_ < std::max<std::size_t>(1, g_.options_.max_in_flight); });
    ++g_.in_flight_;
  }
  ~Slot() {
    {
      std::lock_guard lock(g_.slots_mutex_);
      --g_.in_flight_;
    }
    g_.slots_cv_.notify_one();
  }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  Gateway& g_;
};

Gateway::Gateway(std::shared_ptr<Transport> transport, GatewayOptions options)
    : transport_(std::move(transport)), options_(std::move(options)) {
  if (!transport_) throw PreconditionError("gateway requires a transport");
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
}

ChatResponse Gateway::complete(const ChatRequest& req) { return complete(req, options_.retry); }

ChatResponse Gateway::complete(const ChatRequest& req, const RetryPolicy& policy) {
  req.validate();
  const std::string key = cache_key(req);
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      hit->cached = true;
      hit->attempts = 0;
      return *hit;
    }
  }
  const std::string body = serialize_request(req);
  const int max_attempts = std::max(1, policy.max_attempts);
  std::string last_cause;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) options_.sleep(policy.backoff_after(attempt - 1));
    HttpReply reply;
    try {
      Slot slot(*this);
      ++transport_calls_;
      reply = transport_->post(body);
    } catch (const TransportError& e) {
      last_cause = std::string("transport: ") + e.what();
      continue;
    }
    if (reply.status == 401 || reply.status == 403) {
      throw AuthError("authentication failed (HTTP " + std::to_string(reply.status) + ")", attempt,
                      reply.body);
    }
    if (reply.status != 200) {
      last_cause = "HTTP " + std::to_string(reply.status);
      const bool retryable = reply.status >= 500 || reply.status == 408 || reply.status == 409 ||
                             reply.status == 429;
      if (!retryable) {
        throw GatewayError("request rejected: " + last_cause + " " + reply.body.substr(0, 200),
                           attempt, last_cause);
      }
      continue;
    }
    ChatResponse resp;
    try {
      resp = parse_completion(reply.body);
    } catch (const ParseError& e) {
      last_cause = e.what();
      continue;
    }
    if (resp.content.find_first_not_of(" \t\r\n") == std::string::npos) {
      last_cause = "empty content";
      continue;
    }
    resp.attempts = attempt;
    resp.request_digest = key;
    resp.cached = false;
    if (cache_) cache_->put(key, resp);
    return resp;
  }
  throw GatewayError("attempts exhausted after " + std::to_string(max_attempts) + ": " + last_cause,
                     max_attempts, last_cause);
}

// ---------------------------------------------------------------------------

EndpointConfig EndpointConfig::from_env() {
  EndpointConfig c;
  auto env = [](const char* name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name); v && *v) return std::string(v);
    return std::nullopt;
  };
  if (auto v = env("CLARIFY_API_BASE")) c.base_url = *v;
  if (auto v = env("CLARIFY_API_KEY")) c.api_key = *v;
  if (auto v = env("CLARIFY_JUDGE_MODEL")) c.judge_model = *v;
  if (auto v = env("CLARIFY_GEN_MODEL")) c.gen_model = *v;
  return c;
}

// ---------------------------------------------------------------------------

MockTransport::MockTransport(Responder responder) : responder_(std::move(responder)) {}

HttpReply MockTransport::post(const std::string& body) {
  {
    std::lock_guard lock(mutex_);
    bodies_.push_back(body);
  }
  return responder_(parse_request(body));
}

std::vector<std::string> MockTransport::recorded() const {
  std::lock_guard lock(mutex_);
  return bodies_;
}

std::size_t MockTransport::calls() const {
  std::lock_guard lock(mutex_);
  return bodies_.size();
}

HttpReply MockTransport::reply(std::string_view content, FinishReason finish) {
  return {200, make_completion_body(content, finish)};
}

HttpReply MockTransport::status(int code, std::string body) { return {code, std::move(body)}; }

namespace {

struct ScriptRule {
  std::optional<std::string> model;
  std::vector<std::string> contains;
  std::vector<json> responses;
  std::size_t served = 0;
};

HttpReply reply_from(const json& r) {
  if (r.is_string()) return MockTransport::reply(r.get<std::string>());
  if (r.is_object() && r.contains("status")) {
    return MockTransport::status(r.at("status").get<int>(), r.value("body", ""));
  }
  throw ParseError("mock script: response must be a string or {\"status\": N}");
}

}  // namespace

MockTransport::Responder scripted_responder(std::string_view script_json) {
  json doc;
  try {
    doc = json::parse(script_json);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("mock script: ") + e.what());
  }
  auto rules = std::make_shared<std::vector<ScriptRule>>();
  for (const auto& rj : doc.value("rules", json::array())) {
    ScriptRule rule;
    if (rj.contains("model")) rule.model = rj.at("model").get<std::string>();
    if (auto c = rj.find("contains"); c != rj.end()) {
      if (c->is_string()) {
        rule.contains.push_back(c->get<std::string>());
      } else {
        for (const auto& s : *c) rule.contains.push_back(s.get<std::string>());
      }
    }
    if (rj.contains("responses")) {
      for (const auto& r : rj.at("responses")) rule.responses.push_back(r);
    } else if (rj.contains("response")) {
      rule.responses.push_back(rj.at("response"));
    }
    if (rule.responses.empty()) throw ParseError("mock script: rule without response");
    rules->push_back(std::move(rule));
  }
  std::optional<json> fallback;
  if (doc.contains("default")) fallback = doc.at("default");
  auto mutex = std::make_shared<std::mutex>();

  return [rules, fallback, mutex](const ChatRequest& req) -> HttpReply {
    std::string last_user;
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
      if (it->role == Role::user) {
        last_user = it->content;
        break;
      }
    }
    std::lock_guard lock(*mutex);
    for (auto& rule : *rules) {
      if (rule.model && *rule.model != req.model) continue;
      const bool all = std::all_of(rule.contains.begin(), rule.contains.end(), [&](const auto& s) {
        return last_user.find(s) != std::string::npos;
      });
      if (!all) continue;
      const auto idx = std::min(rule.served, rule.responses.size() - 1);
      ++rule.served;
      return reply_from(rule.responses[idx]);
    }
    if (fallback) return reply_from(*fallback);
    return MockTransport::status(404, "no mock rule matched");
  };
}

MockTransport::Responder scripted_responder_file(const std::filesystem::path& path) {
  return scripted_responder(io::read_file(path));
}

}  // namespace clarifykit::gateway
