// The only translation unit that includes cpp-httplib.
#include "httplib.h"

#include "clarifykit/gateway.hpp"

namespace clarifykit::gateway {

namespace {

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(const EndpointConfig& config) : config_(config) {
    std::string base = config.base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    const auto scheme_end = base.find("://");
    if (scheme_end == std::string::npos) {
      throw PreconditionError("CLARIFY_API_BASE must include a scheme: " + config.base_url);
    }
    const auto path_start = base.find('/', scheme_end + 3);
    origin_ = path_start == std::string::npos ? base : base.substr(0, path_start);
    path_ = (path_start == std::string::npos ? std::string() : base.substr(path_start)) + config.path;
  }

  HttpReply post(const std::string& body) override {
    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      throw TransportError("POST " + origin_ + path_ + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }

 private:
  EndpointConfig config_;
  std::string origin_;
  std::string path_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(const EndpointConfig& config) {
  if (config.base_url.empty()) {
    throw PreconditionError("no endpoint configured: set CLARIFY_API_BASE (or use a mock script)");
  }
  return std::make_shared<HttpTransport>(config);
}

}  // namespace clarifykit::gateway
