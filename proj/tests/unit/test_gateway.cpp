#include <atomic>
#include <thread>

#include "clarifykit/gateway.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace clarifykit;
using namespace clarifykit::gateway;

namespace {

ChatRequest request(std::string text, std::string model = "m") {
  ChatRequest r;
  r.model = std::move(model);
  r.messages = {{Role::user, std::move(text)}};
  return r;
}

GatewayOptions no_sleep() {
  GatewayOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  return o;
}

}  // namespace

TEST_SUITE("gateway") {
  TEST_CASE("request validation") {
    CHECK_NOTHROW(request("hi").validate());
    ChatRequest empty;
    empty.model = "m";
    CHECK_THROWS_AS(empty.validate(), PreconditionError);
    auto lead = request("x");
    lead.messages.insert(lead.messages.begin(), Message{Role::assistant, "a"});
    CHECK_THROWS_AS(lead.validate(), PreconditionError);
    auto temp = request("x");
    temp.temperature = -0.1;
    CHECK_THROWS_AS(temp.validate(), PreconditionError);
    auto toks = request("x");
    toks.max_tokens = 0;
    CHECK_THROWS_AS(toks.validate(), PreconditionError);
  }

  TEST_CASE("cache key is stable and sensitive to every field") {
    const auto base = request("hello");
    CHECK(cache_key(base) == cache_key(request("hello")));
    CHECK(cache_key(base).size() == 64);
    auto t = base;
    t.temperature = 0.5;
    auto s = base;
    s.seed = 1;
    auto mt = base;
    mt.max_tokens = 7;
    auto role = base;
    role.messages[0].role = Role::system;
    std::set<std::string> keys = {cache_key(base), cache_key(t), cache_key(s), cache_key(mt), cache_key(role),
                                  cache_key(request("hello", "m2")), cache_key(request("hello "))};
    CHECK(keys.size() == 7);
    // Field boundaries cannot be forged by content.
    auto a = request("x");
    a.messages.push_back({Role::user, "y"});
    auto b = request("x\nrole:4:user\ncontent:1:y");
    CHECK(cache_key(a) != cache_key(b));
  }

  TEST_CASE("request bodies round-trip through the wire format") {
    auto r = request("payload \"quoted\"");
    r.messages.insert(r.messages.begin(), Message{Role::system, "sys"});
    r.seed = 42;
    r.temperature = 1.0;
    CHECK(parse_request(serialize_request(r)) == r);
    const auto resp = parse_completion(make_completion_body("body", FinishReason::length));
    CHECK(resp.content == "body");
    CHECK(resp.finish_reason == FinishReason::length);
    CHECK_THROWS_AS(parse_completion("{}"), ParseError);
  }

  TEST_CASE("second identical request is served from cache with no transport call") {
    testsupport::TempDir dir;
    auto mock = std::make_shared<MockTransport>([](const ChatRequest&) { return MockTransport::reply("answer"); });
    auto opts = no_sleep();
    opts.cache_dir = dir / "cache";
    Gateway gw(mock, opts);
    const auto first = gw.complete(request("q"));
    CHECK_FALSE(first.cached);
    CHECK(first.attempts == 1);
    const auto second = gw.complete(request("q"));
    CHECK(second.cached);
    CHECK(second.content == "answer");
    CHECK(second.request_digest == first.request_digest);
    CHECK(mock->calls() == 1);
    CHECK(std::filesystem::exists(dir / "cache" / (first.request_digest + ".json")));

    // A fresh gateway over the same directory also hits.
    Gateway again(mock, opts);
    CHECK(again.complete(request("q")).cached);
    CHECK(mock->calls() == 1);
  }

  TEST_CASE("transient failures are retried with growing backoff") {
    std::atomic<int> n{0};
    auto mock = std::make_shared<MockTransport>([&](const ChatRequest&) -> HttpReply {
      switch (n++) {
        case 0: return MockTransport::status(503);
        case 1: throw TransportError("connection reset");
        case 2: return MockTransport::status(429);
        case 3: return MockTransport::reply("   ");
        default: return MockTransport::reply("ok");
      }
    });
    std::vector<std::chrono::milliseconds> sleeps;
    GatewayOptions opts;
    opts.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };
    Gateway gw(mock, opts);
    RetryPolicy policy;
    policy.max_attempts = 5;
    policy.initial_backoff = std::chrono::milliseconds(100);
    const auto r = gw.complete(request("x"), policy);
    CHECK(r.content == "ok");
    CHECK(r.attempts == 5);
    REQUIRE(sleeps.size() == 4);
    CHECK(sleeps[0].count() == 100);
    CHECK(sleeps[1].count() == 200);
    CHECK(sleeps[3].count() == 800);
  }

  TEST_CASE("backoff is capped") {
    RetryPolicy p;
    p.initial_backoff = std::chrono::milliseconds(1000);
    p.max_backoff = std::chrono::milliseconds(3000);
    CHECK(p.backoff_after(1).count() == 1000);
    CHECK(p.backoff_after(2).count() == 2000);
    CHECK(p.backoff_after(10).count() == 3000);
  }

  TEST_CASE("empty content forever exhausts the attempts") {
    auto mock = std::make_shared<MockTransport>([](const ChatRequest&) { return MockTransport::reply(""); });
    Gateway gw(mock, no_sleep());
    RetryPolicy p;
    p.max_attempts = 2;
    try {
      gw.complete(request("x"), p);
      FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
      CHECK(e.attempts() == 2);
      CHECK(e.last_cause() == "empty content");
    }
    CHECK(mock->calls() == 2);
  }

  TEST_CASE("auth failures are not retried; client errors are not retried") {
    auto unauthorized = std::make_shared<MockTransport>([](const ChatRequest&) { return MockTransport::status(401); });
    Gateway gw(unauthorized, no_sleep());
    CHECK_THROWS_AS(gw.complete(request("x")), AuthError);
    CHECK(unauthorized->calls() == 1);

    auto bad = std::make_shared<MockTransport>([](const ChatRequest&) { return MockTransport::status(400, "bad"); });
    Gateway gw2(bad, no_sleep());
    CHECK_THROWS_AS(gw2.complete(request("x")), GatewayError);
    CHECK(bad->calls() == 1);
  }

  TEST_CASE("in-flight requests never exceed the configured bound") {
    std::atomic<int> current{0}, peak{0};
    auto mock = std::make_shared<MockTransport>([&](const ChatRequest& r) {
      const int now = ++current;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --current;
      return MockTransport::reply(r.messages.back().content);
    });
    auto opts = no_sleep();
    opts.max_in_flight = 2;
    Gateway gw(mock, opts);
    {
      std::vector<std::jthread> threads;
      for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&gw, t] {
          for (int i = 0; i < 5; ++i) gw.complete(request(std::to_string(t * 100 + i)));
        });
      }
    }
    CHECK(peak.load() <= 2);
    CHECK(gw.transport_calls() == 40);
  }

  TEST_CASE("scripted responder: model filter, all-of contains, sequences, statuses and default") {
    const auto script = R"({
      "rules": [
        {"model": "judge", "contains": ["alpha", "beta"], "response": "both"},
        {"contains": "alpha", "responses": ["first", {"status": 503}, "last"]}
      ],
      "default": "fallback"})";
    MockTransport mock(scripted_responder(script));
    Gateway gw(std::shared_ptr<Transport>(&mock, [](Transport*) {}), no_sleep());
    CHECK(gw.complete(request("alpha beta", "judge")).content == "both");
    CHECK(gw.complete(request("alpha beta", "other")).content == "first");
    CHECK(gw.complete(request("alpha")).content == "last");
    CHECK(gw.complete(request("alpha")).content == "last");
    CHECK(gw.complete(request("zzz")).content == "fallback");

    MockTransport strict(scripted_responder(R"({"rules": []})"));
    CHECK(strict.post(serialize_request(request("x"))).status == 404);
    CHECK_THROWS_AS(scripted_responder("{not json"), ParseError);
  }

  TEST_CASE("http transport refuses an empty base url") {
    EndpointConfig cfg;
    CHECK_THROWS_AS(make_http_transport(cfg), Error);
  }
}
