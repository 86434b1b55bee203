#include <atomic>
#include <thread>

#include <httplib.h>

#include "helpers.hpp"
#include "opengo/error.hpp"
#include "opengo/llm_backend.hpp"

using namespace opengo;
using nlohmann::json;

namespace {

json chat_reply(const std::string& content) {
  return {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
}

class FixedTransport : public ChatTransport {
 public:
  explicit FixedTransport(json reply) : reply_(std::move(reply)) {}
  json complete(const json& request) override {
    last_request = request;
    return reply_;
  }
  json last_request;

 private:
  json reply_;
};

PlannerContext ctx_for(const std::string& instruction) {
  return build_planner_context("demo", instruction, TerrainClass::flat, RobotState{},
                               testing::shipped_registry(), {});
}

struct LocalChatServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::string content;

  LocalChatServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      auto body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.contains("messages")) {
        res.status = 400;
        return;
      }
      res.set_content(chat_reply(content).dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalChatServer() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("parse_plan_reply accepts fenced and bare JSON") {
  auto j = parse_plan_reply(R"({"plan":[{"skill":"dance","params":{}}]})");
  CHECK(j.at("plan").size() == 1);
  j = parse_plan_reply("Here you go:\n```json\n{\"plan\": [{\"skill\": \"stand\"}]}\n```\n");
  CHECK(j.at("plan")[0].at("skill") == "stand");
}

TEST_CASE("parse_plan_reply rejects prose") {
  for (std::string bad : {"I think the robot should dance.", "{not json}", R"({"steps":[]})", "}{"}) {
    try {
      parse_plan_reply(bad);
      FAIL("expected MalformedReply for " << bad);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MalformedReply);
    }
  }
}

TEST_CASE("render_prompt lists candidates and bounds") {
  auto ctx = ctx_for("walk forward");
  ctx.feedback.push_back("PARAM_OUT_OF_RANGE: step 1: speed=2 outside [0.1, 1.5]");
  auto p = render_prompt(ctx);
  CHECK(p.find("move_forward") != std::string::npos);
  CHECK(p.find("speed [meters_per_second] in [0.1, 1.5]") != std::string::npos);
  CHECK(p.find("PARAM_OUT_OF_RANGE") != std::string::npos);
  CHECK(p.find("climb_stairs") == std::string::npos);
  CHECK(render_prompt(ctx) == p);
}

TEST_CASE("llm backend over a scripted transport") {
  auto t = std::make_shared<FixedTransport>(chat_reply(R"({"plan":[{"skill":"dance","params":{"duration":2}}]})"));
  LlmBackend llm(t, "test-model");
  auto j = llm.propose(ctx_for("dance"));
  CHECK(j.at("plan")[0].at("params").at("duration") == 2);
  CHECK(t->last_request.at("model") == "test-model");
  CHECK(t->last_request.at("messages").size() == 2);

  auto odd = std::make_shared<FixedTransport>(json{{"choices", json::array()}});
  LlmBackend bad(odd, "m");
  try {
    bad.propose(ctx_for("dance"));
    FAIL("expected MalformedReply");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MalformedReply);
  }
}

TEST_CASE("llm backend over HTTP") {
  LocalChatServer srv;
  srv.content = R"({"plan":[{"skill":"turn","params":{"angle":1.0}}]})";
  LlmEndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(srv.port);
  cfg.timeout = std::chrono::milliseconds(2000);
  LlmBackend llm(cfg);
  Dispatcher d(testing::shipped_registry());
  auto p = d.plan(ctx_for("turn a bit"), llm);
  CHECK(p.origin == PlanOrigin::llm);
  CHECK(p.steps[0].params.at("angle") == 1.0);
  CHECK(srv.hits == 1);

  // Prose replies exhaust the retries, then the rule planner takes over.
  srv.content = "Sure! The robot should turn around.";
  p = d.plan(ctx_for("turn around"), llm);
  CHECK(srv.hits == 4);
  CHECK(d.last_used_fallback());
  CHECK(p.origin == PlanOrigin::rule);
}

TEST_CASE("unreachable endpoint falls back to rules") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  LlmEndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.timeout = std::chrono::milliseconds(500);
  HttpChatTransport t(cfg);
  try {
    t.complete(json::object());
    FAIL("expected EndpointUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EndpointUnavailable);
  }
  LlmBackend llm(cfg);
  Dispatcher d(testing::shipped_registry());
  auto p = d.plan(ctx_for("stand then crouch"), llm);
  CHECK(d.last_used_fallback());
  CHECK(p.steps.size() == 2);
  CHECK(d.last_findings().front().code == "BACKEND_FAILURE");
}

TEST_CASE("endpoint config from json") {
  auto c = LlmEndpointConfig::from_json(json::parse(R"({"base_url":"http://h:1","model":"m","timeout_ms":250})"));
  CHECK(c.base_url == "http://h:1");
  CHECK(c.model == "m");
  CHECK(c.timeout.count() == 250);
  CHECK(c.path == "/v1/chat/completions");
}
