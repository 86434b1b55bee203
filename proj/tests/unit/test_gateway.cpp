#include <sstream>

#include <httplib.h>

#include "helpers.hpp"
#include "opengo/error.hpp"
#include "opengo/gateway.hpp"

using namespace opengo;
using nlohmann::json;

namespace {

std::vector<OutboundUpdate> parse_ndjson(const std::string& body) {
  std::vector<OutboundUpdate> out;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(OutboundUpdate::from_json(json::parse(line)));
  return out;
}

InboundMessage text(const std::string& t, const std::string& cid = "") {
  InboundMessage m;
  m.user = "op";
  m.text = t;
  m.correlation_id = cid;
  return m;
}

std::size_t terminals(const std::vector<OutboundUpdate>& us) {
  std::size_t n = 0;
  for (const auto& u : us) n += u.terminal();
  return n;
}

}  // namespace

TEST_CASE("inbound message schema") {
  auto m = InboundMessage::from_json(json::parse(R"({"user":"a","text":"dance","wall_ns":5})"));
  CHECK(m.text == "dance");
  CHECK(m.wall_ns == 5);
  CHECK(InboundMessage::from_json(m.to_json()).text == "dance");
  for (auto bad : {R"({"user":"a"})", R"({"text":""})", R"({"text":3})"}) {
    try {
      InboundMessage::from_json(json::parse(bad));
      FAIL("expected SchemaError");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::SchemaError);
    }
  }
}

TEST_CASE("outbound update round trip and terminal kinds") {
  OutboundUpdate u{7, "msg-000001", UpdateKind::step_failed, {{"terminal", false}}, false};
  CHECK_FALSE(u.terminal());
  auto back = OutboundUpdate::from_json(u.to_json());
  CHECK(back.seq == 7);
  CHECK(back.kind == UpdateKind::step_failed);
  CHECK(back.payload == u.payload);
  u.payload["terminal"] = true;
  CHECK(u.terminal());
  CHECK(OutboundUpdate{1, "c", UpdateKind::plan_done, json::object(), false}.terminal());
  CHECK(OutboundUpdate{1, "c", UpdateKind::estop, json::object(), false}.terminal());
  CHECK_FALSE(OutboundUpdate{1, "c", UpdateKind::ask_feedback, json::object(), false}.terminal());
}

TEST_CASE("bus replays from a cursor and drops unknown ids") {
  UpdateBus bus;
  bus.open("a");
  CHECK(bus.publish("a", UpdateKind::plan_proposed, {}) == 1);
  CHECK(bus.publish("zzz", UpdateKind::plan_done, {}) == 0);
  CHECK(bus.dropped_unknown() == 1);
  CHECK(bus.publish("a", UpdateKind::plan_done, {}) == 2);
  CHECK(bus.head() == 2);
  auto all = bus.since(0);
  REQUIRE(all.size() == 2);
  CHECK(all[1].seq == 2);
  CHECK(bus.since(1).size() == 1);
  CHECK(bus.since(2).empty());
  CHECK(bus.for_correlation("a").size() == 2);
  CHECK_FALSE(bus.wait_past(2, std::chrono::milliseconds(10)));
  CHECK(bus.wait_past(1, std::chrono::milliseconds(10)));
}

TEST_CASE("slow subscriber sees a gap marker") {
  UpdateBus bus;
  bus.open("a");
  auto sub = bus.subscribe(2);
  for (int i = 0; i < 5; ++i) bus.publish("a", UpdateKind::step_started, {{"i", i}});
  auto got = sub->poll();
  REQUIRE(got.size() == 2);
  CHECK(got[0].gap);
  CHECK_FALSE(got[1].gap);
  CHECK(got[0].payload.at("i") == 3);
  CHECK(sub->dropped() == 3);
  bus.publish("a", UpdateKind::plan_done, {});
  got = sub->poll();
  REQUIRE(got.size() == 1);
  CHECK_FALSE(got[0].gap);
  bus.unsubscribe(sub);
  bus.publish("a", UpdateKind::plan_done, {});
  CHECK(sub->poll().empty());
}

TEST_CASE("scripted loopback session") {
  Runtime rt(testing::shipped_registry());
  Gateway gw(rt);
  LoopbackAdapter chat;
  CHECK_THROWS_AS(chat.send(text("dance")), Error);
  gw.attach(chat);
  CHECK_THROWS_AS(chat.send(text("dance")), Error);  // not started
  gw.start();

  chat.send(text("stand then dance", "c1"));
  chat.send(text("status", "c2"));
  REQUIRE(gw.wait_idle());
  chat.send(text("approve", "c3"));
  REQUIRE(gw.wait_idle());

  auto c1 = gw.bus().for_correlation("c1");
  REQUIRE_FALSE(c1.empty());
  CHECK(c1.front().kind == UpdateKind::plan_proposed);
  CHECK(c1.back().kind == UpdateKind::plan_done);
  CHECK(terminals(c1) == 1);
  CHECK(terminals(gw.bus().for_correlation("c2")) == 1);
  auto c3 = gw.bus().for_correlation("c3");
  REQUIRE(c3.size() == 1);
  CHECK(c3[0].payload.at("ack") == "feedback applied");

  // The adapter saw every published update in order.
  auto seen = chat.received();
  CHECK(seen.size() == gw.bus().head());
  for (std::size_t i = 1; i < seen.size(); ++i) CHECK(seen[i].seq == seen[i - 1].seq + 1);

  CHECK_THROWS_AS(gw.route_inbound(text("dance", "c1")), Error);
  CHECK_THROWS_AS(gw.route_inbound(text("   ")), Error);
}

TEST_CASE("e-stop and resume through the gateway") {
  Runtime rt(testing::shipped_registry());
  Gateway gw(rt);
  gw.start();
  auto r = gw.route_inbound(text("estop"));
  CHECK(r.reserved);
  CHECK_FALSE(r.queued);
  CHECK(rt.estop_latched());
  auto e = gw.bus().for_correlation(r.correlation_id);
  REQUIRE(e.size() == 1);
  CHECK(e[0].kind == UpdateKind::estop);

  auto blocked = gw.route_inbound(text("dance"));
  REQUIRE(gw.wait_idle());
  auto b = gw.bus().for_correlation(blocked.correlation_id);
  REQUIRE(b.size() == 1);
  CHECK(b[0].kind == UpdateKind::estop);

  gw.route_inbound(text("resume"));
  REQUIRE(gw.wait_idle());
  CHECK_FALSE(rt.estop_latched());

  auto bad = gw.route_inbound(text("correct plan=plan-999 speed=0.3"));
  REQUIRE(gw.wait_idle());
  auto f = gw.bus().for_correlation(bad.correlation_id);
  REQUIRE(f.size() == 1);
  CHECK(f[0].kind == UpdateKind::step_failed);
  CHECK(f[0].terminal());
}

TEST_CASE("text feedback tokens reach the runtime") {
  Runtime rt(testing::shipped_registry());
  Gateway gw(rt);
  gw.start();
  gw.route_inbound(text("move forward 1 meter"));
  REQUIRE(gw.wait_idle());
  const auto plan = rt.last_plan_id();
  REQUIRE(plan.has_value());
  auto r = gw.route_inbound(text("correct plan=" + *plan + " step=1 speed=1.0"));
  REQUIRE(gw.wait_idle());
  auto us = gw.bus().for_correlation(r.correlation_id);
  REQUIRE_FALSE(us.empty());
  CHECK(us.back().kind == UpdateKind::plan_done);
  auto learned = rt.preferences().learned_default("move_forward", "speed", TerrainClass::flat);
  REQUIRE(learned.has_value());
  CHECK(*learned == doctest::Approx(0.65));
}

TEST_CASE("http endpoints") {
  Runtime rt(testing::shipped_registry());
  Gateway gw(rt);
  gw.start();
  HttpGateway http(gw);
  const int port = http.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);

  auto res = cli.Post("/message", R"({"user":"op","text":"stand then dance"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 202);
  auto ack = json::parse(res->body);
  const std::string cid = ack.at("correlation_id");
  CHECK(ack.at("queued") == true);

  res = cli.Get("/stream?cursor=0&until=" + cid);
  REQUIRE(res);
  CHECK(res->status == 200);
  auto updates = parse_ndjson(res->body);
  REQUIRE_FALSE(updates.empty());
  CHECK(updates.back().correlation_id == cid);
  CHECK(updates.back().terminal());
  std::string plan_id;
  for (const auto& u : updates)
    if (u.kind == UpdateKind::plan_proposed) plan_id = u.payload.at("id");
  REQUIRE_FALSE(plan_id.empty());

  res = cli.Get("/stream?cursor=0&follow=0");
  REQUIRE(res);
  CHECK(parse_ndjson(res->body).size() == gw.bus().head());

  res = cli.Get("/plans/" + plan_id);
  REQUIRE(res);
  CHECK(res->status == 200);
  auto plan = json::parse(res->body);
  CHECK(plan.at("records").size() == 2);
  CHECK(cli.Get("/plans/plan-999999")->status == 404);

  res = cli.Get("/state");
  REQUIRE(res);
  CHECK(json::parse(res->body).contains("battery"));

  CHECK(cli.Post("/message", R"({"user":"op"})", "application/json")->status == 400);
  CHECK(cli.Post("/message", "not json", "application/json")->status == 400);

  res = cli.Post("/estop", "", "application/json");
  REQUIRE(res);
  CHECK(rt.estop_latched());

  http.stop();
  gw.stop();
}
