#include "opengo/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <sstream>

#include <httplib.h>

#include "opengo/error.hpp"

namespace opengo {
namespace {

using nlohmann::json;

std::string lower_trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string first_word(const std::string& s) {
  const auto sp = s.find(' ');
  return sp == std::string::npos ? s : s.substr(0, sp);
}

bool is_reserved(const std::string& word) {
  return word == "estop" || word == "resume" || word == "approve" || word == "reject" ||
         word == "correct" || word == "status";
}

}  // namespace

InboundMessage InboundMessage::from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::SchemaError, "inbound message must be an object");
  InboundMessage m;
  m.user = j.value("user", std::string("operator"));
  if (!j.contains("text") || !j.at("text").is_string())
    throw Error(Errc::SchemaError, "inbound message needs a text string");
  m.text = j.at("text").get<std::string>();
  if (lower_trim(m.text).empty()) throw Error(Errc::SchemaError, "inbound text is empty");
  m.wall_ns = j.value("wall_ns", wall_now_ns());
  m.correlation_id = j.value("correlation_id", std::string());
  if (j.contains("feedback") && !j.at("feedback").is_null()) m.feedback = j.at("feedback");
  return m;
}

json InboundMessage::to_json() const {
  json j{{"user", user}, {"text", text}, {"wall_ns", wall_ns}, {"correlation_id", correlation_id}};
  if (feedback) j["feedback"] = *feedback;
  return j;
}

json OutboundUpdate::to_json() const {
  json j{{"seq", seq}, {"correlation_id", correlation_id}, {"kind", to_string(kind)}, {"payload", payload}};
  if (gap) j["gap"] = true;
  return j;
}

OutboundUpdate OutboundUpdate::from_json(const json& j) {
  OutboundUpdate u;
  u.seq = j.at("seq").get<std::uint64_t>();
  u.correlation_id = j.at("correlation_id").get<std::string>();
  auto k = update_kind_from_string(j.at("kind").get<std::string>());
  if (!k) throw Error(Errc::SchemaError, "unknown update kind");
  u.kind = *k;
  u.payload = j.value("payload", json::object());
  u.gap = j.value("gap", false);
  return u;
}

bool OutboundUpdate::terminal() const {
  if (kind == UpdateKind::plan_done || kind == UpdateKind::estop) return true;
  return kind == UpdateKind::step_failed && payload.is_object() && payload.value("terminal", false);
}

// ---- UpdateBus ----

std::vector<OutboundUpdate> UpdateBus::Subscription::poll() {
  std::lock_guard lock(mu_);
  std::vector<OutboundUpdate> out(queue_.begin(), queue_.end());
  queue_.clear();
  return out;
}

std::uint64_t UpdateBus::Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

void UpdateBus::open(const std::string& correlation_id) {
  std::lock_guard lock(mu_);
  open_.insert(correlation_id);
}

bool UpdateBus::known(const std::string& correlation_id) const {
  std::lock_guard lock(mu_);
  return open_.count(correlation_id) > 0;
}

std::uint64_t UpdateBus::publish(const std::string& correlation_id, UpdateKind kind, json payload) {
  OutboundUpdate u;
  std::function<void(const OutboundUpdate&)> observer;
  {
    std::lock_guard lock(mu_);
    if (!open_.count(correlation_id)) {
      ++dropped_unknown_;
      std::fprintf(stderr, "warning: update for unknown correlation id '%s' dropped\n",
                   correlation_id.c_str());
      return 0;
    }
    u.seq = log_.size() + 1;
    u.correlation_id = correlation_id;
    u.kind = kind;
    u.payload = std::move(payload);
    log_.push_back(u);
    for (auto& s : subs_) {
      std::lock_guard slock(s->mu_);
      s->queue_.push_back(u);
      if (s->queue_.size() > s->capacity_) {
        s->queue_.pop_front();
        ++s->dropped_;
        s->queue_.front().gap = true;
      }
    }
    observer = observer_;
  }
  cv_.notify_all();
  if (observer) observer(u);
  return u.seq;
}

std::shared_ptr<UpdateBus::Subscription> UpdateBus::subscribe(std::size_t capacity) {
  auto s = std::make_shared<Subscription>();
  s->capacity_ = std::max<std::size_t>(capacity, 1);
  std::lock_guard lock(mu_);
  subs_.push_back(s);
  return s;
}

void UpdateBus::unsubscribe(const std::shared_ptr<Subscription>& s) {
  std::lock_guard lock(mu_);
  subs_.erase(std::remove(subs_.begin(), subs_.end(), s), subs_.end());
}

std::vector<OutboundUpdate> UpdateBus::since(std::uint64_t cursor) const {
  std::lock_guard lock(mu_);
  if (cursor >= log_.size()) return {};
  return {log_.begin() + static_cast<std::ptrdiff_t>(cursor), log_.end()};
}

bool UpdateBus::wait_past(std::uint64_t cursor, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return log_.size() > cursor; });
}

std::vector<OutboundUpdate> UpdateBus::for_correlation(const std::string& correlation_id) const {
  std::lock_guard lock(mu_);
  std::vector<OutboundUpdate> out;
  for (const auto& u : log_)
    if (u.correlation_id == correlation_id) out.push_back(u);
  return out;
}

std::uint64_t UpdateBus::head() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

std::uint64_t UpdateBus::dropped_unknown() const {
  std::lock_guard lock(mu_);
  return dropped_unknown_;
}

void UpdateBus::set_observer(std::function<void(const OutboundUpdate&)> fn) {
  std::lock_guard lock(mu_);
  observer_ = std::move(fn);
}

// ---- LoopbackAdapter ----

void LoopbackAdapter::subscribe_inbound(std::function<void(InboundMessage)> handler) {
  std::lock_guard lock(mu_);
  handler_ = std::move(handler);
}

void LoopbackAdapter::publish_outbound(const OutboundUpdate& update) {
  std::lock_guard lock(mu_);
  received_.push_back(update);
}

void LoopbackAdapter::send(InboundMessage msg) {
  std::function<void(InboundMessage)> h;
  {
    std::lock_guard lock(mu_);
    h = handler_;
  }
  if (!h) throw Error(Errc::RuntimeDown, "loopback adapter is not attached");
  h(std::move(msg));
}

std::vector<OutboundUpdate> LoopbackAdapter::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

// ---- Gateway ----

Gateway::Gateway(Runtime& runtime) : runtime_(runtime) {
  bus_.set_observer([this](const OutboundUpdate& u) {
    std::vector<PlatformAdapter*> adapters;
    {
      std::lock_guard lock(mu_);
      adapters = adapters_;
    }
    for (auto* a : adapters) a->publish_outbound(u);
  });
}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  std::lock_guard lock(mu_);
  if (running_) return;
  running_ = true;
  worker_ = std::thread([this] { worker(); });
}

void Gateway::stop() {
  {
    std::lock_guard lock(mu_);
    if (!running_) return;
    running_ = false;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

bool Gateway::busy() const {
  std::lock_guard lock(mu_);
  return executing_ || !queue_.empty();
}

std::string Gateway::next_correlation_id() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "msg-%06llu", static_cast<unsigned long long>(++counter_));
  return buf;
}

void Gateway::attach(PlatformAdapter& adapter) {
  {
    std::lock_guard lock(mu_);
    adapters_.push_back(&adapter);
  }
  adapter.subscribe_inbound([this](InboundMessage m) { route_inbound(std::move(m)); });
}

RouteResult Gateway::route_inbound(InboundMessage msg) {
  if (lower_trim(msg.text).empty()) throw Error(Errc::SchemaError, "inbound text is empty");
  RouteResult r;
  {
    std::lock_guard lock(mu_);
    if (!running_) throw Error(Errc::RuntimeDown, "gateway is not running");
    if (msg.correlation_id.empty()) {
      do msg.correlation_id = next_correlation_id();
      while (seen_ids_.count(msg.correlation_id));
    } else if (seen_ids_.count(msg.correlation_id)) {
      throw Error(Errc::SchemaError, "duplicate correlation id '" + msg.correlation_id + "'");
    }
    seen_ids_.insert(msg.correlation_id);
    r.busy = executing_;
  }
  r.correlation_id = msg.correlation_id;
  bus_.open(msg.correlation_id);

  const std::string word = first_word(lower_trim(msg.text));
  r.reserved = is_reserved(word);
  if (word == "estop") {
    runtime_.trigger_estop();
    bus_.publish(msg.correlation_id, UpdateKind::estop, {{"latched", true}, {"ack", "estop"}});
    return r;
  }
  if (word == "status") {
    json p{{"ack", "status"}, {"state", to_json(runtime_.state_snapshot())}, {"busy", busy()}};
    if (auto id = runtime_.last_plan_id()) p["last_plan"] = *id;
    bus_.publish(msg.correlation_id, UpdateKind::plan_done, p);
    return r;
  }
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(msg));
  }
  r.queued = true;
  cv_.notify_all();
  return r;
}

bool Gateway::wait_idle(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  return idle_cv_.wait_for(lock, timeout, [&] { return queue_.empty() && !executing_; });
}

void Gateway::worker() {
  for (;;) {
    InboundMessage msg;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return !running_ || !queue_.empty(); });
      if (!running_ && queue_.empty()) return;
      msg = std::move(queue_.front());
      queue_.pop_front();
      executing_ = true;
    }
    process(msg);
    {
      std::lock_guard lock(mu_);
      executing_ = false;
    }
    idle_cv_.notify_all();
  }
}

void Gateway::process(const InboundMessage& msg) {
  const std::string& cid = msg.correlation_id;
  bool terminated = false;
  auto sink = [&](UpdateKind k, const json& payload) {
    OutboundUpdate probe;
    probe.kind = k;
    probe.payload = payload;
    if (probe.terminal()) terminated = true;
    bus_.publish(cid, k, payload);
  };

  const std::string word = first_word(lower_trim(msg.text));
  try {
    if (word == "resume") {
      runtime_.resume();
      sink(UpdateKind::plan_done, {{"ack", "resume"}, {"latched", runtime_.estop_latched()}});
    } else if (word == "approve" || word == "reject" || word == "correct") {
      handle_feedback(msg, word);
      terminated = true;
    } else {
      runtime_.run_instruction("", msg.text, sink);
    }
  } catch (const std::exception& e) {
    if (!terminated) sink(UpdateKind::step_failed, {{"terminal", true}, {"error", e.what()}});
    terminated = true;
  }
  if (!terminated) sink(UpdateKind::step_failed, {{"terminal", true}, {"error", "no terminal update"}});
}

void Gateway::handle_feedback(const InboundMessage& msg, const std::string& verdict) {
  const std::string& cid = msg.correlation_id;
  HumanFeedback fb;
  fb.verdict = verdict == "approve" ? Verdict::approve
               : verdict == "reject" ? Verdict::reject
                                     : Verdict::correct;
  fb.text = msg.text;
  std::optional<std::string> plan_id;
  if (msg.feedback) {
    const json& f = *msg.feedback;
    if (f.contains("plan_id")) plan_id = f.at("plan_id").get<std::string>();
    fb.step = f.value("step", 0);
    if (f.contains("overrides"))
      for (auto& [k, v] : f.at("overrides").items()) fb.overrides[k] = v.get<double>();
  }
  // Text form: "correct step=2 speed=0.3".
  std::istringstream in(msg.text);
  std::string tok;
  in >> tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    try {
      if (key == "plan") plan_id = val;
      else if (key == "step") fb.step = std::stoi(val);
      else fb.overrides[key] = std::stod(val);
    } catch (const std::exception&) {
      throw Error(Errc::SchemaError, "bad feedback token '" + tok + "'");
    }
  }
  if (!plan_id) plan_id = runtime_.last_plan_id();
  if (!plan_id) throw Error(Errc::UnknownPlan, "no plan to give feedback on");

  bool terminated = false;
  auto sink = [&](UpdateKind k, const json& payload) {
    OutboundUpdate probe;
    probe.kind = k;
    probe.payload = payload;
    if (probe.terminal()) terminated = true;
    bus_.publish(cid, k, payload);
  };
  const AppliedUpdates applied = runtime_.feedback(*plan_id, fb, sink);
  if (!terminated)
    sink(UpdateKind::plan_done, {{"plan_id", *plan_id}, {"ack", verdict},
                                 {"updates", applied.preference.size()}});
}

// ---- HttpGateway ----

struct HttpGateway::Impl {
  Gateway& gw;
  httplib::Server svr;
  std::thread th;
  std::atomic<bool> stopping{false};

  explicit Impl(Gateway& g) : gw(g) {}

  static void reply_error(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", msg}}.dump(), "application/json");
  }

  void routes() {
    svr.Post("/message", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        auto msg = InboundMessage::from_json(json::parse(req.body));
        const std::uint64_t cursor = gw.bus().head();
        RouteResult r = gw.route_inbound(std::move(msg));
        res.status = 202;
        res.set_content(json{{"correlation_id", r.correlation_id}, {"reserved", r.reserved},
                             {"queued", r.queued}, {"busy", r.busy}, {"cursor", cursor}}
                            .dump(),
                        "application/json");
      } catch (const json::exception& e) {
        reply_error(res, 400, std::string("SchemaError: ") + e.what());
      } catch (const Error& e) {
        reply_error(res, e.code() == Errc::RuntimeDown ? 503 : 400, e.what());
      }
    });

    svr.Get("/stream", [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t start = 0;
      try {
        if (req.has_param("cursor")) start = std::stoull(req.get_param_value("cursor"));
      } catch (const std::exception&) {
        reply_error(res, 400, "bad cursor");
        return;
      }
      const bool follow = !req.has_param("follow") || req.get_param_value("follow") != "0";
      const std::string only = req.has_param("correlation_id") ? req.get_param_value("correlation_id") : "";
      const std::string until = req.has_param("until") ? req.get_param_value("until") : "";
      auto cursor = std::make_shared<std::uint64_t>(start);
      res.set_chunked_content_provider(
          "application/x-ndjson",
          [this, cursor, follow, only, until](std::size_t, httplib::DataSink& sink) {
            auto batch = gw.bus().since(*cursor);
            bool finished = false;
            for (const auto& u : batch) {
              *cursor = u.seq;
              if (!only.empty() && u.correlation_id != only) continue;
              const std::string line = u.to_json().dump() + "\n";
              if (!sink.write(line.data(), line.size())) return false;
              if (!until.empty() && u.correlation_id == until && u.terminal()) {
                finished = true;
                break;
              }
            }
            if (finished || (!follow && batch.empty()) || stopping) {
              sink.done();
              return true;
            }
            if (batch.empty()) gw.bus().wait_past(*cursor, std::chrono::milliseconds(200));
            return true;
          });
    });

    svr.Get("/state", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(to_json(gw.runtime().state_snapshot()).dump(), "application/json");
    });

    svr.Get(R"(/plans/([A-Za-z0-9_\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      auto plan = gw.runtime().plan_by_id(id);
      if (!plan) {
        reply_error(res, 404, "UnknownPlan: " + id);
        return;
      }
      json j = plan->to_json();
      j["status"] = to_string(gw.runtime().memory().completion_status(id));
      json recs = json::array();
      for (const auto& r : gw.runtime().memory().records_for(id)) recs.push_back(to_json(r));
      j["records"] = recs;
      res.set_content(j.dump(), "application/json");
    });

    svr.Post("/estop", [this](const httplib::Request&, httplib::Response& res) {
      gw.runtime().trigger_estop();
      res.set_content(json{{"latched", true}}.dump(), "application/json");
    });
  }
};

HttpGateway::HttpGateway(Gateway& gateway) : impl_(std::make_unique<Impl>(gateway)) { impl_->routes(); }

HttpGateway::~HttpGateway() { stop(); }

int HttpGateway::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->svr.bind_to_any_port(host);
  } else if (!impl_->svr.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->stopping = false;
  impl_->th = std::thread([this] { impl_->svr.listen_after_bind(); });
  return bound;
}

void HttpGateway::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->svr.stop();
  if (impl_->th.joinable()) impl_->th.join();
}

}  // namespace opengo
