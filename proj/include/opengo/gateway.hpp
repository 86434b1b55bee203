#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "opengo/runtime.hpp"

namespace opengo {

struct InboundMessage {
  std::string user;
  std::string text;
  std::int64_t wall_ns = 0;
  std::string correlation_id;          // assigned by the gateway when empty
  std::optional<nlohmann::json> feedback;  // {plan_id, verdict, step, overrides}

  static InboundMessage from_json(const nlohmann::json& j);  // SchemaError on empty text
  nlohmann::json to_json() const;
};

struct OutboundUpdate {
  std::uint64_t seq = 0;  // global cursor position
  std::string correlation_id;
  UpdateKind kind = UpdateKind::plan_done;
  nlohmann::json payload;
  bool gap = false;  // marker: older updates were dropped for this subscriber

  nlohmann::json to_json() const;
  static OutboundUpdate from_json(const nlohmann::json& j);
  bool terminal() const;
};

/// Ordered update log with cursor replay and bounded per-subscriber queues.
class UpdateBus {
 public:
  class Subscription {
   public:
    /// Drains queued updates (oldest first).
    std::vector<OutboundUpdate> poll();
    std::uint64_t dropped() const;

   private:
    friend class UpdateBus;
    std::size_t capacity_ = 0;
    mutable std::mutex mu_;
    std::deque<OutboundUpdate> queue_;
    std::uint64_t dropped_ = 0;
    bool pending_gap_ = false;
  };

  void open(const std::string& correlation_id);
  bool known(const std::string& correlation_id) const;

  /// Appends and fans out. Updates for unknown correlation ids are dropped
  /// with a warning; returns 0 in that case.
  std::uint64_t publish(const std::string& correlation_id, UpdateKind kind,
                        nlohmann::json payload);

  std::shared_ptr<Subscription> subscribe(std::size_t capacity = 256);
  void unsubscribe(const std::shared_ptr<Subscription>& s);

  /// Every update with seq > cursor.
  std::vector<OutboundUpdate> since(std::uint64_t cursor) const;
  /// Blocks until an update past `cursor` exists or the timeout passes.
  bool wait_past(std::uint64_t cursor, std::chrono::milliseconds timeout) const;
  std::vector<OutboundUpdate> for_correlation(const std::string& correlation_id) const;
  std::uint64_t head() const;
  std::uint64_t dropped_unknown() const;

  void set_observer(std::function<void(const OutboundUpdate&)> fn);

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<OutboundUpdate> log_;
  std::set<std::string> open_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::uint64_t dropped_unknown_ = 0;
  std::function<void(const OutboundUpdate&)> observer_;
};

/// Where an external chat platform attaches.
class PlatformAdapter {
 public:
  virtual ~PlatformAdapter() = default;
  virtual void subscribe_inbound(std::function<void(InboundMessage)> handler) = 0;
  virtual void publish_outbound(const OutboundUpdate& update) = 0;
};

/// In-process adapter: scripted inbound messages, captured outbound updates.
class LoopbackAdapter : public PlatformAdapter {
 public:
  void subscribe_inbound(std::function<void(InboundMessage)> handler) override;
  void publish_outbound(const OutboundUpdate& update) override;

  void send(InboundMessage msg);
  std::vector<OutboundUpdate> received() const;

 private:
  mutable std::mutex mu_;
  std::function<void(InboundMessage)> handler_;
  std::vector<OutboundUpdate> received_;
};

struct RouteResult {
  std::string correlation_id;
  bool reserved = false;
  bool queued = false;
  bool busy = false;  // a plan was executing; the message waits in the queue
};

/// Serializes inbound messages into the session's dispatch queue and
/// publishes runtime updates per correlation id.
class Gateway {
 public:
  explicit Gateway(Runtime& runtime);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void start();
  void stop();

  RouteResult route_inbound(InboundMessage msg);
  void attach(PlatformAdapter& adapter);

  /// Blocks until the queue is empty and nothing is executing.
  bool wait_idle(std::chrono::milliseconds timeout = std::chrono::seconds(30));

  UpdateBus& bus() { return bus_; }
  Runtime& runtime() { return runtime_; }
  bool busy() const;

 private:
  void worker();
  void process(const InboundMessage& msg);
  void handle_feedback(const InboundMessage& msg, const std::string& verdict);
  std::string next_correlation_id();

  Runtime& runtime_;
  UpdateBus bus_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<InboundMessage> queue_;
  bool executing_ = false;
  bool running_ = false;
  std::thread worker_;
  std::uint64_t counter_ = 0;
  std::set<std::string> seen_ids_;
  std::vector<PlatformAdapter*> adapters_;
};

/// HTTP front end: POST /message, GET /stream, GET /state, GET /plans/{id},
/// POST /estop.
class HttpGateway {
 public:
  explicit HttpGateway(Gateway& gateway);
  ~HttpGateway();

  /// Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace opengo
