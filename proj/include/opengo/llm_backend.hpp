#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <json.hpp>

#include "opengo/dispatcher.hpp"

namespace opengo {

struct LlmEndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "local";
  std::string api_key_env = "OPENGO_LLM_KEY";
  std::chrono::milliseconds timeout{30000};

  static LlmEndpointConfig from_json(const nlohmann::json& j);
};

/// Carries one chat-completion request. Throws EndpointUnavailable.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual nlohmann::json complete(const nlohmann::json& request) = 0;
};

class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(LlmEndpointConfig cfg);
  nlohmann::json complete(const nlohmann::json& request) override;

 private:
  LlmEndpointConfig cfg_;
};

/// Prompt text listing candidates, their usage prompts and parameter bounds,
/// plus the required reply format.
std::string render_prompt(const PlannerContext& ctx);

/// Extracts the plan document from a model reply. Throws MalformedReply.
nlohmann::json parse_plan_reply(const std::string& content);

class LlmBackend : public PlannerBackend {
 public:
  LlmBackend(std::shared_ptr<ChatTransport> transport, std::string model);
  explicit LlmBackend(const LlmEndpointConfig& cfg);

  nlohmann::json propose(const PlannerContext& ctx) override;
  PlanOrigin origin() const override { return PlanOrigin::llm; }
  std::string name() const override { return "llm"; }

 private:
  std::shared_ptr<ChatTransport> transport_;
  std::string model_;
};

}  // namespace opengo
