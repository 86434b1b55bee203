#include "opengo/llm_backend.hpp"

#include <cstdlib>
#include <sstream>

#include <httplib.h>

#include "opengo/error.hpp"

namespace opengo {

using nlohmann::json;

LlmEndpointConfig LlmEndpointConfig::from_json(const json& j) {
  LlmEndpointConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.path = j.value("path", c.path);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<std::int64_t>(c.timeout.count())));
  return c;
}

HttpChatTransport::HttpChatTransport(LlmEndpointConfig cfg) : cfg_(std::move(cfg)) {}

json HttpChatTransport::complete(const json& request) {
  httplib::Client client(cfg_.base_url);
  const auto secs = cfg_.timeout.count() / 1000;
  const auto usecs = (cfg_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  auto res = client.Post(cfg_.path, headers, request.dump(), "application/json");
  if (!res) throw Error(Errc::EndpointUnavailable, cfg_.base_url + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(Errc::EndpointUnavailable, cfg_.base_url + " returned HTTP " + std::to_string(res->status));
  auto body = json::parse(res->body, nullptr, false);
  if (body.is_discarded()) throw Error(Errc::MalformedReply, "endpoint body is not JSON");
  return body;
}

std::string render_prompt(const PlannerContext& ctx) {
  std::ostringstream out;
  out << "You dispatch skills for a quadruped robot. You may only choose skills from the list "
         "below and set their parameters inside the stated bounds. Never emit motor commands.\n\n";
  out << "Task: " << (ctx.task.empty() ? "(none)" : ctx.task) << "\n";
  out << "Instruction: " << (ctx.instruction.empty() ? "(none)" : ctx.instruction) << "\n";
  out << "Scene: " << to_string(ctx.scene) << "\n";
  out << "Robot: posture=" << to_string(ctx.state.posture) << " battery=" << ctx.state.battery << "%\n";
  if (ctx.last_skill) out << "Last executed skill: " << *ctx.last_skill << "\n";
  out << "\nSkills executable now:\n";
  for (const auto& c : ctx.candidates) {
    out << "- " << c.id << " (" << c.label << "): " << c.prompts << "\n";
    for (const auto& p : c.parameters)
      out << "    " << p.name << " [" << p.unit << "] in [" << p.lower << ", " << p.upper
          << "], default " << p.default_value << "\n";
  }
  if (!ctx.remaining.empty()) {
    out << "\nSteps still to cover: " << steps_to_wire(ctx.remaining).dump() << "\n";
  }
  if (!ctx.excluded.empty()) {
    out << "Do not use: ";
    for (const auto& e : ctx.excluded) out << e << ' ';
    out << "\n";
  }
  if (!ctx.feedback.empty()) {
    out << "\nProblems with earlier attempts:\n";
    for (const auto& f : ctx.feedback) out << "- " << f << "\n";
  }
  if (!ctx.recent_history.empty()) {
    out << "\nRecent executions:\n";
    for (const auto& r : ctx.recent_history) {
      out << "- " << r.skill << " -> "
          << (r.outcome == OutcomeKind::completed ? "completed"
              : r.outcome == OutcomeKind::error    ? "error " + r.error_code
                                                   : "preempted")
          << "\n";
    }
  }
  out << "\nAnswer with JSON only, exactly in this form:\n"
         "{\"plan\": [{\"skill\": \"<skill id>\", \"params\": {\"<name>\": <number>}}]}\n";
  return out.str();
}

json parse_plan_reply(const std::string& content) {
  const auto first = content.find('{');
  const auto last = content.rfind('}');
  if (first == std::string::npos || last == std::string::npos || last < first)
    throw Error(Errc::MalformedReply, "reply contains no JSON object");
  auto j = json::parse(content.substr(first, last - first + 1), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::MalformedReply, "reply JSON does not parse");
  if (!j.is_object() || !j.contains("plan") || !j.at("plan").is_array())
    throw Error(Errc::MalformedReply, "reply lacks a 'plan' array");
  return j;
}

LlmBackend::LlmBackend(std::shared_ptr<ChatTransport> transport, std::string model)
    : transport_(std::move(transport)), model_(std::move(model)) {}

LlmBackend::LlmBackend(const LlmEndpointConfig& cfg)
    : LlmBackend(std::make_shared<HttpChatTransport>(cfg), cfg.model) {}

json LlmBackend::propose(const PlannerContext& ctx) {
  json request{{"model", model_},
               {"temperature", 0},
               {"messages",
                json::array({{{"role", "system"}, {"content", "Reply with a plan document only."}},
                             {{"role", "user"}, {"content", render_prompt(ctx)}}})}};
  json response = transport_->complete(request);
  try {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw Error(Errc::MalformedReply, "content is not a string");
    return parse_plan_reply(content.get<std::string>());
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedReply, std::string("unexpected response shape: ") + e.what());
  }
}

}  // namespace opengo
