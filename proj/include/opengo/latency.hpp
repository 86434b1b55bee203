#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "opengo/runtime.hpp"

namespace opengo {

/// Planner-side and coordination costs for the mock planner, in
/// milliseconds. Cold costs are paid once after a cache flush.
struct DelayModel {
  double base_ms = 3.0;
  double per_candidate_ms = 0.1;
  double per_step_ms = 0.5;
  double per_param_ms = 1.5;
  double skill_load_ms = 25.0;    // first use of a skill after flush
  double session_init_ms = 40.0;  // first planner call after flush
  double scheduling_ms = 2.0;     // between composed steps
  double state_transition_ms = 1.5;
  double dependency_check_ms = 1.5;

  static DelayModel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  CoordinationDelays coordination() const;
};

/// Rule-backend proposals delivered after the delays a language-model
/// planner would incur: parsing, skill retrieval, parameter instantiation.
class MockPlannerBackend : public PlannerBackend {
 public:
  explicit MockPlannerBackend(DelayModel model) : model_(model) {}

  nlohmann::json propose(const PlannerContext& ctx) override;
  PlanOrigin origin() const override { return PlanOrigin::llm; }
  std::string name() const override { return "mock-llm"; }

  /// Clears the skill-representation cache and the planner session.
  void flush();
  bool warm(const std::string& skill) const { return loaded_.count(skill) > 0; }
  bool session_ready() const { return session_ready_; }

 private:
  DelayModel model_;
  bool session_ready_ = false;
  std::set<std::string> loaded_;
  RuleBackend rule_;
};

struct LatencyTrial {
  std::string label;
  std::vector<std::string> skills;
  int param_count = 0;
  int rep = 0;
  bool cold = false;
  double latency_ms = 0.0;
  OverheadItems overhead;

  nlohmann::json to_json() const;
  static LatencyTrial from_json(const nlohmann::json& j);
};

struct LatencyStats {
  double mean = 0, median = 0, p95 = 0, min = 0, max = 0;
  std::size_t n = 0;
};

/// Nearest-rank p95; median averages the middle pair for even n.
LatencyStats summarize(std::span<const double> values);

struct CompositionResult {
  std::vector<LatencyTrial> trials;
  std::vector<double> constituent_warm_means_ms;
  double constituent_sum_ms = 0.0;
  double composed_mean_ms = 0.0;
  double overhead_ms = 0.0;  // composed mean - constituent sum
  OverheadItems mean_items;  // itemized coordination overhead, averaged
};

/// Instruction phrase the lexicon maps to exactly `skill`.
std::string canonical_instruction(const std::string& skill);

class LatencyHarness {
 public:
  LatencyHarness(Registry registry, DelayModel model = {});

  std::vector<LatencyTrial> run_single_skill_trial(const std::string& skill, int n,
                                                   bool flush_cache_first);
  CompositionResult run_composition_trial(const std::string& instruction, int n);

  void flush();
  Runtime& runtime() { return *runtime_; }
  const DelayModel& model() const { return model_; }

 private:
  LatencyTrial measure(const std::string& label, const std::string& instruction,
                       const std::vector<std::string>& skills, int rep);
  void prepare_scene(const std::vector<std::string>& skills);

  DelayModel model_;
  std::unique_ptr<Runtime> runtime_;
  MockPlannerBackend* mock_ = nullptr;
};

std::string to_csv(std::span<const LatencyTrial> trials);
/// Throws EmptyInput for an empty trial list.
void export_csv(std::span<const LatencyTrial> trials, const std::filesystem::path& out);

}  // namespace opengo
