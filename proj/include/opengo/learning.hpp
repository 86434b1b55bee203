#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "opengo/memory_state.hpp"
#include "opengo/skill.hpp"

namespace opengo {

class Registry;

struct LearningConfig {
  double alpha = 0.2;         // dispatch preference EMA rate
  double beta = 0.3;          // parameter default attraction rate
  double initial_score = 0.5;
};

enum class Verdict { approve, reject, correct };

struct HumanFeedback {
  Verdict verdict = Verdict::approve;
  std::string text;
  int step = 0;  // flagged step for reject/correct (1-based); 0 = last executed
  Params overrides;
};

struct FeedbackSignal {
  enum class Kind { completion, error, human };
  Kind kind = Kind::completion;
  std::string error_code;
  std::optional<HumanFeedback> human;
  std::string plan_id;
  int step = 0;  // 1-based
  TerrainClass scene = TerrainClass::flat;
};

struct PreferenceUpdate {
  TerrainClass scene;
  std::string skill;
  double outcome;
  double new_score;
};

struct AppliedUpdates {
  std::vector<PreferenceUpdate> preference;
  bool replan_requested = false;
  /// For `correct`: the step to re-execute with overrides applied. Call
  /// PreferenceStore::complete_correction once it has completed.
  std::optional<PlanStep> corrected_step;
  TerrainClass corrected_scene = TerrainClass::flat;
};

/// Scenario-conditioned skill scores and learned parameter defaults.
/// Learning touches only these tables; templates are never modified.
class PreferenceStore {
 public:
  explicit PreferenceStore(LearningConfig cfg = {}) : cfg_(cfg) {}
  PreferenceStore(const PreferenceStore& o);
  PreferenceStore& operator=(const PreferenceStore& o);

  double preference(TerrainClass scene, const std::string& skill) const;
  std::size_t preference_count(TerrainClass scene, const std::string& skill) const;

  /// score <- (1 - alpha) * score + alpha * outcome, outcome in {0, 1}.
  double update_dispatch_preference(TerrainClass scene, const std::string& skill, double outcome);

  /// On success the default moves toward `value` by beta (clipped to the
  /// bounds); failures leave it unchanged. Throws OutOfRange.
  double update_param_default(const SkillTemplate& skill, const std::string& param,
                              TerrainClass scene, double value, bool success);

  std::optional<double> learned_default(const std::string& skill, const std::string& param,
                                        TerrainClass scene) const;

  /// Applies one execution record: completed -> success, error -> failure,
  /// preempted -> nothing.
  void observe(const ExecutionRecord& r, const Registry& registry);

  /// Rebuilds a store from an execution log.
  static PreferenceStore replay(std::span<const ExecutionRecord> records, const Registry& registry,
                                LearningConfig cfg = {});

  /// `records` are the plan's execution records (steps executed so far).
  AppliedUpdates ingest_human_feedback(const HumanFeedback& msg,
                                       std::span<const ExecutionRecord> records,
                                       const Registry& registry);
  void complete_correction(const PlanStep& corrected, TerrainClass scene, const Registry& registry);

  void reset();
  const LearningConfig& config() const { return cfg_; }

  nlohmann::json to_json() const;
  static PreferenceStore from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& p) const;
  static PreferenceStore load(const std::filesystem::path& p);

  bool operator==(const PreferenceStore& o) const;

 private:
  struct Score {
    double value;
    std::size_t count;
    bool operator==(const Score&) const = default;
  };
  using PrefKey = std::pair<TerrainClass, std::string>;
  using DefaultKey = std::tuple<std::string, std::string, TerrainClass>;

  LearningConfig cfg_;
  mutable std::mutex mu_;
  std::map<PrefKey, Score> pref_;
  std::map<DefaultKey, Score> defaults_;
};

}  // namespace opengo
