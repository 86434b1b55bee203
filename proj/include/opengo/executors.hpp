#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opengo {

/// Built-in executor routines. Skill documents reference these by name and
/// pin them with `digest`; skill code is never loaded from documents.
struct ExecutorInfo {
  std::string_view name;
  std::vector<std::string_view> consumed_params;
  double battery_per_tick;  // percent
  int revision;
};

const ExecutorInfo* find_executor(std::string_view name);
std::span<const ExecutorInfo> executor_catalog();

/// "fnv1a64:<16 hex digits>" over the executor's name, revision and parameter list.
std::string executor_digest(std::string_view name);

}  // namespace opengo
