#include "opengo/executors.hpp"

#include <array>
#include <cstdint>
#include <cstdio>

namespace opengo {
namespace {

const std::vector<ExecutorInfo>& catalog() {
  static const std::vector<ExecutorInfo> kCatalog = {
      {"backflip", {}, 0.05, 1},
      {"climb_stairs", {"steps", "step_height", "speed"}, 0.004, 1},
      {"crouch", {"depth"}, 0.0005, 1},
      {"dance", {"duration"}, 0.002, 1},
      {"move_forward", {"distance", "speed"}, 0.002, 1},
      {"stand", {}, 0.0005, 1},
      {"stop", {}, 0.0, 1},
      {"turn", {"angle", "rate"}, 0.001, 1},
  };
  return kCatalog;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

const ExecutorInfo* find_executor(std::string_view name) {
  for (const auto& e : catalog())
    if (e.name == name) return &e;
  return nullptr;
}

std::span<const ExecutorInfo> executor_catalog() { return catalog(); }

std::string executor_digest(std::string_view name) {
  const ExecutorInfo* info = find_executor(name);
  if (!info) return {};
  std::string key = "opengo-executor/" + std::string(info->name) + "/r" +
                    std::to_string(info->revision) + "/";
  for (auto p : info->consumed_params) {
    key += p;
    key += ',';
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(key)));
  return buf;
}

}  // namespace opengo
