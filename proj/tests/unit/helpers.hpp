#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include <doctest.h>
#include <json.hpp>

#include "opengo/skill_library.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return OPENGO_SOURCE_DIR; }

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE_MESSAGE(in.good(), "cannot open " << p);
  return nlohmann::json::parse(in);
}

inline nlohmann::json shipped_doc(const std::string& id) {
  return read_json(source_dir() / "skills" / (id + ".json"));
}

/// Registry holding the eight shipped skills, imported through the full pipeline.
inline const opengo::Registry& shipped_registry() {
  static const opengo::Registry reg = [] {
    opengo::Registry r;
    for (const auto& res : opengo::import_directory(source_dir() / "skills", r))
      REQUIRE_MESSAGE(res.admitted(), res.skill.id << " " << res.error);
    return r;
  }();
  return reg;
}

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "opengo_tests";
  std::filesystem::create_directories(dir);
  auto p = dir / (name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace testing
