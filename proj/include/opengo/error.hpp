#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opengo {

enum class Errc {
  SchemaError,
  DuplicateParameter,
  NotValidated,
  VersionConflict,
  NotFound,
  SimulatorUnavailable,
  NoFeasiblePlan,
  NoMatch,
  UnknownParameter,
  OutOfRange,
  EndpointUnavailable,
  MalformedReply,
  TimestampOrder,
  UnknownPlan,
  EstopLatched,
  OutOfMap,
  BadConfig,
  RuntimeDown,
  BadK,
  EmptyInput,
  SessionBusy,
  IoError,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace opengo
