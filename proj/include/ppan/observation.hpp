#pragma once

#include <string>
#include <string_view>

#include "error.hpp"

namespace ppan {

/// What the release mechanism sees: the useful attribute alone (W = Y) or the
/// full record (W = (X, Y)). Seed noise is appended in both cases.
enum class ObservationMode { useful_only, full_data };

inline std::string_view to_string(ObservationMode m) {
  return m == ObservationMode::useful_only ? "useful" : "full";
}

inline ObservationMode parse_observation_mode(std::string_view s) {
  if (s == "useful" || s == "useful_only") return ObservationMode::useful_only;
  if (s == "full" || s == "full_data") return ObservationMode::full_data;
  throw Error(ErrorKind::config, "observation mode must be 'useful' or 'full', got '" + std::string(s) + "'");
}

}  // namespace ppan
