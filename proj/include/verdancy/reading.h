#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "verdancy/time.h"

namespace verdancy {

enum class Variable { kTemperature, kHumidity, kIlluminance };

inline constexpr Variable kAllVariables[] = {Variable::kTemperature, Variable::kHumidity,
                                             Variable::kIlluminance};

const char* to_string(Variable v);
std::optional<Variable> parse_variable(std::string_view name);

/// One normalized sample from a sensor channel. Temperature in degrees
/// Celsius, humidity in %RH, illuminance in lux.
struct SensorReading {
  std::string sensor_id;
  Timestamp timestamp{};
  std::optional<double> temperature_c;
  std::optional<double> humidity_pct;
  std::optional<double> illuminance_lux;
  std::optional<std::uint32_t> sequence;

  std::optional<double> value(Variable v) const {
    switch (v) {
      case Variable::kTemperature: return temperature_c;
      case Variable::kHumidity: return humidity_pct;
      case Variable::kIlluminance: return illuminance_lux;
    }
    return std::nullopt;
  }

  bool has_any_variable() const {
    return temperature_c || humidity_pct || illuminance_lux;
  }

  bool operator==(const SensorReading&) const = default;
};

/// Readings of a single sensor with non-decreasing timestamps.
struct ReadingSeries {
  std::string sensor_id;
  std::vector<SensorReading> readings;

  bool operator==(const ReadingSeries&) const = default;
};

}  // namespace verdancy
