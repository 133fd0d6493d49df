#include "verdancy/reading.h"

namespace verdancy {

const char* to_string(Variable v) {
  switch (v) {
    case Variable::kTemperature: return "temperature";
    case Variable::kHumidity: return "humidity";
    case Variable::kIlluminance: return "illuminance";
  }
  return "unknown";
}

std::optional<Variable> parse_variable(std::string_view name) {
  for (Variable v : kAllVariables)
    if (name == to_string(v)) return v;
  return std::nullopt;
}

}  // namespace verdancy
