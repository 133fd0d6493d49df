#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "verdancy/plant_catalog.h"
#include "verdancy/reading.h"
#include "verdancy/time.h"

// Per (plant, variable) alert state machine.
//
//   OK --breach--> PENDING --held for breach_duration--> ALERTING (RAISED)
//   PENDING --in range--> OK
//   ALERTING --in range--> RECOVERING --held for recover_duration--> OK (RECOVERED)
//   RECOVERING --breach--> ALERTING
//
// A single in-range sample resets PENDING; a single breach sample sends
// RECOVERING back to ALERTING. Bounds are inclusive on the in-range side.
namespace verdancy::alert {

enum class Phase { kOk, kPending, kAlerting, kRecovering };
enum class Severity { kWarning, kCritical };
enum class Direction { kLow, kHigh };
enum class EventKind { kRaised, kEscalated, kRepeated, kRecovered };

const char* to_string(Phase p);
const char* to_string(Severity s);
const char* to_string(Direction d);
const char* to_string(EventKind k);

struct RuleConfig {
  Millis breach_duration = std::chrono::minutes(30);
  Millis recover_duration = std::chrono::minutes(15);
  std::optional<Millis> renotify_interval;
  Millis gap_reset = std::chrono::minutes(10);

  /// Throws std::invalid_argument when a duration is not positive.
  void validate() const;
};

/// Reads {"breach_duration_s", "recover_duration_s", "renotify_interval_s",
/// "gap_reset_s"}; missing keys keep their defaults.
RuleConfig parse_rules(const std::string& json_text);

struct Breach {
  Direction direction;
  Severity severity;
  double bound;  // the bound the value violates
};

/// nullopt means in range. Absent bounds never trigger.
std::optional<Breach> classify(double value, const ThresholdBands& bands);

struct AlertState {
  Phase phase = Phase::kOk;
  Timestamp since{};
  Severity severity = Severity::kWarning;
  Direction direction = Direction::kLow;
  // Bound reported on RECOVERED: the optimal-range bound on the breached side.
  double recovery_bound = 0.0;
  std::optional<Timestamp> last_notified;
  std::optional<Timestamp> last_update;

  bool operator==(const AlertState&) const = default;
};

struct AlertEvent {
  std::string instance_id;
  Variable variable = Variable::kTemperature;
  EventKind kind = EventKind::kRaised;
  Severity severity = Severity::kWarning;
  Direction direction = Direction::kLow;
  double value = 0.0;
  double bound = 0.0;
  Timestamp at{};
  // Set on the RECOVERED event emitted when a plant is removed mid-episode.
  bool by_removal = false;

  bool operator==(const AlertEvent&) const = default;
};

class TimestampRegression : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MachineKey {
  std::string instance_id;
  Variable variable;
};

struct StepResult {
  AlertState state;
  std::vector<AlertEvent> events;
};

StepResult step(const AlertState& state, double value, Timestamp at,
                const ThresholdBands& bands, const RuleConfig& cfg, const MachineKey& key);

/// Applies a data gap ending at `gap_end`. Gaps longer than cfg.gap_reset
/// restart PENDING and RECOVERING timers at gap_end; ALERTING and OK are
/// unchanged.
AlertState step_gap(const AlertState& state, Millis gap_duration, Timestamp gap_end,
                    const RuleConfig& cfg);

/// Closes an open episode when its plant is removed. Returns the RECOVERED
/// event when the machine was ALERTING or RECOVERING.
std::optional<AlertEvent> close_on_removal(const AlertState& state, double last_value,
                                           Timestamp at, const MachineKey& key);

/// Convenience wrapper owning one machine and handling gaps between its own
/// samples.
class AlertMachine {
 public:
  AlertMachine(MachineKey key, ThresholdBands bands, RuleConfig cfg);

  std::vector<AlertEvent> observe(double value, Timestamp at);

  const AlertState& state() const { return state_; }
  const MachineKey& key() const { return key_; }
  const ThresholdBands& bands() const { return bands_; }
  std::optional<double> last_value() const { return last_value_; }

 private:
  MachineKey key_;
  ThresholdBands bands_;
  RuleConfig cfg_;
  AlertState state_;
  std::optional<double> last_value_;
};

std::string event_to_json(const AlertEvent& e);
AlertEvent event_from_json(const std::string& line);

}  // namespace verdancy::alert
