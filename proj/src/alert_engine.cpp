#include "verdancy/alert_engine.h"

#include <fmt/format.h>

#include "json.hpp"

namespace verdancy::alert {

using nlohmann::json;

const char* to_string(Phase p) {
  switch (p) {
    case Phase::kOk: return "OK";
    case Phase::kPending: return "PENDING";
    case Phase::kAlerting: return "ALERTING";
    case Phase::kRecovering: return "RECOVERING";
  }
  return "?";
}

const char* to_string(Severity s) { return s == Severity::kWarning ? "WARNING" : "CRITICAL"; }
const char* to_string(Direction d) { return d == Direction::kLow ? "LOW" : "HIGH"; }

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::kRaised: return "RAISED";
    case EventKind::kEscalated: return "ESCALATED";
    case EventKind::kRepeated: return "REPEATED";
    case EventKind::kRecovered: return "RECOVERED";
  }
  return "?";
}

void RuleConfig::validate() const {
  if (breach_duration.count() <= 0)
    throw std::invalid_argument("breach_duration must be positive");
  if (recover_duration.count() <= 0)
    throw std::invalid_argument("recover_duration must be positive");
  if (renotify_interval && renotify_interval->count() <= 0)
    throw std::invalid_argument("renotify_interval must be positive");
  if (gap_reset.count() <= 0) throw std::invalid_argument("gap_reset must be positive");
}

RuleConfig parse_rules(const std::string& json_text) {
  const json doc = json::parse(json_text);
  if (!doc.is_object()) throw std::invalid_argument("rules file must be a JSON object");
  RuleConfig cfg;
  auto read = [&](const char* key, Millis& out) {
    if (doc.contains(key)) out = seconds(doc.at(key).get<double>());
  };
  read("breach_duration_s", cfg.breach_duration);
  read("recover_duration_s", cfg.recover_duration);
  read("gap_reset_s", cfg.gap_reset);
  if (doc.contains("renotify_interval_s") && !doc["renotify_interval_s"].is_null())
    cfg.renotify_interval = seconds(doc["renotify_interval_s"].get<double>());
  cfg.validate();
  return cfg;
}

std::optional<Breach> classify(double value, const ThresholdBands& b) {
  if (b.critical_low && value < *b.critical_low)
    return Breach{Direction::kLow, Severity::kCritical, *b.critical_low};
  if (b.low && value < *b.low) return Breach{Direction::kLow, Severity::kWarning, *b.low};
  if (b.critical_high && value > *b.critical_high)
    return Breach{Direction::kHigh, Severity::kCritical, *b.critical_high};
  if (b.high && value > *b.high) return Breach{Direction::kHigh, Severity::kWarning, *b.high};
  return std::nullopt;
}

namespace {

double recovery_bound(const ThresholdBands& b, Direction d) {
  if (d == Direction::kLow) return b.low ? *b.low : *b.critical_low;
  return b.high ? *b.high : *b.critical_high;
}

AlertEvent make_event(const MachineKey& key, EventKind kind, const AlertState& s,
                      double value, double bound, Timestamp at) {
  AlertEvent e;
  e.instance_id = key.instance_id;
  e.variable = key.variable;
  e.kind = kind;
  e.severity = s.severity;
  e.direction = s.direction;
  e.value = value;
  e.bound = bound;
  e.at = at;
  return e;
}

AlertState reset_to_ok(Timestamp at) {
  AlertState s;
  s.since = at;
  s.last_update = at;
  return s;
}

AlertState start_pending(const Breach& breach, const ThresholdBands& bands, Timestamp at) {
  AlertState s;
  s.phase = Phase::kPending;
  s.since = at;
  s.severity = breach.severity;
  s.direction = breach.direction;
  s.recovery_bound = recovery_bound(bands, breach.direction);
  s.last_update = at;
  return s;
}

}  // namespace

StepResult step(const AlertState& state, double value, Timestamp at,
                const ThresholdBands& bands, const RuleConfig& cfg, const MachineKey& key) {
  if (state.last_update && at < *state.last_update)
    throw TimestampRegression(fmt::format("{}/{}: sample at {} precedes {}", key.instance_id,
                                          to_string(key.variable), format_iso8601(at),
                                          format_iso8601(*state.last_update)));
  StepResult r{state, {}};
  AlertState& s = r.state;
  s.last_update = at;
  const auto breach = classify(value, bands);

  switch (state.phase) {
    case Phase::kOk:
      if (breach) s = start_pending(*breach, bands, at);
      break;

    case Phase::kPending:
      if (!breach) {
        s = reset_to_ok(at);
      } else if (breach->direction != s.direction) {
        s = start_pending(*breach, bands, at);
      } else {
        s.severity = breach->severity;
        if (at - s.since >= cfg.breach_duration) {
          s.phase = Phase::kAlerting;
          s.since = at;
          s.last_notified = at;
          r.events.push_back(make_event(key, EventKind::kRaised, s, value, breach->bound, at));
        }
      }
      break;

    case Phase::kAlerting:
    case Phase::kRecovering:
      if (!breach) {
        if (state.phase == Phase::kAlerting) {
          s.phase = Phase::kRecovering;
          s.since = at;
        } else if (at - s.since >= cfg.recover_duration) {
          r.events.push_back(
              make_event(key, EventKind::kRecovered, s, value, s.recovery_bound, at));
          s = reset_to_ok(at);
        }
      } else if (breach->direction != s.direction) {
        // Swung straight across the range: close this episode and start anew.
        r.events.push_back(make_event(key, EventKind::kRecovered, s, value, s.recovery_bound, at));
        s = start_pending(*breach, bands, at);
      } else {
        if (state.phase == Phase::kRecovering) {
          s.phase = Phase::kAlerting;
          s.since = at;
        }
        if (breach->severity == Severity::kCritical && s.severity == Severity::kWarning) {
          s.severity = Severity::kCritical;
          s.last_notified = at;
          r.events.push_back(
              make_event(key, EventKind::kEscalated, s, value, breach->bound, at));
        } else if (cfg.renotify_interval && s.last_notified &&
                   at - *s.last_notified >= *cfg.renotify_interval) {
          s.last_notified = at;
          r.events.push_back(make_event(key, EventKind::kRepeated, s, value, breach->bound, at));
        }
      }
      break;
  }
  return r;
}

AlertState step_gap(const AlertState& state, Millis gap_duration, Timestamp gap_end,
                    const RuleConfig& cfg) {
  AlertState s = state;
  if (gap_duration > cfg.gap_reset &&
      (s.phase == Phase::kPending || s.phase == Phase::kRecovering))
    s.since = gap_end;
  return s;
}

std::optional<AlertEvent> close_on_removal(const AlertState& state, double last_value,
                                           Timestamp at, const MachineKey& key) {
  if (state.phase != Phase::kAlerting && state.phase != Phase::kRecovering)
    return std::nullopt;
  auto e = make_event(key, EventKind::kRecovered, state, last_value, state.recovery_bound, at);
  e.by_removal = true;
  return e;
}

AlertMachine::AlertMachine(MachineKey key, ThresholdBands bands, RuleConfig cfg)
    : key_(std::move(key)), bands_(std::move(bands)), cfg_(cfg) {}

std::vector<AlertEvent> AlertMachine::observe(double value, Timestamp at) {
  if (state_.last_update && at > *state_.last_update)
    state_ = step_gap(state_, at - *state_.last_update, at, cfg_);
  auto r = step(state_, value, at, bands_, cfg_, key_);
  state_ = std::move(r.state);
  last_value_ = value;
  return std::move(r.events);
}

std::string event_to_json(const AlertEvent& e) {
  json j{{"instance_id", e.instance_id},
         {"variable", to_string(e.variable)},
         {"kind", to_string(e.kind)},
         {"severity", to_string(e.severity)},
         {"direction", to_string(e.direction)},
         {"value", e.value},
         {"bound", e.bound},
         {"at", format_iso8601(e.at)}};
  if (e.by_removal) j["reason"] = "removed";
  return j.dump();
}

AlertEvent event_from_json(const std::string& line) {
  const json j = json::parse(line);
  AlertEvent e;
  e.instance_id = j.at("instance_id").get<std::string>();
  const auto var = parse_variable(j.at("variable").get<std::string>());
  if (!var) throw std::invalid_argument("unknown variable in alert record");
  e.variable = *var;
  const auto kind = j.at("kind").get<std::string>();
  bool matched = false;
  for (auto k : {EventKind::kRaised, EventKind::kEscalated, EventKind::kRepeated,
                 EventKind::kRecovered}) {
    if (kind == to_string(k)) {
      e.kind = k;
      matched = true;
    }
  }
  if (!matched) throw std::invalid_argument("unknown event kind in alert record");
  e.severity = j.at("severity") == "CRITICAL" ? Severity::kCritical : Severity::kWarning;
  e.direction = j.at("direction") == "HIGH" ? Direction::kHigh : Direction::kLow;
  e.value = j.at("value").get<double>();
  e.bound = j.at("bound").get<double>();
  const auto at = parse_iso8601(j.at("at").get<std::string>());
  if (!at) throw std::invalid_argument("bad timestamp in alert record");
  e.at = *at;
  e.by_removal = j.value("reason", "") == "removed";
  return e;
}

}  // namespace verdancy::alert
