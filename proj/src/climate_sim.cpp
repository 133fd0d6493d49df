#include "verdancy/climate_sim.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace verdancy::sim {

using nlohmann::json;

namespace {

constexpr std::int64_t kDayMs = 86'400'000;
constexpr std::uint64_t kDraftStreamSalt = 0x9E3779B97F4A7C15ULL;

Millis parse_clock(const std::string& hhmm) {
  int h = 0, m = 0;
  char colon = 0;
  std::istringstream in(hhmm);
  if (!(in >> h >> colon >> m) || colon != ':' || h < 0 || h > 24 || m < 0 || m > 59)
    throw std::invalid_argument(fmt::format("bad clock time '{}', expected HH:MM", hhmm));
  return std::chrono::hours(h) + std::chrono::minutes(m);
}

double mean_daylight_factor(const LocationModel& m) {
  // Average of the half-sine over a whole day.
  const double day_fraction = static_cast<double>((m.sunset - m.sunrise).count()) / kDayMs;
  return 2.0 / std::numbers::pi * day_fraction;
}

}  // namespace

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

void LocationModel::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(temp_noise_sd >= 0, "temp_noise_sd must be >= 0");
  require(draft_rate_per_day >= 0, "draft_rate_per_day must be >= 0");
  require(draft_depth_c >= 0, "draft_depth_c must be >= 0");
  require(draft_duration_min >= 0, "draft_duration_min must be >= 0");
  require(humidity_mean >= 0, "humidity_mean must be >= 0");
  require(humidity_band >= 0, "humidity_band must be >= 0");
  require(humidity_step_sd >= 0, "humidity_step_sd must be >= 0");
  require(humidity_mean - humidity_band / 2 >= 0, "humidity band reaches below 0 %RH");
  require(lux_peak >= 0, "lux_peak must be >= 0");
  require(lux_attenuation > 0 && lux_attenuation <= 1, "lux_attenuation must be in (0, 1]");
  require(cloud_noise >= 0, "cloud_noise must be >= 0");
  require(sunrise.count() >= 0 && sunset.count() <= kDayMs, "daylight outside the day");
  require(sunrise < sunset, "sunrise must precede sunset");
}

void SimConfig::validate() const {
  if (locations.empty()) throw std::invalid_argument("at least one location is required");
  if (start <= Timestamp{}) throw std::invalid_argument("start must be after the epoch");
  if (!(duration_days > 0)) throw std::invalid_argument("duration_days must be positive");
  if (interval.count() <= 0) throw std::invalid_argument("interval must be positive");
  if (!(ar_coefficient >= 0 && ar_coefficient < 1))
    throw std::invalid_argument("ar_coefficient must be in [0, 1)");
  for (const auto& o : outages)
    if (o.offset.count() < 0 || o.duration.count() < 0)
      throw std::invalid_argument("outages must have non-negative offset and duration");
  for (const auto& [label, model] : locations) {
    if (label.empty()) throw std::invalid_argument("location label is empty");
    model.validate();
  }
}

std::size_t SimConfig::samples_per_location() const {
  const auto total_ms = static_cast<std::int64_t>(std::llround(duration_days * kDayMs));
  return static_cast<std::size_t>(total_ms / interval.count()) + 1;
}

double diurnal_lux(Millis time_of_day, const LocationModel& m, double cloud_draw) {
  if (time_of_day < m.sunrise || time_of_day > m.sunset) return 0.0;
  const double phase = static_cast<double>((time_of_day - m.sunrise).count()) /
                       static_cast<double>((m.sunset - m.sunrise).count());
  const double lux = m.lux_peak * m.lux_attenuation * std::sin(std::numbers::pi * phase) *
                     (1.0 + m.cloud_noise * cloud_draw);
  return lux > 0.0 ? lux : 0.0;
}

ReadingSeries simulate_location(const SimConfig& config, const std::string& label) {
  config.validate();
  const auto it = config.locations.find(label);
  if (it == config.locations.end())
    throw std::invalid_argument(fmt::format("unknown location '{}'", label));
  const LocationModel& m = it->second;

  const std::uint64_t seed = config.seed ^ fnv1a64(label);
  SplitMix64 rng(seed);
  SplitMix64 draft_rng(seed ^ kDraftStreamSalt);

  const double phi = std::pow(config.ar_coefficient,
                              static_cast<double>(config.interval.count()) / 5000.0);
  const double innovation_sd = m.temp_noise_sd * std::sqrt(1.0 - phi * phi);
  const double hum_lo = m.humidity_mean - m.humidity_band / 2;
  const double hum_hi = m.humidity_mean + m.humidity_band / 2;
  const Millis draft_length{std::llround(m.draft_duration_min * 60'000.0)};

  auto next_draft_gap = [&]() -> Millis {
    const double u = draft_rng.uniform();
    return Millis{std::llround(-std::log1p(-u) / m.draft_rate_per_day * kDayMs)};
  };
  const bool drafts_enabled = m.draft_rate_per_day > 0;
  Timestamp next_draft = drafts_enabled ? config.start + next_draft_gap() : Timestamp::max();
  std::deque<Timestamp> active_draft_ends;

  double ar = m.temp_noise_sd * rng.normal();
  double humidity = hum_lo + m.humidity_band * rng.uniform();

  ReadingSeries out;
  out.sensor_id = label;
  const auto n = config.samples_per_location();
  out.readings.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Millis offset = config.interval * static_cast<std::int64_t>(k);
    const Timestamp t = config.start + offset;

    while (next_draft <= t) {
      active_draft_ends.push_back(next_draft + draft_length);
      next_draft += next_draft_gap();
    }
    while (!active_draft_ends.empty() && active_draft_ends.front() <= t)
      active_draft_ends.pop_front();

    const double temperature =
        m.temp_mean + ar - static_cast<double>(active_draft_ends.size()) * m.draft_depth_c;
    const std::int64_t local_ms = ((to_epoch_ms(t) + config.utc_offset.count()) % kDayMs + kDayMs) % kDayMs;
    const double lux = diurnal_lux(Millis{local_ms}, m, 2.0 * rng.uniform() - 1.0);

    bool in_outage = false;
    for (const auto& o : config.outages)
      if (offset >= o.offset && offset < o.offset + o.duration) in_outage = true;
    if (!in_outage) {
      SensorReading r;
      r.sensor_id = label;
      r.timestamp = t;
      r.temperature_c = temperature;
      r.humidity_pct = humidity;
      r.illuminance_lux = lux;
      r.sequence = static_cast<std::uint32_t>(k % 65535);
      out.readings.push_back(std::move(r));
    }

    ar = phi * ar + innovation_sd * rng.normal();
    if (m.humidity_band > 0) {
      humidity += m.humidity_step_sd * rng.normal();
      for (int bounce = 0; bounce < 64 && (humidity < hum_lo || humidity > hum_hi); ++bounce)
        humidity = humidity > hum_hi ? 2 * hum_hi - humidity : 2 * hum_lo - humidity;
      humidity = std::clamp(humidity, hum_lo, hum_hi);
    } else {
      humidity = m.humidity_mean;
    }
  }
  return out;
}

std::map<std::string, ReadingSeries> simulate(const SimConfig& config) {
  std::map<std::string, ReadingSeries> out;
  for (const auto& [label, model] : config.locations)
    out.emplace(label, simulate_location(config, label));
  return out;
}

SimConfig parse_sim_config(const std::string& json_text) {
  const json doc = json::parse(json_text);
  SimConfig cfg;
  if (doc.contains("start")) {
    const auto start = parse_iso8601(doc["start"].get<std::string>());
    if (!start) throw std::invalid_argument("'start' is not an ISO 8601 timestamp");
    cfg.start = *start;
  }
  cfg.duration_days = doc.value("duration_days", cfg.duration_days);
  if (doc.contains("interval_s")) cfg.interval = seconds(doc["interval_s"].get<double>());
  cfg.seed = doc.value("seed", cfg.seed);
  if (doc.contains("utc_offset_minutes"))
    cfg.utc_offset = std::chrono::minutes(doc["utc_offset_minutes"].get<int>());
  cfg.ar_coefficient = doc.value("ar_coefficient", cfg.ar_coefficient);
  for (const auto& o : doc.value("outages", json::array()))
    cfg.outages.push_back({seconds(o.at("offset_s").get<double>()),
                           seconds(o.at("duration_s").get<double>())});

  const json locations = doc.value("locations", json::object());
  for (const auto& [label, j] : locations.items()) {
    LocationModel m;
    m.temp_mean = j.value("temp_mean", m.temp_mean);
    m.temp_noise_sd = j.value("temp_noise_sd", m.temp_noise_sd);
    m.draft_rate_per_day = j.value("draft_rate_per_day", m.draft_rate_per_day);
    m.draft_depth_c = j.value("draft_depth_c", m.draft_depth_c);
    m.draft_duration_min = j.value("draft_duration_min", m.draft_duration_min);
    m.humidity_mean = j.value("humidity_mean", m.humidity_mean);
    m.humidity_band = j.value("humidity_band", m.humidity_band);
    m.humidity_step_sd = j.value("humidity_step_sd", m.humidity_step_sd);
    m.lux_peak = j.value("lux_peak", m.lux_peak);
    m.lux_attenuation = j.value("lux_attenuation", m.lux_attenuation);
    if (j.contains("sunrise")) m.sunrise = parse_clock(j["sunrise"].get<std::string>());
    if (j.contains("sunset")) m.sunset = parse_clock(j["sunset"].get<std::string>());
    m.cloud_noise = j.value("cloud_noise", m.cloud_noise);
    cfg.locations.emplace(label, m);
  }
  cfg.validate();
  return cfg;
}

SimConfig load_sim_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", file.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_sim_config(buffer.str());
}

SimConfig winter_reference_config() {
  SimConfig cfg;
  cfg.start = *parse_iso8601("2018-11-24T00:00:00+02:00");
  cfg.duration_days = 14;
  cfg.utc_offset = std::chrono::minutes(120);
  cfg.seed = 1;

  auto location = [](double temp, double humidity, double lux_mean) {
    LocationModel m;
    m.temp_mean = temp;
    m.humidity_mean = humidity;
    m.lux_attenuation = lux_mean / (m.lux_peak * mean_daylight_factor(m));
    return m;
  };
  cfg.locations.emplace("corner", location(19.48, 34.24, 10.36));
  cfg.locations.emplace("window", location(17.59, 35.86, 75.55));
  return cfg;
}

}  // namespace verdancy::sim
