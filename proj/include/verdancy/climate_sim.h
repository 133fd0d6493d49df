#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "verdancy/reading.h"

// Synthetic winter indoor climate for hardware-free runs of the pipeline.
//
// Per location and sample k (t_k = start + k * interval):
//   temperature = temp_mean + x_k - sum of active draft depths
//       x_k is AR(1): x_{k+1} = phi * x_k + sd * sqrt(1 - phi^2) * N(0,1),
//       phi = ar_coefficient ^ (interval / 5 s), x_0 ~ N(0, sd^2)
//   humidity    = reflected random walk inside mean +/- band/2
//   illuminance = diurnal_lux at local clock time with uniform cloud noise
//
// Random numbers come from SplitMix64 so output is bit-identical across
// platforms and standard libraries.
namespace verdancy::sim {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view text);

struct LocationModel {
  double temp_mean = 20.0;
  double temp_noise_sd = 0.25;
  double draft_rate_per_day = 1.0;
  double draft_depth_c = 2.0;
  double draft_duration_min = 20.0;
  double humidity_mean = 35.0;
  double humidity_band = 10.0;
  double humidity_step_sd = 0.25;
  double lux_peak = 871.0;
  double lux_attenuation = 1.0;
  Millis sunrise = std::chrono::hours(9) + std::chrono::minutes(30);
  Millis sunset = std::chrono::hours(15);
  double cloud_noise = 0.3;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

struct Outage {
  Millis offset;  // from the start of the run
  Millis duration;
};

struct SimConfig {
  std::map<std::string, LocationModel> locations;
  Timestamp start{};  // required, after the epoch
  double duration_days = 14.0;
  Millis interval = std::chrono::seconds(5);
  std::uint64_t seed = 1;
  Millis utc_offset{0};  // local clock = UTC + utc_offset
  double ar_coefficient = 0.99;
  std::vector<Outage> outages;  // samples inside an outage are not emitted

  void validate() const;
  std::size_t samples_per_location() const;
};

/// `time_of_day` is local clock time since midnight; `cloud_draw` in [-1, 1]
/// scales the cloud noise.
double diurnal_lux(Millis time_of_day, const LocationModel& model, double cloud_draw = 0.0);

std::map<std::string, ReadingSeries> simulate(const SimConfig& config);
ReadingSeries simulate_location(const SimConfig& config, const std::string& label);

/// JSON form:
///   {"start": ISO8601, "duration_days": 14, "interval_s": 5, "seed": 1,
///    "utc_offset_minutes": 120, "ar_coefficient": 0.99,
///    "outages": [{"offset_s": 3600, "duration_s": 1200}],
///    "locations": {"window": {"temp_mean": 17.59, ..., "sunrise": "09:30"}}}
/// "start" and "locations" are required. Location keys are the LocationModel
/// field names.
SimConfig parse_sim_config(const std::string& json_text);
SimConfig load_sim_config(const std::filesystem::path& file);

/// Two-location winter scenario calibrated to these 14-day averages:
/// corner {19.48 C, 34.24 %RH, 10.36 lux}, window {17.59 C, 35.86 %RH, 75.55 lux}.
SimConfig winter_reference_config();

}  // namespace verdancy::sim
