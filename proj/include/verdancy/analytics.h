#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "verdancy/reading.h"

namespace verdancy::analytics {

struct VariableSummary {
  std::size_t count = 0;
  std::optional<double> mean;
  std::optional<double> min;
  std::optional<double> max;
  // Samples present / samples expected at the nominal interval, in [0, 1].
  double coverage_fraction = 0.0;
};

struct SummaryStats {
  std::size_t sample_count = 0;
  std::size_t expected_samples = 0;
  double coverage_fraction = 0.0;
  VariableSummary temperature;
  VariableSummary humidity;
  VariableSummary illuminance;

  const VariableSummary& get(Variable v) const;
};

struct TimeRange {
  Timestamp from;
  Timestamp to;  // exclusive
};

/// Statistics over readings with from <= t < to. Without a range the series'
/// own span [first, last + interval) is used, so a gap-free series has
/// coverage 1.
SummaryStats summarize(const ReadingSeries& series, std::optional<TimeRange> range = {},
                       Millis nominal_interval = std::chrono::seconds(5));

struct Aggregate {
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct Bucket {
  Timestamp bucket_start;
  std::size_t sample_count = 0;
  std::optional<Aggregate> temperature;
  std::optional<Aggregate> humidity;
  std::optional<Aggregate> illuminance;

  const std::optional<Aggregate>& get(Variable v) const;
};

/// Buckets aligned to multiples of `width` since the epoch; empty buckets
/// are omitted. Throws std::invalid_argument for a non-positive width.
std::vector<Bucket> downsample(const ReadingSeries& series, Millis width);

struct LocationRow {
  std::string label;
  SummaryStats stats;
};

/// Differences between two locations, `first` sorting before `second`.
struct LocationComparison {
  std::string first;
  std::string second;
  std::optional<double> illuminance_ratio;  // second / first
  std::optional<double> temperature_delta;  // first - second
  std::optional<double> humidity_delta;     // first - second
};

struct LocationReport {
  std::vector<LocationRow> rows;  // sorted by label
  std::vector<LocationComparison> comparisons;
};

LocationReport location_report(std::vector<std::pair<std::string, ReadingSeries>> locations,
                               std::optional<TimeRange> range = {},
                               Millis nominal_interval = std::chrono::seconds(5));

std::string format_report_text(const LocationReport& report);
std::string format_report_csv(const LocationReport& report);

}  // namespace verdancy::analytics
