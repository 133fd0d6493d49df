#include "verdancy/analytics.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace verdancy::analytics {

namespace {

// Neumaier-compensated running statistics.
class Accumulator {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      compensation_ += (sum_ - t) + x;
    else
      compensation_ += (x - t) + sum_;
    sum_ = t;
    if (count_ == 0 || x < min_) min_ = x;
    if (count_ == 0 || x > max_) max_ = x;
    ++count_;
  }

  std::size_t count() const { return count_; }
  double mean() const { return (sum_ + compensation_) / static_cast<double>(count_); }
  double min() const { return min_; }
  double max() const { return max_; }

 private:
  std::size_t count_ = 0;
  double sum_ = 0.0;
  double compensation_ = 0.0;
  double min_ = 0.0;
  double max_ = 0.0;
};

VariableSummary finish(const Accumulator& acc, std::size_t expected) {
  VariableSummary s;
  s.count = acc.count();
  if (acc.count() > 0) {
    s.mean = acc.mean();
    s.min = acc.min();
    s.max = acc.max();
  }
  s.coverage_fraction =
      expected == 0 ? 0.0
                    : std::min(1.0, static_cast<double>(acc.count()) /
                                        static_cast<double>(expected));
  return s;
}

std::optional<Aggregate> finish(const Accumulator& acc) {
  if (acc.count() == 0) return std::nullopt;
  return Aggregate{acc.count(), acc.mean(), acc.min(), acc.max()};
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::string opt_fixed(const std::optional<double>& v, int decimals) {
  return v ? fmt::format("{:.{}f}", *v, decimals) : std::string("-");
}

}  // namespace

const VariableSummary& SummaryStats::get(Variable v) const {
  switch (v) {
    case Variable::kTemperature: return temperature;
    case Variable::kHumidity: return humidity;
    case Variable::kIlluminance: return illuminance;
  }
  return temperature;
}

const std::optional<Aggregate>& Bucket::get(Variable v) const {
  switch (v) {
    case Variable::kTemperature: return temperature;
    case Variable::kHumidity: return humidity;
    case Variable::kIlluminance: return illuminance;
  }
  return temperature;
}

SummaryStats summarize(const ReadingSeries& series, std::optional<TimeRange> range,
                       Millis nominal_interval) {
  if (nominal_interval.count() <= 0)
    throw std::invalid_argument("nominal interval must be positive");
  const auto& rs = series.readings;
  if (!range) {
    if (rs.empty()) return {};
    range = TimeRange{rs.front().timestamp, rs.back().timestamp + nominal_interval};
  }
  if (range->from > range->to) throw std::invalid_argument("summary range has from > to");

  Accumulator temp, hum, lux;
  std::size_t samples = 0;
  for (const auto& r : rs) {
    if (r.timestamp < range->from || r.timestamp >= range->to) continue;
    ++samples;
    if (r.temperature_c) temp.add(*r.temperature_c);
    if (r.humidity_pct) hum.add(*r.humidity_pct);
    if (r.illuminance_lux) lux.add(*r.illuminance_lux);
  }

  const auto span = (range->to - range->from).count();
  const auto step = nominal_interval.count();
  const auto expected = static_cast<std::size_t>((span + step - 1) / step);

  SummaryStats out;
  out.sample_count = samples;
  out.expected_samples = expected;
  out.coverage_fraction =
      expected == 0 ? 0.0
                    : std::min(1.0, static_cast<double>(samples) / static_cast<double>(expected));
  out.temperature = finish(temp, expected);
  out.humidity = finish(hum, expected);
  out.illuminance = finish(lux, expected);
  return out;
}

std::vector<Bucket> downsample(const ReadingSeries& series, Millis width) {
  if (width.count() <= 0) throw std::invalid_argument("bucket width must be positive");
  struct Open {
    std::size_t samples = 0;
    Accumulator temp, hum, lux;
  };
  std::map<std::int64_t, Open> buckets;
  for (const auto& r : series.readings) {
    auto& b = buckets[floor_div(to_epoch_ms(r.timestamp), width.count())];
    ++b.samples;
    if (r.temperature_c) b.temp.add(*r.temperature_c);
    if (r.humidity_pct) b.hum.add(*r.humidity_pct);
    if (r.illuminance_lux) b.lux.add(*r.illuminance_lux);
  }
  std::vector<Bucket> out;
  out.reserve(buckets.size());
  for (const auto& [index, b] : buckets) {
    Bucket bucket;
    bucket.bucket_start = from_epoch_ms(index * width.count());
    bucket.sample_count = b.samples;
    bucket.temperature = finish(b.temp);
    bucket.humidity = finish(b.hum);
    bucket.illuminance = finish(b.lux);
    out.push_back(bucket);
  }
  return out;
}

LocationReport location_report(std::vector<std::pair<std::string, ReadingSeries>> locations,
                               std::optional<TimeRange> range, Millis nominal_interval) {
  std::sort(locations.begin(), locations.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  LocationReport report;
  for (const auto& [label, series] : locations)
    report.rows.push_back({label, summarize(series, range, nominal_interval)});

  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    for (std::size_t j = i + 1; j < report.rows.size(); ++j) {
      const auto& a = report.rows[i];
      const auto& b = report.rows[j];
      LocationComparison c{a.label, b.label, {}, {}, {}};
      if (a.stats.illuminance.mean && b.stats.illuminance.mean && *a.stats.illuminance.mean > 0)
        c.illuminance_ratio = *b.stats.illuminance.mean / *a.stats.illuminance.mean;
      if (a.stats.temperature.mean && b.stats.temperature.mean)
        c.temperature_delta = *a.stats.temperature.mean - *b.stats.temperature.mean;
      if (a.stats.humidity.mean && b.stats.humidity.mean)
        c.humidity_delta = *a.stats.humidity.mean - *b.stats.humidity.mean;
      report.comparisons.push_back(c);
    }
  }
  return report;
}

std::string format_report_text(const LocationReport& report) {
  std::size_t width = 8;
  for (const auto& row : report.rows) width = std::max(width, row.label.size());
  std::string out =
      fmt::format("{:<{}}  {:>8}  {:>13}  {:>12}  {:>15}  {:>8}\n", "location", width,
                  "samples", "temperature_c", "humidity_pct", "illuminance_lux", "coverage");
  for (const auto& row : report.rows) {
    const auto& s = row.stats;
    out += fmt::format("{:<{}}  {:>8}  {:>13}  {:>12}  {:>15}  {:>8.3f}\n", row.label, width,
                       s.sample_count, opt_fixed(s.temperature.mean, 2),
                       opt_fixed(s.humidity.mean, 2), opt_fixed(s.illuminance.mean, 2),
                       s.coverage_fraction);
  }
  for (const auto& c : report.comparisons) {
    out += fmt::format("\n{} vs {}:\n", c.first, c.second);
    if (c.illuminance_ratio)
      out += fmt::format("  illuminance ratio {}/{}: {:.2f}\n", c.second, c.first,
                         *c.illuminance_ratio);
    if (c.temperature_delta)
      out += fmt::format("  temperature difference {}-{}: {:+.2f} C\n", c.first, c.second,
                         *c.temperature_delta);
    if (c.humidity_delta)
      out += fmt::format("  humidity difference {}-{}: {:+.2f} %RH\n", c.first, c.second,
                         *c.humidity_delta);
  }
  return out;
}

std::string format_report_csv(const LocationReport& report) {
  auto cell = [](const std::optional<double>& v, int decimals) {
    return v ? fmt::format("{:.{}f}", *v, decimals) : std::string();
  };
  std::string out = "location,samples,temperature_c,humidity_pct,illuminance_lux,coverage\n";
  for (const auto& row : report.rows) {
    const auto& s = row.stats;
    out += fmt::format("{},{},{},{},{},{:.4f}\n", row.label, s.sample_count,
                       cell(s.temperature.mean, 3), cell(s.humidity.mean, 4),
                       cell(s.illuminance.mean, 2), s.coverage_fraction);
  }
  if (!report.comparisons.empty()) {
    out += "\nfirst,second,illuminance_ratio,temperature_delta_c,humidity_delta_pct\n";
    for (const auto& c : report.comparisons)
      out += fmt::format("{},{},{},{},{}\n", c.first, c.second, cell(c.illuminance_ratio, 4),
                         cell(c.temperature_delta, 3), cell(c.humidity_delta, 4));
  }
  return out;
}

}  // namespace verdancy::analytics
