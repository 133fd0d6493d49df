#include "verdancy/ingestion.h"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>
#include <thread>

#include "verdancy/storage.h"

namespace verdancy::ingest {

IngestError::IngestError(Kind kind, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(line ? fmt::format("line {}: {}", *line, message) : message),
      kind_(kind),
      line_(line) {}

SensorReading normalize(const std::optional<codec::DecodedMeasurement>& m,
                        const std::string& sensor_id, Timestamp timestamp,
                        std::optional<double> host_lux) {
  SensorReading r;
  r.sensor_id = sensor_id;
  r.timestamp = timestamp;
  if (m) {
    r.temperature_c = m->temperature_c();
    r.humidity_pct = m->humidity_pct();
    if (m->sequence) r.sequence = static_cast<std::uint32_t>(*m->sequence);
  }
  r.illuminance_lux = host_lux;
  if (!r.has_any_variable())
    throw IngestError(IngestError::Kind::kEmptyReading,
                      fmt::format("reading from '{}' carries no measured variable", sensor_id));
  return r;
}

SeriesSource::SeriesSource(ReadingSeries series, SourceDescriptor descriptor)
    : series_(std::move(series)), descriptor_(std::move(descriptor)) {}

std::optional<SensorReading> SeriesSource::next() {
  if (pos_ >= series_.readings.size()) return std::nullopt;
  return series_.readings[pos_++];
}

ReplaySource::ReplaySource(const std::filesystem::path& file, ReplayOptions options)
    : in_(file), options_(std::move(options)) {
  if (!in_) throw std::runtime_error(fmt::format("cannot open {}", file.string()));
  if (options_.speed && !(*options_.speed > 0))
    throw std::invalid_argument("replay speed must be positive");
  if (!options_.sleeper)
    options_.sleeper = [](Millis d) { std::this_thread::sleep_for(d); };
  sensor_id_ = options_.sensor_id.value_or(file.stem().string());
  descriptor_ = {SourceKind::kReplay, sensor_id_, options_.sampling_interval};

  std::string header;
  if (!std::getline(in_, header))
    throw IngestError(IngestError::Kind::kMalformedRow, "missing CSV header", 1);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != kCsvHeader)
    throw IngestError(IngestError::Kind::kMalformedRow,
                      fmt::format("expected header '{}'", kCsvHeader), 1);
}

std::optional<SensorReading> ReplaySource::next() {
  std::string row;
  while (std::getline(in_, row)) {
    ++line_;
    if (row.empty()) continue;
    SensorReading r;
    try {
      r = parse_csv_row(row, line_, sensor_id_);
    } catch (const StorageError& e) {
      throw IngestError(IngestError::Kind::kMalformedRow, e.what());
    }
    const Millis tolerance = 2 * options_.sampling_interval;
    if (max_seen_ && r.timestamp < *max_seen_ - tolerance)
      throw IngestError(IngestError::Kind::kNonMonotonicTimestamp,
                        fmt::format("timestamp {} precedes {} by more than {} s",
                                    format_iso8601(r.timestamp), format_iso8601(*max_seen_),
                                    to_seconds(tolerance)),
                        line_);
    max_seen_ = max_seen_ ? std::max(*max_seen_, r.timestamp) : r.timestamp;

    if (options_.speed && last_emitted_ && r.timestamp > *last_emitted_) {
      const double delay_ms =
          static_cast<double>((r.timestamp - *last_emitted_).count()) / *options_.speed;
      options_.sleeper(Millis{std::llround(delay_ms)});
    }
    if (!last_emitted_ || r.timestamp > *last_emitted_) last_emitted_ = r.timestamp;
    return r;
  }
  return std::nullopt;
}

SensorReading parse_feed_line(std::string_view line, std::size_t line_number) {
  auto fail = [&](const std::string& why) {
    return IngestError(IngestError::Kind::kMalformedFeedLine, why, line_number);
  };
  std::istringstream in{std::string(line)};
  std::string ts_text, sensor_id, payload, lux_text, extra;
  if (!(in >> ts_text >> sensor_id >> payload))
    throw fail("expected '<timestamp> <sensor_id> <payload|-> [<lux>]'");
  in >> lux_text;
  if (in >> extra) throw fail("unexpected trailing field");

  const auto ts = parse_iso8601(ts_text);
  if (!ts) throw fail(fmt::format("bad timestamp '{}'", ts_text));

  std::optional<codec::DecodedMeasurement> m;
  if (payload != "-") {
    try {
      m = codec::decode(codec::parse_hex(payload));
    } catch (const codec::CodecError& e) {
      throw fail(fmt::format("bad payload: {}", e.what()));
    }
  }
  std::optional<double> lux;
  if (!lux_text.empty()) {
    double v = 0;
    const auto [end, ec] = std::from_chars(lux_text.data(), lux_text.data() + lux_text.size(), v);
    if (ec != std::errc() || end != lux_text.data() + lux_text.size() || !std::isfinite(v) ||
        v < 0)
      throw fail(fmt::format("bad illuminance '{}'", lux_text));
    lux = v;
  }
  try {
    return normalize(m, sensor_id, *ts, lux);
  } catch (const IngestError& e) {
    throw fail(e.what());
  }
}

FeedSource::FeedSource(std::istream& in, SourceDescriptor descriptor)
    : in_(in), descriptor_(std::move(descriptor)) {}

std::optional<SensorReading> FeedSource::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      return parse_feed_line(line, line_);
    } catch (const IngestError& e) {
      ++rejected_;
      last_error_ = e.what();
    }
  }
  return std::nullopt;
}

StreamOrderer::StreamOrderer(Millis tolerance) : tolerance_(tolerance) {
  if (tolerance.count() < 0) throw std::invalid_argument("tolerance must be >= 0");
}

std::vector<SensorReading> StreamOrderer::push(SensorReading reading) {
  auto& s = sensors_[reading.sensor_id];
  if (reading.sequence && s.last_sequence == reading.sequence) {
    ++duplicates_dropped_;
    return {};
  }
  if (s.newest && reading.timestamp < *s.newest - tolerance_) {
    ++late_dropped_;
    return {};
  }
  if (reading.sequence) s.last_sequence = reading.sequence;
  if (!s.newest || reading.timestamp > *s.newest) s.newest = reading.timestamp;

  Held h{std::move(reading), arrivals_++};
  const auto pos = std::upper_bound(s.held.begin(), s.held.end(), h, [](const Held& a, const Held& b) {
    return a.reading.timestamp < b.reading.timestamp;
  });
  s.held.insert(pos, std::move(h));

  std::vector<SensorReading> out;
  const Timestamp release_until = *s.newest - tolerance_;
  auto it = s.held.begin();
  while (it != s.held.end() && it->reading.timestamp <= release_until && it->reading.timestamp < *s.newest) {
    out.push_back(std::move(it->reading));
    ++it;
  }
  s.held.erase(s.held.begin(), it);
  return out;
}

std::vector<SensorReading> StreamOrderer::flush() {
  std::vector<SensorReading> out;
  for (auto& [id, s] : sensors_) {
    for (auto& h : s.held) out.push_back(std::move(h.reading));
    s.held.clear();
  }
  return out;
}

std::vector<SensorReading> merge_by_time(const std::vector<ReadingSource*>& sources) {
  std::vector<std::optional<SensorReading>> heads;
  heads.reserve(sources.size());
  for (auto* s : sources) heads.push_back(s->next());

  std::vector<SensorReading> out;
  for (;;) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < heads.size(); ++i)
      if (heads[i] && (!best || heads[i]->timestamp < heads[*best]->timestamp)) best = i;
    if (!best) break;
    out.push_back(std::move(*heads[*best]));
    heads[*best] = sources[*best]->next();
  }
  return out;
}

}  // namespace verdancy::ingest
