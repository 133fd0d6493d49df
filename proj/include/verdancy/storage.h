#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "verdancy/alert_engine.h"
#include "verdancy/reading.h"

namespace verdancy {

class StorageError : public std::runtime_error {
 public:
  enum class Kind {
    kOutOfOrder,
    kUnknownSensor,
    kInvalidReading,
    kBadRange,
    kIoFailure,
    kStorageFull,
    kMalformedRow,
    kNonMonotonic,
  };
  StorageError(Kind kind, const std::string& message, std::optional<std::size_t> line = {});

  Kind kind() const { return kind_; }
  std::optional<std::size_t> line() const { return line_; }

 private:
  Kind kind_;
  std::optional<std::size_t> line_;
};

// ---------------------------------------------------------------------------
// CSV exchange format
//
//   timestamp,temperature_c,humidity_pct,illuminance_lux
//   2018-11-24T12:00:00Z,19.480,34.2400,10.36
//
// UTF-8, LF line endings, ISO 8601 UTC timestamps, '.' as decimal separator.
// Temperature is written with 3 decimals, humidity with 4, illuminance with 2.
// An empty field means the value is absent.

inline constexpr const char* kCsvHeader = "timestamp,temperature_c,humidity_pct,illuminance_lux";

std::string format_csv_row(const SensorReading& r);

/// Parses one data row. `line` is the 1-based line number used in errors.
SensorReading parse_csv_row(std::string_view row, std::size_t line,
                            const std::string& sensor_id);

void export_csv(const ReadingSeries& series, std::ostream& out);
void export_csv(const ReadingSeries& series, const std::filesystem::path& file);

/// Timestamps must be non-decreasing (kNonMonotonic otherwise).
ReadingSeries import_csv(std::istream& in, const std::string& sensor_id);
ReadingSeries import_csv(const std::filesystem::path& file, const std::string& sensor_id);

/// Validates the SensorReading invariants; throws kInvalidReading.
void validate_reading(const SensorReading& r);

struct Gap {
  Timestamp start;  // last sample before the gap
  Timestamp end;    // first sample after it
};

struct GapAnnotatedSeries {
  ReadingSeries series;
  std::vector<Gap> gaps;
};

/// A gap is reported wherever consecutive samples are more than `gap_reset`
/// apart.
GapAnnotatedSeries annotate_gaps(ReadingSeries series, Millis gap_reset);

// ---------------------------------------------------------------------------
// Append-only store
//
// Layout under the data directory:
//   readings/<sensor>.seg  fixed-size little-endian records, each with a CRC32
//   alerts.jsonl           one alert event per line
//
// Opening the store rescans every segment; a torn tail record (from a crash
// mid-write) is truncated away.

enum class Durability {
  kFsync,  // fsync before acknowledging each append
  kFlush,  // hand the bytes to the OS only
};

struct StoreOptions {
  std::filesystem::path dir;
  Durability durability = Durability::kFsync;
  // Readings older than (newest - retention) are dropped from queries and
  // compacted out of the segment files on the next open.
  std::optional<Millis> retention;
};

class ReadingStore {
 public:
  explicit ReadingStore(StoreOptions options);
  ~ReadingStore();
  ReadingStore(const ReadingStore&) = delete;
  ReadingStore& operator=(const ReadingStore&) = delete;

  /// Durable (per options) before returning. Readings of one sensor must
  /// arrive with non-decreasing timestamps (kOutOfOrder otherwise).
  void append(const SensorReading& reading);

  /// Readings with from <= t < to, in order.
  ReadingSeries query(const std::string& sensor_id, Timestamp from, Timestamp to) const;
  ReadingSeries all(const std::string& sensor_id) const;

  std::vector<std::string> sensors() const;
  std::optional<SensorReading> latest(const std::string& sensor_id) const;
  std::size_t size(const std::string& sensor_id) const;

  void append_event(const alert::AlertEvent& event);
  /// Events with `at` strictly after `since` (all when absent), in log order.
  std::vector<alert::AlertEvent> events_since(std::optional<Timestamp> since) const;

  const StoreOptions& options() const { return options_; }

 private:
  struct Segment;

  Segment& segment_for(const std::string& sensor_id);
  void load();
  void load_events();

  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<Segment>> segments_;
  std::vector<alert::AlertEvent> events_;
  int events_fd_ = -1;
};

std::string encode_sensor_filename(std::string_view sensor_id);
std::optional<std::string> decode_sensor_filename(std::string_view name);

}  // namespace verdancy
