#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "verdancy/reading.h"
#include "verdancy/sensor_codec.h"

namespace verdancy::ingest {

class IngestError : public std::runtime_error {
 public:
  enum class Kind { kEmptyReading, kMalformedRow, kNonMonotonicTimestamp, kMalformedFeedLine };
  IngestError(Kind kind, const std::string& message, std::optional<std::size_t> line = {});

  Kind kind() const { return kind_; }
  std::optional<std::size_t> line() const { return line_; }

 private:
  Kind kind_;
  std::optional<std::size_t> line_;
};

inline constexpr Millis kDefaultSamplingInterval = std::chrono::seconds(5);

/// Merges a tag measurement with the co-located light sensor. Temperature,
/// humidity and sequence come from `m`, illuminance from `host_lux`.
/// Throws kEmptyReading when no variable would be present.
SensorReading normalize(const std::optional<codec::DecodedMeasurement>& m,
                        const std::string& sensor_id, Timestamp timestamp,
                        std::optional<double> host_lux = {});

enum class SourceKind { kReplay, kSimulation, kLiveAdapter };

struct SourceDescriptor {
  SourceKind kind = SourceKind::kReplay;
  std::string location_label;
  Millis sampling_interval = kDefaultSamplingInterval;
};

class ReadingSource {
 public:
  virtual ~ReadingSource() = default;
  /// Next reading, or nullopt at end of stream.
  virtual std::optional<SensorReading> next() = 0;
  virtual const SourceDescriptor& descriptor() const = 0;
};

/// Serves an in-memory series, e.g. simulator output.
class SeriesSource : public ReadingSource {
 public:
  SeriesSource(ReadingSeries series, SourceDescriptor descriptor);
  std::optional<SensorReading> next() override;
  const SourceDescriptor& descriptor() const override { return descriptor_; }

 private:
  ReadingSeries series_;
  SourceDescriptor descriptor_;
  std::size_t pos_ = 0;
};

using Sleeper = std::function<void(Millis)>;

struct ReplayOptions {
  /// Playback speed multiplier; nullopt is batch mode (no pacing).
  std::optional<double> speed;
  /// Defaults to the file name without extension.
  std::optional<std::string> sensor_id;
  Millis sampling_interval = kDefaultSamplingInterval;
  /// Used for pacing; defaults to std::this_thread::sleep_for.
  Sleeper sleeper;
};

/// Streams a CSV file in the storage exchange format. Rows may step back in
/// time by up to two sampling intervals; a larger regression throws
/// kNonMonotonicTimestamp with the line number.
class ReplaySource : public ReadingSource {
 public:
  ReplaySource(const std::filesystem::path& file, ReplayOptions options = {});
  std::optional<SensorReading> next() override;
  const SourceDescriptor& descriptor() const override { return descriptor_; }

 private:
  std::ifstream in_;
  ReplayOptions options_;
  SourceDescriptor descriptor_;
  std::string sensor_id_;
  std::size_t line_ = 1;
  std::optional<Timestamp> max_seen_;
  std::optional<Timestamp> last_emitted_;
};

/// Parses the live-capture feed, one record per line:
///   <ISO8601> <sensor_id> <hex-payload|-> [<lux>]
/// "-" means the record carries only illuminance. Blank lines and lines
/// starting with '#' are ignored. Throws kMalformedFeedLine.
SensorReading parse_feed_line(std::string_view line, std::size_t line_number);

/// Reads feed records from a stream. Malformed records are counted and
/// skipped so that one bad line cannot stop a running service.
class FeedSource : public ReadingSource {
 public:
  explicit FeedSource(std::istream& in,
                      SourceDescriptor descriptor = {SourceKind::kLiveAdapter, "",
                                                     kDefaultSamplingInterval});
  std::optional<SensorReading> next() override;
  const SourceDescriptor& descriptor() const override { return descriptor_; }

  std::size_t rejected() const { return rejected_; }
  const std::optional<std::string>& last_error() const { return last_error_; }

 private:
  std::istream& in_;
  SourceDescriptor descriptor_;
  std::size_t line_ = 0;
  std::size_t rejected_ = 0;
  std::optional<std::string> last_error_;
};

/// Restores per-sensor time order within a tolerance window and drops
/// repeated advertisements. A reading is held until a reading of the same
/// sensor at least `tolerance` newer arrives. Readings older than the newest
/// seen minus `tolerance` are dropped as late.
class StreamOrderer {
 public:
  explicit StreamOrderer(Millis tolerance = 2 * kDefaultSamplingInterval);

  /// Returns the readings released by this arrival, in time order.
  std::vector<SensorReading> push(SensorReading reading);
  /// Releases everything still held, grouped by sensor id.
  std::vector<SensorReading> flush();

  std::size_t late_dropped() const { return late_dropped_; }
  std::size_t duplicates_dropped() const { return duplicates_dropped_; }

 private:
  struct Held {
    SensorReading reading;
    std::uint64_t arrival;
  };
  struct PerSensor {
    std::vector<Held> held;  // sorted by (timestamp, arrival)
    std::optional<Timestamp> newest;
    std::optional<std::uint32_t> last_sequence;
  };

  Millis tolerance_;
  std::map<std::string, PerSensor> sensors_;
  std::uint64_t arrivals_ = 0;
  std::size_t late_dropped_ = 0;
  std::size_t duplicates_dropped_ = 0;
};

/// Reads every source to the end and merges them by timestamp. Ties are
/// broken by source position, so the output is deterministic.
std::vector<SensorReading> merge_by_time(const std::vector<ReadingSource*>& sources);

/// Bounded multi-producer handoff between ingestion threads and the
/// consumer. `push` blocks while full; `pop` returns nullopt once the
/// channel is closed and drained.
template <typename T>
class Channel {
 public:
  explicit Channel(std::size_t capacity = 1024) : capacity_(capacity) {}

  bool push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || queue_.size() < capacity_; });
    if (closed_) return false;
    queue_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !queue_.empty(); });
    if (queue_.empty()) return std::nullopt;
    T value = std::move(queue_.front());
    queue_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> queue_;
  bool closed_ = false;
};

}  // namespace verdancy::ingest
