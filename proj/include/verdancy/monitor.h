#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "verdancy/alert_engine.h"
#include "verdancy/plant_catalog.h"
#include "verdancy/reading.h"
#include "verdancy/storage.h"

namespace verdancy {

/// One message on the server-push stream.
struct StreamMessage {
  std::string event;  // "reading" or "alert"
  std::string data;   // JSON document
};

/// Fans messages out to subscribers without ever blocking the publisher.
/// Each subscriber owns a bounded queue; a subscriber whose queue overflows
/// is closed and must reconnect.
class EventHub {
 public:
  class Subscription {
   public:
    /// Waits up to `timeout` for messages. Returns an empty vector on
    /// timeout; check closed() to distinguish a closed subscription.
    std::vector<StreamMessage> wait(Millis timeout);
    bool closed() const;

   private:
    friend class EventHub;
    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<StreamMessage> queue_;
    std::size_t capacity_;
    bool closed_ = false;
  };

  explicit EventHub(std::size_t queue_capacity = 1024) : capacity_(queue_capacity) {}
  ~EventHub();

  std::shared_ptr<Subscription> subscribe();
  void publish(const StreamMessage& message);
  /// Closes every subscription, e.g. at shutdown.
  void close_all();

  std::size_t subscriber_count() const;
  std::size_t dropped_subscribers() const { return dropped_; }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<Subscription>> subscribers_;
  std::atomic<std::size_t> dropped_ = 0;
};

std::string reading_to_json(const SensorReading& r);

/// Per-variable alert state of one plant.
struct PlantStatus {
  PlantInstance instance;
  std::map<Variable, alert::AlertState> states;
};

using Clock = std::function<Timestamp()>;
Timestamp system_now();

/// Routes readings into storage and into one alert machine per
/// (plant instance, variable), records emitted events in the alert log and
/// publishes both on the event hub. All entry points are serialized by an
/// internal mutex.
///
/// A plant only evaluates readings stamped at or after its added_at, so the
/// alert state is a pure function of the stored readings, the catalog and
/// the rules. On construction the state is rebuilt by replaying stored
/// readings without logging their events again.
class Monitor {
 public:
  struct Options {
    alert::RuleConfig rules;
    Clock clock = system_now;
  };

  /// `store` and `hub` may be null (batch replay keeps events in memory).
  Monitor(PlantCatalog& catalog, ReadingStore* store, EventHub* hub, Options options);

  /// Stores the reading (when a store is attached) and evaluates it.
  /// Returns the emitted events.
  std::vector<alert::AlertEvent> ingest(const SensorReading& reading);

  PlantCatalog::AddResult add_plant(const std::string& species_id, const std::string& sensor_id,
                                    const std::string& display_name,
                                    const std::optional<std::string>& idempotency_key = {},
                                    std::optional<Timestamp> added_at = {});
  /// Removes a plant, closing any open episode with a RECOVERED event.
  std::vector<alert::AlertEvent> remove_plant(const std::string& instance_id);

  std::vector<PlantStatus> plant_status() const;
  std::vector<PlantInstance> plants() const;
  const SpeciesMap& species() const { return catalog_.species(); }

  /// Events emitted since construction (only those not written to a store
  /// when no store is attached).
  std::vector<alert::AlertEvent> events_since(std::optional<Timestamp> since) const;

  Timestamp now() const { return options_.clock(); }
  ReadingStore* store() const { return store_; }

 private:
  struct Tracked {
    PlantInstance instance;
    std::map<Variable, alert::AlertMachine> machines;
  };

  void track(const PlantInstance& instance);
  std::vector<alert::AlertEvent> evaluate(const SensorReading& reading);
  void record(const std::vector<alert::AlertEvent>& events);
  void rebuild();

  PlantCatalog& catalog_;
  ReadingStore* store_;
  EventHub* hub_;
  Options options_;
  mutable std::mutex mutex_;
  std::map<std::string, Tracked> tracked_;
  std::vector<alert::AlertEvent> memory_log_;
};

}  // namespace verdancy
