#include "verdancy/monitor.h"

#include <algorithm>

#include "json.hpp"

namespace verdancy {

using nlohmann::json;

std::vector<StreamMessage> EventHub::Subscription::wait(Millis timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || !queue_.empty(); });
  std::vector<StreamMessage> out(std::make_move_iterator(queue_.begin()),
                                 std::make_move_iterator(queue_.end()));
  queue_.clear();
  return out;
}

bool EventHub::Subscription::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

EventHub::~EventHub() { close_all(); }

std::shared_ptr<EventHub::Subscription> EventHub::subscribe() {
  std::shared_ptr<Subscription> sub(new Subscription(capacity_));
  std::lock_guard lock(mutex_);
  subscribers_.push_back(sub);
  return sub;
}

void EventHub::publish(const StreamMessage& message) {
  std::lock_guard lock(mutex_);
  std::erase_if(subscribers_, [&](const std::shared_ptr<Subscription>& sub) {
    std::lock_guard sub_lock(sub->mutex_);
    if (sub->closed_) return true;
    if (sub->queue_.size() >= sub->capacity_) {
      sub->closed_ = true;
      sub->queue_.clear();
      sub->cv_.notify_all();
      ++dropped_;
      return true;
    }
    sub->queue_.push_back(message);
    sub->cv_.notify_all();
    return false;
  });
}

void EventHub::close_all() {
  std::lock_guard lock(mutex_);
  for (auto& sub : subscribers_) {
    std::lock_guard sub_lock(sub->mutex_);
    sub->closed_ = true;
    sub->cv_.notify_all();
  }
  subscribers_.clear();
}

std::size_t EventHub::subscriber_count() const {
  std::lock_guard lock(mutex_);
  return subscribers_.size();
}

std::string reading_to_json(const SensorReading& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j = {{"sensor_id", r.sensor_id},
            {"timestamp", format_iso8601(r.timestamp)},
            {"temperature_c", opt(r.temperature_c)},
            {"humidity_pct", opt(r.humidity_pct)},
            {"illuminance_lux", opt(r.illuminance_lux)}};
  j["sequence"] = r.sequence ? json(*r.sequence) : json(nullptr);
  return j.dump();
}

Timestamp system_now() {
  return std::chrono::time_point_cast<Millis>(std::chrono::system_clock::now());
}

Monitor::Monitor(PlantCatalog& catalog, ReadingStore* store, EventHub* hub, Options options)
    : catalog_(catalog), store_(store), hub_(hub), options_(std::move(options)) {
  options_.rules.validate();
  for (const auto& instance : catalog_.instances()) track(instance);
  if (store_) rebuild();
}

void Monitor::track(const PlantInstance& instance) {
  const SpeciesProfile* species = catalog_.find_species(instance.species_id);
  if (!species) return;
  Tracked t{instance, {}};
  for (Variable v : kAllVariables)
    t.machines.emplace(v, alert::AlertMachine({instance.instance_id, v}, species->bands(v),
                                              options_.rules));
  tracked_.insert_or_assign(instance.instance_id, std::move(t));
}

void Monitor::rebuild() {
  for (auto& [id, t] : tracked_) {
    const auto& sensors = store_->sensors();
    if (std::find(sensors.begin(), sensors.end(), t.instance.sensor_id) == sensors.end()) continue;
    const auto series = store_->query(t.instance.sensor_id, t.instance.added_at, Timestamp::max());
    for (const auto& r : series.readings)
      for (auto& [v, machine] : t.machines)
        if (auto value = r.value(v)) machine.observe(*value, r.timestamp);
  }
}

std::vector<alert::AlertEvent> Monitor::evaluate(const SensorReading& reading) {
  std::vector<alert::AlertEvent> events;
  for (auto& [id, t] : tracked_) {
    if (t.instance.sensor_id != reading.sensor_id || reading.timestamp < t.instance.added_at)
      continue;
    for (auto& [v, machine] : t.machines) {
      const auto value = reading.value(v);
      if (!value) continue;
      if (machine.state().last_update && reading.timestamp < *machine.state().last_update)
        continue;
      auto emitted = machine.observe(*value, reading.timestamp);
      events.insert(events.end(), emitted.begin(), emitted.end());
    }
  }
  return events;
}

void Monitor::record(const std::vector<alert::AlertEvent>& events) {
  for (const auto& e : events) {
    if (store_)
      store_->append_event(e);
    else
      memory_log_.push_back(e);
    if (hub_) hub_->publish({"alert", alert::event_to_json(e)});
  }
}

std::vector<alert::AlertEvent> Monitor::ingest(const SensorReading& reading) {
  std::lock_guard lock(mutex_);
  if (store_) store_->append(reading);
  auto events = evaluate(reading);
  if (hub_) hub_->publish({"reading", reading_to_json(reading)});
  record(events);
  return events;
}

PlantCatalog::AddResult Monitor::add_plant(const std::string& species_id,
                                           const std::string& sensor_id,
                                           const std::string& display_name,
                                           const std::optional<std::string>& idempotency_key,
                                           std::optional<Timestamp> added_at) {
  std::lock_guard lock(mutex_);
  auto result = catalog_.add_instance(species_id, sensor_id, display_name,
                                      added_at.value_or(options_.clock()), idempotency_key);
  if (result.created) track(result.instance);
  return result;
}

std::vector<alert::AlertEvent> Monitor::remove_plant(const std::string& instance_id) {
  std::lock_guard lock(mutex_);
  catalog_.remove_instance(instance_id);
  std::vector<alert::AlertEvent> events;
  auto it = tracked_.find(instance_id);
  if (it != tracked_.end()) {
    const Timestamp now = options_.clock();
    for (const auto& [v, machine] : it->second.machines) {
      const auto& state = machine.state();
      const Timestamp at = state.last_update ? std::max(now, *state.last_update) : now;
      if (auto e = alert::close_on_removal(state, machine.last_value().value_or(0.0), at,
                                           machine.key()))
        events.push_back(*e);
    }
    tracked_.erase(it);
  }
  record(events);
  return events;
}

std::vector<PlantStatus> Monitor::plant_status() const {
  std::lock_guard lock(mutex_);
  std::vector<PlantStatus> out;
  for (const auto& [id, t] : tracked_) {
    PlantStatus s{t.instance, {}};
    for (const auto& [v, machine] : t.machines) s.states.emplace(v, machine.state());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PlantInstance> Monitor::plants() const {
  std::lock_guard lock(mutex_);
  return catalog_.instances();
}

std::vector<alert::AlertEvent> Monitor::events_since(std::optional<Timestamp> since) const {
  std::vector<alert::AlertEvent> out;
  {
    std::lock_guard lock(mutex_);
    if (store_) {
      out = store_->events_since(since);
    } else {
      for (const auto& e : memory_log_)
        if (!since || e.at > *since) out.push_back(e);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.at < b.at; });
  return out;
}

}  // namespace verdancy
