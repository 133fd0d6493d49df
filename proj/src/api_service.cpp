#include "verdancy/api_service.h"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "verdancy/analytics.h"

namespace verdancy::api {

using nlohmann::json;

namespace {

class BadRequest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Conflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::optional<Timestamp> time_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  const auto text = req.get_param_value(name);
  auto ts = parse_iso8601(text);
  if (!ts) throw BadRequest(fmt::format("'{}' is not an ISO 8601 timestamp: '{}'", name, text));
  return ts;
}

std::string required_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name) || req.get_param_value(name).empty())
    throw BadRequest(fmt::format("missing query parameter '{}'", name));
  return req.get_param_value(name);
}

ReadingSeries query_range(const ReadingStore& store, const std::string& sensor,
                          std::optional<Timestamp> from, std::optional<Timestamp> to) {
  try {
    return store.query(sensor, from.value_or(Timestamp::min()), to.value_or(Timestamp::max()));
  } catch (const StorageError& e) {
    if (e.kind() == StorageError::Kind::kUnknownSensor) throw NotFound(e.what());
    if (e.kind() == StorageError::Kind::kBadRange) throw BadRequest(e.what());
    throw;
  }
}

json aggregate_json(const std::optional<analytics::Aggregate>& a) {
  if (!a) return nullptr;
  return {{"count", a->count}, {"mean", a->mean}, {"min", a->min}, {"max", a->max}};
}

json state_json(Variable v, const alert::AlertState& s) {
  json j = {{"variable", to_string(v)}, {"phase", alert::to_string(s.phase)}};
  if (s.phase != alert::Phase::kOk) {
    j["since"] = format_iso8601(s.since);
    j["severity"] = alert::to_string(s.severity);
    j["direction"] = alert::to_string(s.direction);
  }
  return j;
}

// Runs a handler and maps domain errors to HTTP statuses.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const BadRequest& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const NotFound& e) {
      send_json(res, 404, {{"error", e.what()}});
    } catch (const Conflict& e) {
      send_json(res, 409, {{"error", e.what()}});
    } catch (const CatalogError& e) {
      using K = CatalogError::Kind;
      const int status = e.kind() == K::kUnknownSpecies || e.kind() == K::kUnknownInstance ? 404
                         : e.kind() == K::kIdempotencyConflict                               ? 409
                                                                                             : 400;
      send_json(res, status, {{"error", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", fmt::format("invalid JSON body: {}", e.what())}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace

struct ApiServer::Impl {
  Impl(Monitor& m, EventHub& h, ApiOptions o) : monitor(m), hub(h), options(o) {}

  Monitor& monitor;
  EventHub& hub;
  ApiOptions options;
  httplib::Server server;
  std::thread thread;
  bool bound = false;

  ReadingStore& store() { return *monitor.store(); }

  void routes();
  void live(httplib::Response& res);
  void history(const httplib::Request& req, httplib::Response& res);
  void add_plant(const httplib::Request& req, httplib::Response& res);
  void events(httplib::Response& res);
};

void ApiServer::Impl::routes() {
  server.Get("/api/v1/live", guarded([this](const auto&, auto& res) { live(res); }));

  server.Get("/api/v1/history",
             guarded([this](const auto& req, auto& res) { history(req, res); }));

  server.Get("/api/v1/species", guarded([this](const auto&, auto& res) {
               json list = json::array();
               for (const auto& [id, profile] : monitor.species())
                 list.push_back(json::parse(species_to_json(profile)));
               send_json(res, 200, {{"species", list}});
             }));

  server.Get("/api/v1/plants", guarded([this](const auto&, auto& res) {
               json list = json::array();
               for (const auto& p : monitor.plants()) list.push_back(json::parse(plant_to_json(p)));
               send_json(res, 200, {{"plants", list}});
             }));

  server.Post("/api/v1/plants",
              guarded([this](const auto& req, auto& res) { add_plant(req, res); }));

  server.Delete(R"(/api/v1/plants/([^/]+))", guarded([this](const auto& req, auto& res) {
                  const std::string id = req.matches[1];
                  const auto events = monitor.remove_plant(id);
                  json list = json::array();
                  for (const auto& e : events) list.push_back(json::parse(alert::event_to_json(e)));
                  send_json(res, 200, {{"removed", id}, {"events", list}});
                }));

  server.Get("/api/v1/alerts", guarded([this](const auto& req, auto& res) {
               json list = json::array();
               for (const auto& e : monitor.events_since(time_param(req, "since")))
                 list.push_back(json::parse(alert::event_to_json(e)));
               send_json(res, 200, {{"alerts", list}});
             }));

  server.Get("/api/v1/events", [this](const httplib::Request&, httplib::Response& res) {
    events(res);
  });

  server.Get("/api/v1/export.csv", guarded([this](const auto& req, auto& res) {
               const auto sensor = required_param(req, "sensor");
               const auto series =
                   query_range(store(), sensor, time_param(req, "from"), time_param(req, "to"));
               std::ostringstream out;
               export_csv(series, out);
               res.status = 200;
               res.set_header("Content-Disposition",
                              fmt::format("attachment; filename=\"{}.csv\"",
                                          encode_sensor_filename(sensor)));
               res.set_content(out.str(), "text/csv");
             }));

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_json(res, res.status, {{"error", httplib::status_message(res.status)}});
  });
}

void ApiServer::Impl::live(httplib::Response& res) {
  const Timestamp now = monitor.now();
  json sensors = json::array();
  for (const auto& id : store().sensors()) {
    const auto latest = store().latest(id);
    if (!latest) continue;
    const double age = std::max(0.0, to_seconds(now - latest->timestamp));
    sensors.push_back({{"sensor_id", id},
                       {"reading", json::parse(reading_to_json(*latest))},
                       {"age_s", age}});
  }
  json plants = json::array();
  for (const auto& status : monitor.plant_status()) {
    json p = json::parse(plant_to_json(status.instance));
    json states = json::array();
    for (const auto& [v, s] : status.states) states.push_back(state_json(v, s));
    p["alerts"] = states;
    plants.push_back(p);
  }
  send_json(res, 200,
            {{"generated_at", format_iso8601(now)}, {"sensors", sensors}, {"plants", plants}});
}

void ApiServer::Impl::history(const httplib::Request& req, httplib::Response& res) {
  const auto sensor = required_param(req, "sensor");
  const auto from = time_param(req, "from");
  const auto to = time_param(req, "to");
  if (from && to && *from > *to) throw BadRequest("'from' is after 'to'");
  Millis bucket = options.default_bucket;
  if (req.has_param("bucket")) {
    const auto text = req.get_param_value("bucket");
    double seconds_value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), seconds_value);
    if (ec != std::errc() || end != text.data() + text.size() || !(seconds_value > 0) ||
        !std::isfinite(seconds_value))
      throw BadRequest(fmt::format("'bucket' must be a positive number of seconds: '{}'", text));
    bucket = seconds(seconds_value);
    if (bucket.count() <= 0) throw BadRequest("'bucket' is shorter than a millisecond");
  }
  const auto series = query_range(store(), sensor, from, to);
  json buckets = json::array();
  for (const auto& b : analytics::downsample(series, bucket))
    buckets.push_back({{"start", format_iso8601(b.bucket_start)},
                       {"samples", b.sample_count},
                       {"temperature_c", aggregate_json(b.temperature)},
                       {"humidity_pct", aggregate_json(b.humidity)},
                       {"illuminance_lux", aggregate_json(b.illuminance)}});
  json body = {{"sensor_id", sensor}, {"bucket_s", to_seconds(bucket)}, {"buckets", buckets}};
  body["from"] = from ? json(format_iso8601(*from)) : json(nullptr);
  body["to"] = to ? json(format_iso8601(*to)) : json(nullptr);
  send_json(res, 200, body);
}

void ApiServer::Impl::add_plant(const httplib::Request& req, httplib::Response& res) {
  const json body = json::parse(req.body);
  if (!body.is_object()) throw BadRequest("body must be a JSON object");
  const auto species_id = body.at("species_id").get<std::string>();
  const auto sensor_id = body.at("sensor_id").get<std::string>();
  std::string display_name = body.value("display_name", std::string());
  if (display_name.empty()) {
    if (const auto* s = monitor.species().count(species_id) ? &monitor.species().at(species_id)
                                                            : nullptr)
      display_name = s->name;
  }
  std::optional<std::string> key;
  if (req.has_header("Idempotency-Key")) key = req.get_header_value("Idempotency-Key");
  const auto result = monitor.add_plant(species_id, sensor_id, display_name, key);
  send_json(res, result.created ? 201 : 200, json::parse(plant_to_json(result.instance)));
}

void ApiServer::Impl::events(httplib::Response& res) {
  auto sub = hub.subscribe();
  res.set_header("Cache-Control", "no-cache");
  auto last_write = std::make_shared<std::chrono::steady_clock::time_point>(
      std::chrono::steady_clock::now());
  const Millis keepalive = options.keepalive;
  res.set_chunked_content_provider(
      "text/event-stream", [sub, last_write, keepalive](std::size_t, httplib::DataSink& sink) {
        if (!sink.is_writable()) return false;
        const auto messages = sub->wait(std::min<Millis>(keepalive, std::chrono::seconds(1)));
        std::string chunk;
        for (const auto& m : messages)
          chunk += fmt::format("event: {}\ndata: {}\n\n", m.event, m.data);
        if (chunk.empty() && std::chrono::steady_clock::now() - *last_write >= keepalive)
          chunk = ": keepalive\n\n";
        if (!chunk.empty()) {
          if (!sink.write(chunk.data(), chunk.size())) return false;
          *last_write = std::chrono::steady_clock::now();
        }
        if (sub->closed() && messages.empty()) {
          sink.done();
          return false;
        }
        return true;
      });
}

ApiServer::ApiServer(Monitor& monitor, EventHub& hub, ApiOptions options)
    : impl_(std::make_unique<Impl>(monitor, hub, options)) {
  if (!monitor.store()) throw std::invalid_argument("the API needs a monitor with a store");
  const auto workers = options.worker_threads;
  impl_->server.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  impl_->routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound_port = port;
  if (port == 0) {
    bound_port = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound_port = -1;
  }
  if (bound_port < 0) throw std::runtime_error(fmt::format("cannot listen on {}:{}", host, port));
  impl_->bound = true;
  return bound_port;
}

void ApiServer::listen() {
  if (!impl_->bound) throw std::logic_error("bind() before listen()");
  impl_->server.listen_after_bind();
}

void ApiServer::start() {
  if (!impl_->bound) throw std::logic_error("bind() before start()");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->hub.close_all();
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::pair<std::string, int> parse_listen_address(const std::string& address) {
  std::string host = "127.0.0.1";
  std::string port_text = address;
  if (const auto colon = address.rfind(':'); colon != std::string::npos) {
    if (colon > 0) host = address.substr(0, colon);
    port_text = address.substr(colon + 1);
  }
  if (host.size() > 2 && host.front() == '[' && host.back() == ']')
    host = host.substr(1, host.size() - 2);
  int port = -1;
  const auto [end, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || end != port_text.data() + port_text.size() || port < 0 || port > 65535)
    throw std::invalid_argument(fmt::format("bad listen address '{}', expected HOST:PORT", address));
  return {host, port};
}

}  // namespace verdancy::api
