#pragma once

#include <memory>
#include <string>
#include <utility>

#include "verdancy/monitor.h"

// HTTP interface under /api/v1. All bodies are JSON except export.csv and
// the event stream; timestamps are ISO 8601 UTC.
//
//   GET    /api/v1/live
//   GET    /api/v1/history?sensor=ID[&from=TS][&to=TS][&bucket=SECONDS]
//   GET    /api/v1/species
//   GET    /api/v1/plants
//   POST   /api/v1/plants        {"species_id", "sensor_id", "display_name"}
//                                 optional Idempotency-Key header
//   DELETE /api/v1/plants/{id}
//   GET    /api/v1/alerts[?since=TS]
//   GET    /api/v1/events        text/event-stream, events "reading" and "alert"
//   GET    /api/v1/export.csv?sensor=ID[&from=TS][&to=TS]
//
// Errors are {"error": message} with 400, 404 or 409.
namespace verdancy::api {

struct ApiOptions {
  // Comment line sent on an idle event stream.
  Millis keepalive = std::chrono::seconds(15);
  Millis default_bucket = std::chrono::minutes(5);
  std::size_t worker_threads = 32;
};

class ApiServer {
 public:
  /// The monitor must have a store attached.
  ApiServer(Monitor& monitor, EventHub& hub, ApiOptions options = {});
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the
  /// bound port. Throws std::runtime_error on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void listen();
  /// Runs listen() on a background thread.
  void start();
  /// Closes event streams and stops the server.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "HOST:PORT" (or ":PORT", or "PORT"); the host defaults to
/// 127.0.0.1. Throws std::invalid_argument.
std::pair<std::string, int> parse_listen_address(const std::string& address);

}  // namespace verdancy::api
