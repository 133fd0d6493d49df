#include "verdancy/cli.h"

#include <fmt/format.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "verdancy/analytics.h"
#include "verdancy/api_service.h"
#include "verdancy/climate_sim.h"
#include "verdancy/ingestion.h"
#include "verdancy/monitor.h"
#include "verdancy/sensor_codec.h"
#include "verdancy/storage.h"

namespace verdancy {

namespace {

std::atomic<bool> g_stop_requested = false;

extern "C" void on_stop_signal(int) { g_stop_requested = true; }

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

SpeciesMap species_from(const std::string& file) {
  return file.empty() ? parse_species(kDefaultSpeciesJson) : load_species(file);
}

alert::RuleConfig rules_from(const std::string& file) {
  return file.empty() ? alert::RuleConfig{} : alert::parse_rules(read_file(file));
}

std::optional<Timestamp> parse_time_flag(const std::string& text, const char* flag) {
  if (text.empty()) return std::nullopt;
  auto ts = parse_iso8601(text);
  if (!ts) throw UsageError(fmt::format("{} expects an ISO 8601 timestamp, got '{}'", flag, text));
  return ts;
}

std::string data_dir_or_env(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("VERDANCY_DATA"); env && *env) return env;
  throw UsageError("--data is required (or set VERDANCY_DATA)");
}

template <typename T>
std::string opt_text(const std::optional<T>& v) {
  return v ? fmt::format("{}", *v) : std::string("-");
}

std::string fixed_or_dash(const std::optional<double>& v, int decimals) {
  return v ? fmt::format("{:.{}f}", *v, decimals) : std::string("-");
}

// ---------------------------------------------------------------------------

struct DecodeArgs {
  std::string hex;
  std::string format = "text";
};

int run_decode(const DecodeArgs& args, std::ostream& out) {
  const auto m = codec::decode(codec::parse_hex(args.hex));
  auto accel = [&]() -> std::string {
    if (!m.accel_mg[0] && !m.accel_mg[1] && !m.accel_mg[2]) return "-";
    return fmt::format("{},{},{}", opt_text(m.accel_mg[0]), opt_text(m.accel_mg[1]),
                       opt_text(m.accel_mg[2]));
  };
  const std::vector<std::pair<std::string, std::string>> fields = {
      {"format", std::to_string(m.format)},
      {"temperature_c", fixed_or_dash(m.temperature_c(), 3)},
      {"humidity_pct", fixed_or_dash(m.humidity_pct(), 4)},
      {"pressure_pa", opt_text(m.pressure_pa)},
      {"accel_mg", accel()},
      {"battery_mv", opt_text(m.battery_mv)},
      {"tx_power_dbm", opt_text(m.tx_power_dbm)},
      {"movement_count", opt_text(m.movement_count)},
      {"sequence", opt_text(m.sequence)},
      {"mac", m.mac ? codec::format_mac(*m.mac) : std::string("-")},
  };
  if (args.format == "csv") {
    std::string header, row;
    for (const auto& [name, value] : fields) {
      header += (header.empty() ? "" : ",") + name;
      const bool quote = value.find(',') != std::string::npos;
      row += (row.empty() ? "" : ",") + (quote ? "\"" + value + "\"" : (value == "-" ? "" : value));
    }
    out << header << '\n' << row << '\n';
  } else {
    for (const auto& [name, value] : fields) out << fmt::format("{:<15} {}\n", name + ":", value);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReplayArgs {
  std::vector<std::string> files;
  std::optional<double> speed;
  bool batch = false;
  std::string species_file;
  std::string rules_file;
  bool emit_alerts = false;
};

int run_replay(const ReplayArgs& args, std::ostream& out, std::ostream& err) {
  if (args.speed && args.batch) throw UsageError("--speed and --batch are mutually exclusive");
  if (args.speed && !(*args.speed > 0)) throw UsageError("--speed must be positive");

  std::vector<std::unique_ptr<ingest::ReplaySource>> sources;
  std::vector<ingest::ReadingSource*> raw;
  for (const auto& file : args.files) {
    sources.push_back(std::make_unique<ingest::ReplaySource>(file));
    raw.push_back(sources.back().get());
  }
  for (std::size_t i = 0; i < sources.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (sources[i]->descriptor().location_label == sources[j]->descriptor().location_label)
        throw UsageError(fmt::format("two replay files map to sensor '{}'",
                                     sources[i]->descriptor().location_label));

  // Each sensor gets one plant of every species, watching from the start.
  PlantCatalog catalog(species_from(args.species_file));
  Monitor::Options options;
  options.rules = rules_from(args.rules_file);
  options.clock = [] { return Timestamp{}; };
  Monitor monitor(catalog, nullptr, nullptr, options);
  for (const auto& source : sources)
    for (const auto& [species_id, profile] : catalog.species())
      monitor.add_plant(species_id, source->descriptor().location_label,
                        fmt::format("{} @ {}", profile.name, source->descriptor().location_label),
                        std::nullopt, Timestamp{});

  const auto readings = ingest::merge_by_time(raw);
  ingest::StreamOrderer orderer;
  std::size_t events = 0;
  auto consume = [&](const std::vector<SensorReading>& released) {
    for (const auto& r : released) {
      for (const auto& e : monitor.ingest(r)) {
        ++events;
        if (args.emit_alerts) out << alert::event_to_json(e) << '\n';
      }
    }
  };
  std::optional<Timestamp> previous;
  for (const auto& r : readings) {
    if (args.speed && previous && r.timestamp > *previous)
      std::this_thread::sleep_for(Millis{std::llround(
          static_cast<double>((r.timestamp - *previous).count()) / *args.speed)});
    if (!previous || r.timestamp > *previous) previous = r.timestamp;
    consume(orderer.push(r));
  }
  consume(orderer.flush());

  const auto summary =
      fmt::format("replayed {} readings from {} sensors: {} alert events, {} late, {} duplicates\n",
                  readings.size(), sources.size(), events, orderer.late_dropped(),
                  orderer.duplicates_dropped());
  (args.emit_alerts ? err : out) << summary;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> days;
  std::string out;
};

int run_simulate(const SimulateArgs& args, std::ostream& out) {
  auto cfg = sim::load_sim_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  if (args.days) cfg.duration_days = *args.days;
  cfg.validate();

  const std::filesystem::path target(args.out);
  const bool single_file = cfg.locations.size() == 1 && target.extension() == ".csv";
  if (!single_file) std::filesystem::create_directories(target);
  for (const auto& [label, model] : cfg.locations) {
    const auto path = single_file ? target : target / (encode_sensor_filename(label) + ".csv");
    export_csv(sim::simulate_location(cfg, label), path);
    out << path.string() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> files;
  std::string from, to;
  std::string format = "text";
  double interval_s = 5.0;
};

int run_report(const ReportArgs& args, std::ostream& out) {
  const auto from = parse_time_flag(args.from, "--from");
  const auto to = parse_time_flag(args.to, "--to");
  if (from.has_value() != to.has_value()) throw UsageError("--from and --to go together");
  if (from && *from > *to) throw UsageError("--from is after --to");
  if (!(args.interval_s > 0)) throw UsageError("--interval must be positive");

  std::vector<std::pair<std::string, ReadingSeries>> locations;
  for (const auto& file : args.files) {
    const auto label = std::filesystem::path(file).stem().string();
    for (const auto& [existing, series] : locations)
      if (existing == label) throw UsageError(fmt::format("duplicate location '{}'", label));
    locations.emplace_back(label, import_csv(std::filesystem::path(file), label));
  }
  std::optional<analytics::TimeRange> range;
  if (from) range = analytics::TimeRange{*from, *to};
  const auto report = analytics::location_report(std::move(locations), range, seconds(args.interval_s));
  out << (args.format == "csv" ? analytics::format_report_csv(report)
                               : analytics::format_report_text(report));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string data;
  std::string sensor;
  std::string from, to;
  std::string out;
};

int run_export(const ExportArgs& args, std::ostream& out) {
  const auto from = parse_time_flag(args.from, "--from");
  const auto to = parse_time_flag(args.to, "--to");
  const auto dir = data_dir_or_env(args.data);
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error(fmt::format("data directory {} does not exist", dir));
  ReadingStore store({dir, Durability::kFlush, std::nullopt});
  const auto series =
      store.query(args.sensor, from.value_or(Timestamp::min()), to.value_or(Timestamp::max()));
  if (args.out == "-") {
    export_csv(series, out);
  } else {
    export_csv(series, std::filesystem::path(args.out));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string listen = "127.0.0.1:8080";
  std::string data;
  std::string species_file;
  std::string rules_file;
  std::string feed = "-";
  std::string durability = "fsync";
};

int run_serve(const ServeArgs& args, std::ostream& out, std::ostream& err) {
  const auto [host, port] = api::parse_listen_address(args.listen);
  const std::filesystem::path dir = data_dir_or_env(args.data);
  std::filesystem::create_directories(dir);

  PlantCatalog catalog(species_from(args.species_file), dir / "plants.json");
  ReadingStore store(
      {dir, args.durability == "flush" ? Durability::kFlush : Durability::kFsync, std::nullopt});
  EventHub hub;
  Monitor::Options options;
  options.rules = rules_from(args.rules_file);
  Monitor monitor(catalog, &store, &hub, options);
  api::ApiServer server(monitor, hub);
  const int bound = server.bind(host, port);

  auto channel = std::make_shared<ingest::Channel<SensorReading>>(4096);
  std::shared_ptr<std::istream> feed;
  if (args.feed == "-") {
    feed = std::shared_ptr<std::istream>(&std::cin, [](std::istream*) {});
  } else if (!args.feed.empty()) {
    auto file = std::make_shared<std::ifstream>(args.feed);
    if (!*file) throw std::runtime_error(fmt::format("cannot open feed {}", args.feed));
    feed = file;
  }

  // The feed reader may block on input indefinitely, so it is detached and
  // shares ownership of everything it touches.
  if (feed) {
    std::thread([feed, channel] {
      ingest::FeedSource source(*feed);
      ingest::StreamOrderer orderer;
      std::size_t rejected = 0;
      auto report_rejects = [&] {
        if (source.rejected() == rejected) return;
        rejected = source.rejected();
        std::cerr << "feed: " << source.last_error().value_or("rejected line") << '\n';
      };
      while (auto r = source.next()) {
        report_rejects();
        for (auto& released : orderer.push(std::move(*r)))
          if (!channel->push(std::move(released))) return;
      }
      report_rejects();
      for (auto& released : orderer.flush())
        if (!channel->push(std::move(released))) return;
    }).detach();
  }

  std::thread consumer([&] {
    while (auto r = channel->pop()) {
      try {
        monitor.ingest(*r);
      } catch (const std::exception& e) {
        err << "ingest: " << e.what() << '\n';
      }
    }
  });

  g_stop_requested = false;
  std::signal(SIGINT, on_stop_signal);
  std::signal(SIGTERM, on_stop_signal);
  server.start();
  out << fmt::format("listening on http://{}:{}/api/v1/\n", host, bound) << std::flush;
  while (!g_stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));

  server.stop();
  channel->close();
  consumer.join();
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Plant environment monitor", "verdancy"};
  app.require_subcommand(1);

  DecodeArgs decode;
  auto* decode_cmd = app.add_subcommand("decode", "Decode a RuuviTag payload given as hex");
  decode_cmd->add_option("hex", decode.hex, "Payload bytes after the manufacturer id")->required();
  decode_cmd->add_option("--format", decode.format, "Output format")
      ->check(CLI::IsMember({"text", "csv"}));

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Run CSV recordings through the alert engine");
  replay_cmd->add_option("files", replay.files, "CSV files; the file name is the sensor id")
      ->required()
      ->check(CLI::ExistingFile);
  auto* speed = replay_cmd->add_option("--speed", replay.speed, "Pace playback at X times real time");
  auto* batch = replay_cmd->add_flag("--batch", replay.batch, "Replay without pacing (default)");
  speed->excludes(batch);
  replay_cmd->add_option("--species", replay.species_file, "Species catalog JSON")
      ->check(CLI::ExistingFile);
  replay_cmd->add_option("--rules", replay.rules_file, "Alert rule durations JSON")
      ->check(CLI::ExistingFile);
  replay_cmd->add_flag("--emit-alerts", replay.emit_alerts, "Print alert events as JSON lines");

  SimulateArgs simulate;
  auto* simulate_cmd = app.add_subcommand("simulate", "Generate synthetic recordings");
  simulate_cmd->add_option("--config", simulate.config, "Simulation config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  simulate_cmd->add_option("--seed", simulate.seed, "Override the config seed");
  simulate_cmd->add_option("--days", simulate.days, "Override the duration in days");
  simulate_cmd->add_option("--out", simulate.out,
                           "Output directory (one <location>.csv each), or a .csv file for a "
                           "single-location config")
      ->required();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Compare locations over a time range");
  report_cmd->add_option("files", report.files, "CSV files; the file name is the location")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--from", report.from, "Range start (ISO 8601)");
  report_cmd->add_option("--to", report.to, "Range end, exclusive (ISO 8601)");
  report_cmd->add_option("--format", report.format, "Output format")
      ->check(CLI::IsMember({"text", "csv"}));
  report_cmd->add_option("--interval", report.interval_s, "Nominal sampling interval in seconds");

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export", "Export stored readings as CSV");
  export_cmd->add_option("--data", exp.data, "Data directory (default $VERDANCY_DATA)");
  export_cmd->add_option("--sensor", exp.sensor, "Sensor id")->required();
  export_cmd->add_option("--from", exp.from, "Range start (ISO 8601)");
  export_cmd->add_option("--to", exp.to, "Range end, exclusive (ISO 8601)");
  export_cmd->add_option("--out", exp.out, "Output CSV file, or - for stdout")->required();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API and ingest the live feed");
  serve_cmd->add_option("--listen", serve.listen, "HOST:PORT to listen on");
  serve_cmd->add_option("--data", serve.data, "Data directory (default $VERDANCY_DATA)");
  serve_cmd->add_option("--species", serve.species_file, "Species catalog JSON")
      ->check(CLI::ExistingFile);
  serve_cmd->add_option("--rules", serve.rules_file, "Alert rule durations JSON")
      ->check(CLI::ExistingFile);
  serve_cmd->add_option("--feed", serve.feed,
                        "Live feed file, - for stdin, or empty for no feed");
  serve_cmd->add_option("--durability", serve.durability, "fsync or flush after each append")
      ->check(CLI::IsMember({"fsync", "flush"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*decode_cmd) return run_decode(decode, out);
    if (*replay_cmd) return run_replay(replay, out, err);
    if (*simulate_cmd) return run_simulate(simulate, out);
    if (*report_cmd) return run_report(report, out);
    if (*export_cmd) return run_export(exp, out);
    if (*serve_cmd) return run_serve(serve, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
  return kExitUsage;
}

}  // namespace verdancy
