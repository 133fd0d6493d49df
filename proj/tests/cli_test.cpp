#include "doctest.h"

#include <fmt/format.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"
#include "verdancy/analytics.h"
#include "verdancy/cli.h"
#include "verdancy/sensor_codec.h"
#include "verdancy/storage.h"

using namespace verdancy;
using namespace std::chrono_literals;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "verdancy");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("verdancy_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

const std::string kScenario = std::string(VERDANCY_SOURCE_DIR) + "/data/winter_sim.json";

}  // namespace

TEST_CASE("decode prints fields") {
  codec::DecodedMeasurement m;
  m.temperature_milli_c = -5000;
  m.humidity_pct_e4 = 500000;
  const auto hex = codec::to_hex(codec::encode(m));
  CHECK(hex.rfind("05FC184E20", 0) == 0);

  const auto r = run({"decode", hex});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("temperature_c:  -5.000\n") != std::string::npos);
  CHECK(r.out.find("humidity_pct:   50.0000\n") != std::string::npos);
  CHECK(r.out.find("pressure_pa:    -\n") != std::string::npos);

  const auto csv = run({"decode", "0512FC5394C37C0004FFFC040CAC364200CDCBB8334C884F", "--format", "csv"});
  CHECK(csv.code == kExitOk);
  CHECK(csv.out ==
        "format,temperature_c,humidity_pct,pressure_pa,accel_mg,battery_mv,tx_power_dbm,"
        "movement_count,sequence,mac\n"
        "5,24.300,53.4900,100044,\"4,-4,1036\",2977,4,66,205,CB:B8:33:4C:88:4F\n");
}

TEST_CASE("decode of a bad payload is a runtime error") {
  CHECK(run({"decode", "05FC18"}).code == kExitRuntimeError);
  CHECK(run({"decode", "XYZ"}).code == kExitRuntimeError);
}

TEST_CASE("usage errors exit with 2") {
  auto r = run({"bogus"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"decode"}).code == kExitUsage);
  CHECK(run({"decode", "00", "--unknown"}).code == kExitUsage);
  CHECK(run({"decode", "00", "--format", "xml"}).code == kExitUsage);
  CHECK(run({"report", "/no/such/file.csv"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("simulate is byte-identical for a seed") {
  const auto dir = fresh_dir("simulate");
  auto a = run({"simulate", "--config", kScenario, "--seed", "1", "--days", "0.5", "--out",
                (dir / "a").string()});
  auto b = run({"simulate", "--config", kScenario, "--seed", "1", "--days", "0.5", "--out",
                (dir / "b").string()});
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  for (const char* f : {"corner.csv", "window.csv"}) {
    const auto first = slurp(dir / "a" / f);
    CHECK(first.size() > 100000);
    CHECK(first == slurp(dir / "b" / f));
  }
  auto c = run({"simulate", "--config", kScenario, "--seed", "2", "--days", "0.5", "--out",
                (dir / "c").string()});
  CHECK(slurp(dir / "c" / "corner.csv") != slurp(dir / "a" / "corner.csv"));
}

TEST_CASE("simulate writes a single file for a one-location config") {
  const auto dir = fresh_dir("single");
  std::ofstream(dir / "one.json") << R"({"start": "2018-11-24T00:00:00Z", "duration_days": 0.01, "locations": {"shelf": {}}})";
  const auto r = run({"simulate", "--config", (dir / "one.json").string(), "--out",
                      (dir / "shelf.csv").string()});
  CHECK(r.code == kExitOk);
  CHECK(import_csv(dir / "shelf.csv", "shelf").readings.size() == 173);
  CHECK(run({"simulate", "--config", (dir / "missing.json").string(), "--out", "x"}).code ==
        kExitUsage);
}

TEST_CASE("report matches summarize") {
  const auto dir = fresh_dir("report");
  REQUIRE(run({"simulate", "--config", kScenario, "--days", "1", "--out", dir.string()}).code ==
          kExitOk);
  const auto r = run({"report", (dir / "window.csv").string(), (dir / "corner.csv").string(),
                      "--format", "csv"});
  REQUIRE(r.code == kExitOk);
  std::istringstream lines(r.out);
  std::string header, corner_row, window_row;
  std::getline(lines, header);
  std::getline(lines, corner_row);
  std::getline(lines, window_row);
  CHECK(header == "location,samples,temperature_c,humidity_pct,illuminance_lux,coverage");
  const auto corner = analytics::summarize(import_csv(dir / "corner.csv", "corner"));
  CHECK(corner_row == fmt::format("corner,{},{:.3f},{:.4f},{:.2f},1.0000", corner.sample_count,
                                  *corner.temperature.mean, *corner.humidity.mean,
                                  *corner.illuminance.mean));
  CHECK(window_row.rfind("window,17281,", 0) == 0);

  const auto text = run({"report", (dir / "corner.csv").string(), (dir / "window.csv").string()});
  CHECK(text.out.find("corner vs window:") != std::string::npos);

  const auto ranged =
      run({"report", (dir / "corner.csv").string(), "--from", "2018-11-24T10:00:00+02:00", "--to",
           "2018-11-24T11:00:00+02:00", "--format", "csv"});
  CHECK(ranged.out.find("corner,720,") != std::string::npos);
  CHECK(run({"report", (dir / "corner.csv").string(), "--from", "2018-11-24T10:00:00Z"}).code ==
        kExitUsage);
  CHECK(run({"report", (dir / "corner.csv").string(), "--from", "noon", "--to", "later"}).code ==
        kExitUsage);
}

TEST_CASE("replay of the corner recording raises low humidity") {
  const auto dir = fresh_dir("replay");
  REQUIRE(run({"simulate", "--config", kScenario, "--days", "2", "--out", dir.string()}).code ==
          kExitOk);
  const auto corner = (dir / "corner.csv").string();
  const auto a = run({"replay", corner, "--batch", "--emit-alerts"});
  const auto b = run({"replay", corner, "--batch", "--emit-alerts"});
  REQUIRE(a.code == kExitOk);
  CHECK(a.out == b.out);
  CHECK(a.err.find("replayed 34561 readings") != std::string::npos);
  bool humidity_low = false;
  std::istringstream lines(a.out);
  for (std::string line; std::getline(lines, line);) {
    const auto e = alert::event_from_json(line);
    if (e.kind == alert::EventKind::kRaised && e.variable == Variable::kHumidity &&
        e.direction == alert::Direction::kLow)
      humidity_low = true;
    CHECK(e.variable != Variable::kIlluminance);
  }
  CHECK(humidity_low);

  const auto quiet = run({"replay", corner});
  CHECK(quiet.out.rfind("replayed 34561 readings", 0) == 0);
  CHECK(run({"replay", corner, "--batch", "--speed", "2"}).code == kExitUsage);
}

TEST_CASE("paced replay follows the speed multiplier") {
  const auto dir = fresh_dir("paced");
  std::ofstream(dir / "s.csv") << kCsvHeader << "\n2018-11-24T10:00:00Z,20.000,,\n"
                               << "2018-11-24T10:00:05Z,20.000,,\n"
                               << "2018-11-24T10:00:10Z,20.000,,\n";
  const auto start = std::chrono::steady_clock::now();
  CHECK(run({"replay", (dir / "s.csv").string(), "--speed", "50"}).code == kExitOk);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(elapsed >= 180ms);
  CHECK(elapsed < 2s);
}

TEST_CASE("export reads the store") {
  const auto dir = fresh_dir("export");
  {
    ReadingStore store({dir, Durability::kFlush, std::nullopt});
    for (int k = 0; k < 100; ++k) {
      SensorReading r;
      r.sensor_id = "window";
      r.timestamp = *parse_iso8601("2018-11-24T10:00:00Z") + 5s * k;
      r.temperature_c = 17.59;
      r.humidity_pct = 35.86;
      r.illuminance_lux = 75.55;
      store.append(r);
    }
  }
  const auto out = dir / "out.csv";
  auto r = run({"export", "--data", dir.string(), "--sensor", "window", "--from",
                "2018-11-24T10:00:00Z", "--to", "2018-11-24T10:01:00Z", "--out", out.string()});
  REQUIRE(r.code == kExitOk);
  const auto content = slurp(out);
  CHECK(content.rfind(std::string(kCsvHeader) + "\n2018-11-24T10:00:00Z,17.590,35.8600,75.55\n", 0) == 0);
  CHECK(import_csv(out, "window").readings.size() == 12);

  setenv("VERDANCY_DATA", dir.string().c_str(), 1);
  auto env = run({"export", "--sensor", "window", "--out", "-"});
  unsetenv("VERDANCY_DATA");
  CHECK(env.code == kExitOk);
  std::istringstream env_csv(env.out);
  CHECK(import_csv(env_csv, "window").readings.size() == 100);

  CHECK(run({"export", "--sensor", "window", "--out", "-"}).code == kExitUsage);
  CHECK(run({"export", "--data", dir.string(), "--sensor", "attic", "--out", "-"}).code ==
        kExitRuntimeError);
}

TEST_CASE("serve answers the API and ingests the feed") {
  const auto dir = fresh_dir("serve");
  std::ofstream(dir / "feed.txt")
      << "2018-11-24T10:00:00Z window 0512FC5394C37C0004FFFC040CAC364200CDCBB8334C884F 75.5\n"
      << "2018-11-24T10:00:05Z window - 76\n"
      << "not a record\n";

  const int port = free_port();
  Result result{};
  std::thread server([&] {
    result = run({"serve", "--listen", fmt::format("127.0.0.1:{}", port), "--data",
                  (dir / "data").string(), "--feed", (dir / "feed.txt").string(),
                  "--durability", "flush"});
  });

  httplib::Client client("127.0.0.1", port);
  nlohmann::json live;
  const auto deadline = std::chrono::steady_clock::now() + 10s;
  while (std::chrono::steady_clock::now() < deadline) {
    if (auto res = client.Get("/api/v1/live"); res && res->status == 200) {
      live = nlohmann::json::parse(res->body);
      if (live["sensors"].size() == 1) break;
    }
    std::this_thread::sleep_for(20ms);
  }
  std::raise(SIGINT);
  server.join();
  INFO("serve stderr: ", result.err);
  REQUIRE(live["sensors"].size() == 1);
  CHECK(live["sensors"][0]["reading"]["timestamp"] == "2018-11-24T10:00:05Z");
  CHECK(live["sensors"][0]["reading"]["illuminance_lux"] == 76.0);
  CHECK(result.code == kExitOk);
  CHECK(result.out.find(fmt::format("listening on http://127.0.0.1:{}/api/v1/", port)) !=
        std::string::npos);
  CHECK(std::filesystem::exists(dir / "data" / "readings"));
}
