#include "doctest.h"

#include <fstream>
#include <random>
#include <sstream>

#include "verdancy/storage.h"

using namespace verdancy;
using namespace std::chrono_literals;

namespace {

const Timestamp kT0 = from_epoch_ms(1543017600000);  // 2018-11-24T00:00:00Z

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("verdancy_storage_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

SensorReading reading(const std::string& sensor, Timestamp t, std::optional<double> temp,
                      std::optional<double> hum = {}, std::optional<double> lux = {}) {
  SensorReading r;
  r.sensor_id = sensor;
  r.timestamp = t;
  r.temperature_c = temp;
  r.humidity_pct = hum;
  r.illuminance_lux = lux;
  return r;
}

StorageError::Kind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const StorageError& e) {
    return e.kind();
  }
  FAIL("expected StorageError");
  return StorageError::Kind::kIoFailure;
}

ReadingSeries random_series(std::mt19937_64& rng, std::size_t n) {
  ReadingSeries s{"rand", {}};
  Timestamp t = kT0;
  std::uniform_real_distribution<double> temp(-40, 60), hum(0, 100), lux(0, 20000);
  for (std::size_t i = 0; i < n; ++i) {
    t += Millis{static_cast<long>(rng() % 20000)};
    SensorReading r;
    r.sensor_id = "rand";
    r.timestamp = t;
    const auto mask = 1 + rng() % 7;
    if (mask & 1) r.temperature_c = temp(rng);
    if (mask & 2) r.humidity_pct = hum(rng);
    if (mask & 4) r.illuminance_lux = lux(rng);
    s.readings.push_back(r);
  }
  return s;
}

}  // namespace

TEST_CASE("CSV header and row format") {
  ReadingSeries s{"corner", {reading("corner", kT0 + 12h, 19.48, 34.24, 10.36)}};
  std::ostringstream out;
  export_csv(s, out);
  CHECK(out.str() ==
        "timestamp,temperature_c,humidity_pct,illuminance_lux\n"
        "2018-11-24T12:00:00Z,19.480,34.2400,10.36\n");

  CHECK(format_csv_row(reading("x", kT0 + 1500ms, -0.0001, {}, 0.0)) ==
        "2018-11-24T00:00:01.500Z,0.000,,0.00");
  CHECK(format_csv_row(reading("x", kT0, -5.0)) == "2018-11-24T00:00:00Z,-5.000,,");
}

TEST_CASE("CSV import of winter reference values") {
  std::istringstream in(
      "timestamp,temperature_c,humidity_pct,illuminance_lux\n"
      "2018-11-24T12:00:00Z,19.48,34.24,10.36\n"
      "2018-11-24T10:00:00Z,17.59,35.86,\n");
  try {
    import_csv(in, "corner");
    FAIL("expected non-monotonic error");
  } catch (const StorageError& e) {
    CHECK(e.kind() == StorageError::Kind::kNonMonotonic);
    CHECK(e.line() == 3);
  }

  std::istringstream ok(
      "timestamp,temperature_c,humidity_pct,illuminance_lux\n"
      "2018-11-24T12:00:00Z,19.48,34.24,10.36\n"
      "2018-11-24T12:00:05Z,19.48,34.24,\n");
  const auto s = import_csv(ok, "corner");
  REQUIRE(s.readings.size() == 2);
  CHECK(s.readings[0].temperature_c == 19.48);
  CHECK(s.readings[0].humidity_pct == 34.24);
  CHECK(s.readings[0].illuminance_lux == 10.36);
  CHECK(s.readings[0].sensor_id == "corner");
  CHECK_FALSE(s.readings[1].illuminance_lux);

  std::istringstream header_only("timestamp,temperature_c,humidity_pct,illuminance_lux\n");
  CHECK(import_csv(header_only, "x").readings.empty());
}

TEST_CASE("CSV malformed rows report line numbers") {
  const char* bad_rows[] = {
      "2018-11-24T12:00:00Z,19.48,34.24",          // too few fields
      "2018-11-24T12:00:00Z,19.48,34.24,1,2",      // too many
      "yesterday,19.48,34.24,10",                  // timestamp
      "2018-11-24T12:00:00Z,warm,34.24,10",        // number
      "2018-11-24T12:00:00Z,,,",                   // nothing measured
      "2018-11-24T12:00:00Z,19.48,34.24,-1",       // negative lux
      "2018-11-24T12:00:00Z,nan,34.24,1",          // non-finite
  };
  for (const char* row : bad_rows) {
    std::istringstream in(std::string(kCsvHeader) + "\n" + "2018-11-24T11:00:00Z,1,2,3\n" + row +
                          "\n");
    try {
      import_csv(in, "x");
      FAIL("accepted: " << row);
    } catch (const StorageError& e) {
      CHECK(e.kind() == StorageError::Kind::kMalformedRow);
      CHECK(e.line() == 3);
    }
  }
  std::istringstream bad_header("time,t,h,l\n");
  CHECK(kind_of([&] { import_csv(bad_header, "x"); }) == StorageError::Kind::kMalformedRow);
}

TEST_CASE("CSV round-trip at declared precision") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_series(rng, rng() % 50);
    std::ostringstream out;
    export_csv(s, out);
    std::istringstream in(out.str());
    const auto back = import_csv(in, "rand");
    REQUIRE(back.readings.size() == s.readings.size());
    for (std::size_t k = 0; k < s.readings.size(); ++k) {
      const auto& a = s.readings[k];
      const auto& b = back.readings[k];
      REQUIRE(a.timestamp == b.timestamp);
      REQUIRE(a.temperature_c.has_value() == b.temperature_c.has_value());
      REQUIRE(a.humidity_pct.has_value() == b.humidity_pct.has_value());
      REQUIRE(a.illuminance_lux.has_value() == b.illuminance_lux.has_value());
      if (a.temperature_c) REQUIRE(std::abs(*a.temperature_c - *b.temperature_c) <= 0.0005 + 1e-9);
      if (a.humidity_pct) REQUIRE(std::abs(*a.humidity_pct - *b.humidity_pct) <= 0.00005 + 1e-9);
      if (a.illuminance_lux)
        REQUIRE(std::abs(*a.illuminance_lux - *b.illuminance_lux) <= 0.005 + 1e-9);
    }
    std::ostringstream again;
    export_csv(back, again);
    REQUIRE(again.str() == out.str());
  }
}

TEST_CASE("append and query") {
  ReadingStore store({fresh_dir("query"), Durability::kFlush});
  CHECK(store.sensors().empty());
  CHECK(kind_of([&] { store.query("corner", kT0, kT0 + 1h); }) ==
        StorageError::Kind::kUnknownSensor);

  store.append(reading("corner", kT0, 19.5));
  store.append(reading("corner", kT0 + 5s, 19.6));
  store.append(reading("corner", kT0 + 10s, 19.7));

  CHECK(store.query("corner", kT0, kT0 + 1h).readings.size() == 3);
  const auto one = store.query("corner", kT0 + 5s, kT0 + 6s);
  REQUIRE(one.readings.size() == 1);
  CHECK(one.readings[0].temperature_c == 19.6);
  // Half-open: the reading at t == to is excluded.
  CHECK(store.query("corner", kT0, kT0 + 10s).readings.size() == 2);
  CHECK(store.query("corner", kT0 + 1h, kT0 + 2h).readings.empty());
  CHECK(kind_of([&] { store.query("corner", kT0 + 1s, kT0); }) ==
        StorageError::Kind::kBadRange);

  CHECK(kind_of([&] { store.append(reading("corner", kT0 + 1s, 19.0)); }) ==
        StorageError::Kind::kOutOfOrder);
  CHECK(kind_of([&] { store.append(reading("corner", kT0 + 1h, std::nullopt)); }) ==
        StorageError::Kind::kInvalidReading);
  CHECK(kind_of([&] { store.append(reading("corner", kT0 + 1h, {}, {}, -2.0)); }) ==
        StorageError::Kind::kInvalidReading);
  CHECK(store.latest("corner")->temperature_c == 19.7);
  CHECK_FALSE(store.latest("window"));
}

TEST_CASE("14 days of 5 s samples are all retrievable") {
  const auto dir = fresh_dir("bulk");
  constexpr std::size_t kSamples = 14 * 86400 / 5 + 1;  // 241921
  {
    ReadingStore store({dir, Durability::kFlush});
    for (std::size_t i = 0; i < kSamples; ++i)
      store.append(reading("window", kT0 + Millis{static_cast<long>(i) * 5000}, 17.59));
    CHECK(store.size("window") == kSamples);
    CHECK(store.query("window", kT0, kT0 + 15 * 24h).readings.size() == kSamples);
  }
  ReadingStore reopened({dir, Durability::kFlush});
  CHECK(reopened.size("window") == kSamples);
  CHECK(reopened.query("window", kT0, kT0 + 24h).readings.size() == 86400 / 5);
}

TEST_CASE("store survives reopen and truncates a torn record") {
  const auto dir = fresh_dir("reopen");
  {
    ReadingStore store({dir});
    auto r = reading("tag/1", kT0, 19.5, 34.0, 12.5);
    r.sequence = 42;
    store.append(r);
    store.append(reading("tag/1", kT0 + 5s, 19.6));
  }
  const auto seg = dir / "readings" / (encode_sensor_filename("tag/1") + ".seg");
  REQUIRE(std::filesystem::exists(seg));
  {
    std::ofstream torn(seg, std::ios::binary | std::ios::app);
    torn << "partial record";
  }
  ReadingStore store({dir});
  const auto all = store.all("tag/1");
  REQUIRE(all.readings.size() == 2);
  CHECK(all.readings[0].sequence == 42u);
  CHECK(all.readings[0].illuminance_lux == 12.5);
  CHECK_FALSE(all.readings[1].humidity_pct);
  store.append(reading("tag/1", kT0 + 10s, 19.7));
  CHECK(std::filesystem::file_size(seg) == 3 * 48);
}

TEST_CASE("retention drops old readings") {
  const auto dir = fresh_dir("retention");
  {
    ReadingStore store({dir, Durability::kFlush, 1h});
    for (int i = 0; i <= 180; ++i) store.append(reading("s", kT0 + i * 1min, 20.0));
    CHECK(store.all("s").readings.front().timestamp == kT0 + 2h);
  }
  ReadingStore reopened({dir, Durability::kFlush, 1h});
  CHECK(reopened.size("s") == 61);
}

TEST_CASE("alert log persists") {
  const auto dir = fresh_dir("alerts");
  alert::AlertEvent e;
  e.instance_id = "plant-1";
  e.variable = Variable::kHumidity;
  e.value = 34.24;
  e.bound = 40;
  e.at = kT0 + 30min;
  {
    ReadingStore store({dir});
    store.append_event(e);
    auto later = e;
    later.at = kT0 + 2h;
    later.kind = alert::EventKind::kRecovered;
    store.append_event(later);
  }
  {
    std::ofstream torn(dir / "alerts.jsonl", std::ios::app);
    torn << "{\"instance_id\":";
  }
  ReadingStore store({dir});
  CHECK(store.events_since({}).size() == 2);
  CHECK(store.events_since(kT0 + 30min).size() == 1);
  CHECK(store.events_since({})[0] == e);
}

TEST_CASE("gap annotation matches brute force on small series") {
  const Millis gap_reset = 10min;
  const Millis deltas[] = {0ms, 5s, 10min - 1ms, 10min, 10min + 1ms, 20min};
  // Every series of up to 5 samples built from these spacings.
  std::vector<std::vector<int>> shapes{{}};
  for (int len = 1; len <= 4; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& s : shapes) {
      if (static_cast<int>(s.size()) != len - 1) continue;
      for (int d = 0; d < 6; ++d) {
        auto t = s;
        t.push_back(d);
        next.push_back(t);
      }
    }
    shapes.insert(shapes.end(), next.begin(), next.end());
  }
  for (const auto& shape : shapes) {
    ReadingSeries s{"g", {reading("g", kT0, 20.0)}};
    for (int d : shape) s.readings.push_back(reading("g", s.readings.back().timestamp + deltas[d], 20.0));
    const auto annotated = annotate_gaps(s, gap_reset);
    std::vector<Gap> expected;
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (deltas[shape[i]] > gap_reset)
        expected.push_back({s.readings[i].timestamp, s.readings[i + 1].timestamp});
    REQUIRE(annotated.gaps.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(annotated.gaps[i].start == expected[i].start);
      CHECK(annotated.gaps[i].end == expected[i].end);
    }
  }
}

TEST_CASE("sensor file names are reversible") {
  for (const std::string id : {"corner", "tag/1", "..", "a b%c", "CB:B8:33:4C:88:4F"}) {
    const auto name = encode_sensor_filename(id);
    CHECK(name.find('/') == std::string::npos);
    CHECK(name != "..");
    CHECK(decode_sensor_filename(name) == id);
  }
}
