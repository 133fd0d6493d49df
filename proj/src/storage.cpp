#include "verdancy/storage.h"

#include <fcntl.h>
#include <fmt/format.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>

namespace verdancy {

namespace fs = std::filesystem;

StorageError::StorageError(Kind kind, const std::string& message,
                           std::optional<std::size_t> line)
    : std::runtime_error(message), kind_(kind), line_(line) {}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fixed(double v, int decimals) {
  std::string s = fmt::format("{:.{}f}", v, decimals);
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
  throw StorageError(StorageError::Kind::kMalformedRow,
                     fmt::format("malformed row at line {}: {}", line, why), line);
}

std::optional<double> parse_field(std::string_view field, std::size_t line, const char* name) {
  if (field.empty()) return std::nullopt;
  double v = 0;
  const auto* first = field.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
    malformed(line, fmt::format("{} is not a number", name));
  return v;
}

}  // namespace

std::string format_csv_row(const SensorReading& r) {
  std::string out = format_iso8601(r.timestamp);
  out += ',';
  if (r.temperature_c) out += fixed(*r.temperature_c, 3);
  out += ',';
  if (r.humidity_pct) out += fixed(*r.humidity_pct, 4);
  out += ',';
  if (r.illuminance_lux) out += fixed(*r.illuminance_lux, 2);
  return out;
}

SensorReading parse_csv_row(std::string_view row, std::size_t line,
                            const std::string& sensor_id) {
  if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
  std::array<std::string_view, 4> fields;
  std::size_t n = 0;
  while (true) {
    const auto comma = row.find(',');
    if (n == fields.size()) malformed(line, "too many fields");
    fields[n++] = row.substr(0, comma);
    if (comma == std::string_view::npos) break;
    row.remove_prefix(comma + 1);
  }
  if (n != fields.size()) malformed(line, fmt::format("expected 4 fields, got {}", n));

  SensorReading r;
  r.sensor_id = sensor_id;
  const auto ts = parse_iso8601(fields[0]);
  if (!ts) malformed(line, "bad timestamp");
  if (to_epoch_ms(*ts) <= 0) malformed(line, "timestamp must be after the epoch");
  r.timestamp = *ts;
  r.temperature_c = parse_field(fields[1], line, "temperature_c");
  r.humidity_pct = parse_field(fields[2], line, "humidity_pct");
  r.illuminance_lux = parse_field(fields[3], line, "illuminance_lux");
  if (r.illuminance_lux && *r.illuminance_lux < 0) malformed(line, "negative illuminance");
  if (!r.has_any_variable()) malformed(line, "no measured value");
  return r;
}

void export_csv(const ReadingSeries& series, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : series.readings) out << format_csv_row(r) << '\n';
}

void export_csv(const ReadingSeries& series, const fs::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out)
    throw StorageError(StorageError::Kind::kIoFailure,
                       fmt::format("cannot open {} for writing", file.string()));
  export_csv(series, out);
  out.flush();
  if (!out)
    throw StorageError(StorageError::Kind::kIoFailure,
                       fmt::format("write to {} failed", file.string()));
}

ReadingSeries import_csv(std::istream& in, const std::string& sensor_id) {
  ReadingSeries series;
  series.sensor_id = sensor_id;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return series;
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) malformed(1, "unexpected header");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto r = parse_csv_row(line, line_no, sensor_id);
    if (!series.readings.empty() && r.timestamp < series.readings.back().timestamp)
      throw StorageError(StorageError::Kind::kNonMonotonic,
                         fmt::format("timestamp goes backwards at line {}", line_no), line_no);
    series.readings.push_back(std::move(r));
  }
  return series;
}

ReadingSeries import_csv(const fs::path& file, const std::string& sensor_id) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw StorageError(StorageError::Kind::kIoFailure,
                       fmt::format("cannot open {}", file.string()));
  return import_csv(in, sensor_id);
}

void validate_reading(const SensorReading& r) {
  auto invalid = [](const std::string& why) {
    throw StorageError(StorageError::Kind::kInvalidReading, "invalid reading: " + why);
  };
  if (r.sensor_id.empty()) invalid("empty sensor id");
  if (to_epoch_ms(r.timestamp) <= 0) invalid("timestamp must be after the epoch");
  if (!r.has_any_variable()) invalid("no measured value");
  if (r.illuminance_lux && !(*r.illuminance_lux >= 0)) invalid("negative illuminance");
  for (auto v : kAllVariables)
    if (const auto x = r.value(v); x && !std::isfinite(*x)) invalid("non-finite value");
}

GapAnnotatedSeries annotate_gaps(ReadingSeries series, Millis gap_reset) {
  GapAnnotatedSeries out;
  const auto& rs = series.readings;
  for (std::size_t i = 1; i < rs.size(); ++i)
    if (rs[i].timestamp - rs[i - 1].timestamp > gap_reset)
      out.gaps.push_back({rs[i - 1].timestamp, rs[i].timestamp});
  out.series = std::move(series);
  return out;
}

// ---------------------------------------------------------------------------
// Segment files

namespace {

constexpr std::size_t kRecordSize = 48;
constexpr std::uint32_t kRecordMagic = 0x52444E56;  // "VNDR"
constexpr std::uint8_t kHasTemp = 1, kHasHumidity = 2, kHasLux = 4, kHasSeq = 8;

using Record = std::array<unsigned char, kRecordSize>;

template <typename T>
void put(Record& rec, std::size_t at, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(rec.data() + at, bytes, sizeof(T));
}

template <typename T>
T get(const Record& rec, std::size_t at) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, rec.data() + at, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::uint32_t checksum(const Record& rec) {
  return static_cast<std::uint32_t>(crc32(0L, rec.data(), kRecordSize - 4));
}

Record encode_record(const SensorReading& r) {
  Record rec{};
  std::uint8_t flags = 0;
  if (r.temperature_c) flags |= kHasTemp;
  if (r.humidity_pct) flags |= kHasHumidity;
  if (r.illuminance_lux) flags |= kHasLux;
  if (r.sequence) flags |= kHasSeq;
  put<std::uint32_t>(rec, 0, kRecordMagic);
  put<std::uint8_t>(rec, 4, flags);
  put<std::int64_t>(rec, 8, to_epoch_ms(r.timestamp));
  put<double>(rec, 16, r.temperature_c.value_or(0.0));
  put<double>(rec, 24, r.humidity_pct.value_or(0.0));
  put<double>(rec, 32, r.illuminance_lux.value_or(0.0));
  put<std::uint32_t>(rec, 40, r.sequence.value_or(0));
  put<std::uint32_t>(rec, 44, checksum(rec));
  return rec;
}

std::optional<SensorReading> decode_record(const Record& rec, const std::string& sensor_id) {
  if (get<std::uint32_t>(rec, 0) != kRecordMagic) return std::nullopt;
  if (get<std::uint32_t>(rec, 44) != checksum(rec)) return std::nullopt;
  const auto flags = get<std::uint8_t>(rec, 4);
  SensorReading r;
  r.sensor_id = sensor_id;
  r.timestamp = from_epoch_ms(get<std::int64_t>(rec, 8));
  if (flags & kHasTemp) r.temperature_c = get<double>(rec, 16);
  if (flags & kHasHumidity) r.humidity_pct = get<double>(rec, 24);
  if (flags & kHasLux) r.illuminance_lux = get<double>(rec, 32);
  if (flags & kHasSeq) r.sequence = get<std::uint32_t>(rec, 40);
  return r;
}

[[noreturn]] void io_failure(const std::string& what, int err) {
  throw StorageError(err == ENOSPC || err == EDQUOT ? StorageError::Kind::kStorageFull
                                                     : StorageError::Kind::kIoFailure,
                     fmt::format("{}: {}", what, std::strerror(err)));
}

void write_all(int fd, const void* data, std::size_t size, const std::string& what) {
  const auto* p = static_cast<const unsigned char*>(data);
  while (size > 0) {
    const auto n = ::write(fd, p, size);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_failure(what, errno);
    }
    p += n;
    size -= static_cast<std::size_t>(n);
  }
}

int open_append(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) io_failure("open " + path.string(), errno);
  return fd;
}

bool safe_filename_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '-' || c == '_' || c == '.';
}

}  // namespace

std::string encode_sensor_filename(std::string_view sensor_id) {
  std::string out;
  for (char c : sensor_id) {
    if (safe_filename_char(c) && !(c == '.' && out.empty()))
      out += c;
    else
      out += fmt::format("%{:02X}", static_cast<unsigned char>(c));
  }
  return out;
}

std::optional<std::string> decode_sensor_filename(std::string_view name) {
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] != '%') {
      out += name[i];
      continue;
    }
    if (i + 2 >= name.size()) return std::nullopt;
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(name.data() + i + 1, name.data() + i + 3, value, 16);
    if (ec != std::errc{} || ptr != name.data() + i + 3) return std::nullopt;
    out += static_cast<char>(value);
    i += 2;
  }
  return out;
}

struct ReadingStore::Segment {
  fs::path path;
  int fd = -1;
  std::vector<SensorReading> readings;

  ~Segment() {
    if (fd >= 0) ::close(fd);
  }
};

ReadingStore::ReadingStore(StoreOptions options) : options_(std::move(options)) {
  std::error_code ec;
  fs::create_directories(options_.dir / "readings", ec);
  if (ec)
    throw StorageError(StorageError::Kind::kIoFailure,
                       fmt::format("cannot create {}: {}", options_.dir.string(), ec.message()));
  load();
  load_events();
}

ReadingStore::~ReadingStore() {
  if (events_fd_ >= 0) ::close(events_fd_);
}

void ReadingStore::load() {
  for (const auto& entry : fs::directory_iterator(options_.dir / "readings")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".seg") continue;
    const auto sensor = decode_sensor_filename(entry.path().stem().string());
    if (!sensor) continue;

    auto seg = std::make_unique<Segment>();
    seg->path = entry.path();
    std::ifstream in(seg->path, std::ios::binary);
    Record rec;
    std::uintmax_t good_bytes = 0;
    while (in.read(reinterpret_cast<char*>(rec.data()), kRecordSize)) {
      auto r = decode_record(rec, *sensor);
      if (!r) break;
      seg->readings.push_back(std::move(*r));
      good_bytes += kRecordSize;
    }
    in.close();
    bool rewrite = false;
    if (options_.retention && !seg->readings.empty()) {
      const auto cutoff = seg->readings.back().timestamp - *options_.retention;
      const auto keep = std::lower_bound(
          seg->readings.begin(), seg->readings.end(), cutoff,
          [](const SensorReading& r, Timestamp t) { return r.timestamp < t; });
      if (keep != seg->readings.begin()) {
        seg->readings.erase(seg->readings.begin(), keep);
        rewrite = true;
      }
    }
    if (rewrite) {
      auto tmp = seg->path;
      tmp += ".tmp";
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        for (const auto& r : seg->readings) {
          const auto bytes = encode_record(r);
          out.write(reinterpret_cast<const char*>(bytes.data()), kRecordSize);
        }
        if (!out)
          throw StorageError(StorageError::Kind::kIoFailure,
                             "cannot compact " + seg->path.string());
      }
      fs::rename(tmp, seg->path);
    } else if (good_bytes != fs::file_size(seg->path)) {
      fs::resize_file(seg->path, good_bytes);  // drop the torn tail
    }
    seg->fd = open_append(seg->path);
    segments_.emplace(*sensor, std::move(seg));
  }
}

void ReadingStore::load_events() {
  const auto path = options_.dir / "alerts.jsonl";
  std::uintmax_t good_bytes = 0;
  if (fs::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (in.eof()) break;  // no trailing newline: torn write
      try {
        events_.push_back(alert::event_from_json(line));
      } catch (const std::exception&) {
        break;
      }
      good_bytes += line.size() + 1;
    }
    in.close();
    if (good_bytes != fs::file_size(path)) fs::resize_file(path, good_bytes);
  }
  events_fd_ = open_append(path);
}

ReadingStore::Segment& ReadingStore::segment_for(const std::string& sensor_id) {
  auto it = segments_.find(sensor_id);
  if (it != segments_.end()) return *it->second;
  auto seg = std::make_unique<Segment>();
  seg->path = options_.dir / "readings" / (encode_sensor_filename(sensor_id) + ".seg");
  seg->fd = open_append(seg->path);
  return *segments_.emplace(sensor_id, std::move(seg)).first->second;
}

void ReadingStore::append(const SensorReading& reading) {
  validate_reading(reading);
  std::unique_lock lock(mutex_);
  auto& seg = segment_for(reading.sensor_id);
  if (!seg.readings.empty() && reading.timestamp < seg.readings.back().timestamp)
    throw StorageError(StorageError::Kind::kOutOfOrder,
                       fmt::format("reading for '{}' at {} is older than {}", reading.sensor_id,
                                   format_iso8601(reading.timestamp),
                                   format_iso8601(seg.readings.back().timestamp)));
  const auto rec = encode_record(reading);
  write_all(seg.fd, rec.data(), rec.size(), "append " + seg.path.string());
  if (options_.durability == Durability::kFsync && ::fsync(seg.fd) != 0)
    io_failure("fsync " + seg.path.string(), errno);
  seg.readings.push_back(reading);

  if (options_.retention) {
    const auto cutoff = reading.timestamp - *options_.retention;
    auto& rs = seg.readings;
    if (rs.front().timestamp < cutoff) {
      const auto keep = std::lower_bound(
          rs.begin(), rs.end(), cutoff,
          [](const SensorReading& r, Timestamp t) { return r.timestamp < t; });
      rs.erase(rs.begin(), keep);
    }
  }
}

ReadingSeries ReadingStore::query(const std::string& sensor_id, Timestamp from,
                                  Timestamp to) const {
  if (from > to)
    throw StorageError(StorageError::Kind::kBadRange, "query range has from > to");
  std::shared_lock lock(mutex_);
  const auto it = segments_.find(sensor_id);
  if (it == segments_.end())
    throw StorageError(StorageError::Kind::kUnknownSensor,
                       fmt::format("unknown sensor '{}'", sensor_id));
  const auto& rs = it->second->readings;
  auto by_time = [](const SensorReading& r, Timestamp t) { return r.timestamp < t; };
  const auto first = std::lower_bound(rs.begin(), rs.end(), from, by_time);
  const auto last = std::lower_bound(first, rs.end(), to, by_time);
  return ReadingSeries{sensor_id, std::vector<SensorReading>(first, last)};
}

ReadingSeries ReadingStore::all(const std::string& sensor_id) const {
  std::shared_lock lock(mutex_);
  const auto it = segments_.find(sensor_id);
  if (it == segments_.end())
    throw StorageError(StorageError::Kind::kUnknownSensor,
                       fmt::format("unknown sensor '{}'", sensor_id));
  return ReadingSeries{sensor_id, it->second->readings};
}

std::vector<std::string> ReadingStore::sensors() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, seg] : segments_)
    if (!seg->readings.empty()) out.push_back(id);
  return out;
}

std::optional<SensorReading> ReadingStore::latest(const std::string& sensor_id) const {
  std::shared_lock lock(mutex_);
  const auto it = segments_.find(sensor_id);
  if (it == segments_.end() || it->second->readings.empty()) return std::nullopt;
  return it->second->readings.back();
}

std::size_t ReadingStore::size(const std::string& sensor_id) const {
  std::shared_lock lock(mutex_);
  const auto it = segments_.find(sensor_id);
  return it == segments_.end() ? 0 : it->second->readings.size();
}

void ReadingStore::append_event(const alert::AlertEvent& event) {
  const auto line = alert::event_to_json(event) + "\n";
  std::unique_lock lock(mutex_);
  write_all(events_fd_, line.data(), line.size(), "append alert log");
  if (options_.durability == Durability::kFsync && ::fsync(events_fd_) != 0)
    io_failure("fsync alert log", errno);
  events_.push_back(event);
}

std::vector<alert::AlertEvent> ReadingStore::events_since(
    std::optional<Timestamp> since) const {
  std::shared_lock lock(mutex_);
  if (!since) return events_;
  std::vector<alert::AlertEvent> out;
  for (const auto& e : events_)
    if (e.at > *since) out.push_back(e);
  return out;
}

}  // namespace verdancy
