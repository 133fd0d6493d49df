#include "verdancy/sensor_codec.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace verdancy::codec {

namespace {

constexpr std::uint16_t kInvalidS16 = 0x8000;
constexpr std::uint16_t kInvalidU16 = 0xFFFF;
constexpr std::uint16_t kInvalidBattery = 0x7FF;
constexpr std::uint8_t kInvalidTxPower = 0x1F;
constexpr std::uint8_t kInvalidMovement = 0xFF;
constexpr std::int32_t kPressureOffsetPa = 50000;
constexpr std::int32_t kBatteryOffsetMv = 1600;

std::string describe(CodecError::Kind kind, const std::string& detail) {
  switch (kind) {
    case CodecError::Kind::kUnknownFormat: return "unknown data format " + detail;
    case CodecError::Kind::kTruncatedPayload: return "truncated payload: " + detail;
    case CodecError::Kind::kOutOfRange: return "value out of range: " + detail;
    case CodecError::Kind::kMalformedHex: return "malformed hex: " + detail;
  }
  return detail;
}

std::uint16_t read_u16(std::span<const std::uint8_t> p, std::size_t at) {
  return static_cast<std::uint16_t>((p[at] << 8) | p[at + 1]);
}

void write_u16(std::vector<std::uint8_t>& out, std::size_t at, std::uint16_t v) {
  out[at] = static_cast<std::uint8_t>(v >> 8);
  out[at + 1] = static_cast<std::uint8_t>(v & 0xFF);
}

[[noreturn]] void out_of_range(const char* field) {
  throw CodecError(CodecError::Kind::kOutOfRange, field);
}

DecodedMeasurement decode_v5(std::span<const std::uint8_t> p) {
  DecodedMeasurement m;
  m.format = 5;

  if (const auto raw = read_u16(p, 1); raw != kInvalidS16)
    m.temperature_milli_c = static_cast<std::int16_t>(raw) * 5;
  if (const auto raw = read_u16(p, 3); raw != kInvalidU16) m.humidity_pct_e4 = raw * 25;
  if (const auto raw = read_u16(p, 5); raw != kInvalidU16)
    m.pressure_pa = raw + kPressureOffsetPa;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    if (const auto raw = read_u16(p, 7 + 2 * axis); raw != kInvalidS16)
      m.accel_mg[axis] = static_cast<std::int16_t>(raw);
  }

  const auto power = read_u16(p, 13);
  if (const auto battery = power >> 5; battery != kInvalidBattery)
    m.battery_mv = static_cast<std::int32_t>(battery) + kBatteryOffsetMv;
  if (const auto tx = power & 0x1F; tx != kInvalidTxPower)
    m.tx_power_dbm = -40 + 2 * static_cast<std::int32_t>(tx);

  if (p[15] != kInvalidMovement) m.movement_count = p[15];
  if (const auto raw = read_u16(p, 16); raw != kInvalidU16) m.sequence = raw;

  MacAddress mac{};
  std::copy(p.begin() + 18, p.begin() + 24, mac.begin());
  if (std::any_of(mac.begin(), mac.end(), [](std::uint8_t b) { return b != 0xFF; }))
    m.mac = mac;
  return m;
}

DecodedMeasurement decode_v3(std::span<const std::uint8_t> p) {
  DecodedMeasurement m;
  m.format = 3;
  m.humidity_pct_e4 = p[1] * 5000;
  const std::int32_t magnitude = (p[2] & 0x7F) * 1000 + p[3] * 10;
  m.temperature_milli_c = (p[2] & 0x80) ? -magnitude : magnitude;
  m.pressure_pa = read_u16(p, 4) + kPressureOffsetPa;
  for (std::size_t axis = 0; axis < 3; ++axis)
    m.accel_mg[axis] = static_cast<std::int16_t>(read_u16(p, 6 + 2 * axis));
  m.battery_mv = read_u16(p, 12);
  return m;
}

std::vector<std::uint8_t> encode_v5(const DecodedMeasurement& m) {
  std::vector<std::uint8_t> out(kFormat5Length, 0);
  out[0] = 5;

  std::uint16_t temp = kInvalidS16;
  if (m.temperature_milli_c) {
    const auto v = *m.temperature_milli_c;
    if (v % 5 != 0 || v / 5 < -32767 || v / 5 > 32767) out_of_range("temperature");
    temp = static_cast<std::uint16_t>(static_cast<std::int16_t>(v / 5));
  }
  write_u16(out, 1, temp);

  std::uint16_t hum = kInvalidU16;
  if (m.humidity_pct_e4) {
    const auto v = *m.humidity_pct_e4;
    if (v % 25 != 0 || v < 0 || v / 25 > 65534) out_of_range("humidity");
    hum = static_cast<std::uint16_t>(v / 25);
  }
  write_u16(out, 3, hum);

  std::uint16_t pressure = kInvalidU16;
  if (m.pressure_pa) {
    const auto v = *m.pressure_pa - kPressureOffsetPa;
    if (v < 0 || v > 65534) out_of_range("pressure");
    pressure = static_cast<std::uint16_t>(v);
  }
  write_u16(out, 5, pressure);

  for (std::size_t axis = 0; axis < 3; ++axis) {
    std::uint16_t raw = kInvalidS16;
    if (m.accel_mg[axis]) {
      if (*m.accel_mg[axis] == INT16_MIN) out_of_range("acceleration");
      raw = static_cast<std::uint16_t>(*m.accel_mg[axis]);
    }
    write_u16(out, 7 + 2 * axis, raw);
  }

  std::uint16_t battery = kInvalidBattery;
  if (m.battery_mv) {
    const auto v = *m.battery_mv - kBatteryOffsetMv;
    if (v < 0 || v >= kInvalidBattery) out_of_range("battery");
    battery = static_cast<std::uint16_t>(v);
  }
  std::uint16_t tx = kInvalidTxPower;
  if (m.tx_power_dbm) {
    const auto v = *m.tx_power_dbm + 40;
    if (v < 0 || v % 2 != 0 || v / 2 >= kInvalidTxPower) out_of_range("tx_power");
    tx = static_cast<std::uint16_t>(v / 2);
  }
  write_u16(out, 13, static_cast<std::uint16_t>((battery << 5) | tx));

  out[15] = kInvalidMovement;
  if (m.movement_count) {
    if (*m.movement_count < 0 || *m.movement_count >= kInvalidMovement)
      out_of_range("movement_count");
    out[15] = static_cast<std::uint8_t>(*m.movement_count);
  }

  std::uint16_t seq = kInvalidU16;
  if (m.sequence) {
    if (*m.sequence < 0 || *m.sequence >= kInvalidU16) out_of_range("sequence");
    seq = static_cast<std::uint16_t>(*m.sequence);
  }
  write_u16(out, 16, seq);

  if (m.mac) {
    if (std::all_of(m.mac->begin(), m.mac->end(), [](std::uint8_t b) { return b == 0xFF; }))
      out_of_range("mac");
    std::copy(m.mac->begin(), m.mac->end(), out.begin() + 18);
  } else {
    std::fill(out.begin() + 18, out.end(), 0xFF);
  }
  return out;
}

std::vector<std::uint8_t> encode_v3(const DecodedMeasurement& m) {
  if (m.tx_power_dbm) out_of_range("tx_power");
  if (m.movement_count) out_of_range("movement_count");
  if (m.sequence) out_of_range("sequence");
  if (m.mac) out_of_range("mac");

  std::vector<std::uint8_t> out(kFormat3Length, 0);
  out[0] = 3;

  if (!m.humidity_pct_e4) out_of_range("humidity");
  const auto hum = *m.humidity_pct_e4;
  if (hum < 0 || hum % 5000 != 0 || hum / 5000 > 255) out_of_range("humidity");
  out[1] = static_cast<std::uint8_t>(hum / 5000);

  if (!m.temperature_milli_c) out_of_range("temperature");
  const auto temp = *m.temperature_milli_c;
  const auto magnitude = temp < 0 ? -temp : temp;
  if (magnitude % 10 != 0 || magnitude / 1000 > 127) out_of_range("temperature");
  out[2] = static_cast<std::uint8_t>((magnitude / 1000) | (temp < 0 ? 0x80 : 0));
  out[3] = static_cast<std::uint8_t>((magnitude % 1000) / 10);

  if (!m.pressure_pa) out_of_range("pressure");
  const auto pressure = *m.pressure_pa - kPressureOffsetPa;
  if (pressure < 0 || pressure > 0xFFFF) out_of_range("pressure");
  write_u16(out, 4, static_cast<std::uint16_t>(pressure));

  for (std::size_t axis = 0; axis < 3; ++axis) {
    if (!m.accel_mg[axis]) out_of_range("acceleration");
    write_u16(out, 6 + 2 * axis, static_cast<std::uint16_t>(*m.accel_mg[axis]));
  }

  if (!m.battery_mv) out_of_range("battery");
  if (*m.battery_mv < 0 || *m.battery_mv > 0xFFFF) out_of_range("battery");
  write_u16(out, 12, static_cast<std::uint16_t>(*m.battery_mv));
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

CodecError::CodecError(Kind kind, std::string detail)
    : std::runtime_error(describe(kind, detail)), kind_(kind), detail_(std::move(detail)) {}

std::optional<double> DecodedMeasurement::temperature_c() const {
  if (!temperature_milli_c) return std::nullopt;
  return *temperature_milli_c / 1000.0;
}

std::optional<double> DecodedMeasurement::humidity_pct() const {
  if (!humidity_pct_e4) return std::nullopt;
  return *humidity_pct_e4 / 10000.0;
}

void DecodedMeasurement::set_temperature_c(double c) {
  if (!std::isfinite(c) || std::fabs(c) > 1e6) out_of_range("temperature");
  temperature_milli_c = static_cast<std::int32_t>(std::llround(c * 1000.0));
}

void DecodedMeasurement::set_humidity_pct(double pct) {
  if (!std::isfinite(pct) || std::fabs(pct) > 1e5) out_of_range("humidity");
  humidity_pct_e4 = static_cast<std::int32_t>(std::llround(pct * 10000.0));
}

int detect_format(std::span<const std::uint8_t> payload) {
  if (payload.empty())
    throw CodecError(CodecError::Kind::kTruncatedPayload, "empty payload");
  const int id = payload[0];
  std::size_t expected = 0;
  if (id == 5)
    expected = kFormat5Length;
  else if (id == 3)
    expected = kFormat3Length;
  else
    throw CodecError(CodecError::Kind::kUnknownFormat, std::to_string(id));
  if (payload.size() != expected)
    throw CodecError(CodecError::Kind::kTruncatedPayload,
                     fmt::format("format {} expects {} bytes, got {}", id, expected,
                                 payload.size()));
  return id;
}

DecodedMeasurement decode(std::span<const std::uint8_t> payload) {
  return detect_format(payload) == 5 ? decode_v5(payload) : decode_v3(payload);
}

std::vector<std::uint8_t> encode(const DecodedMeasurement& m) {
  if (m.format == 5) return encode_v5(m);
  if (m.format == 3) return encode_v3(m);
  throw CodecError(CodecError::Kind::kUnknownFormat, std::to_string(m.format));
}

std::vector<std::uint8_t> parse_hex(std::string_view hex) {
  if (hex.size() % 2 != 0)
    throw CodecError(CodecError::Kind::kMalformedHex, "odd number of digits");
  std::vector<std::uint8_t> out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = hex_value(hex[i]);
    const int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0)
      throw CodecError(CodecError::Kind::kMalformedHex,
                       fmt::format("invalid digit at offset {}", hi < 0 ? i : i + 1));
    out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
  }
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0x0F];
  }
  return out;
}

std::string format_mac(const MacAddress& mac) {
  return fmt::format("{:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}", mac[0], mac[1], mac[2],
                     mac[3], mac[4], mac[5]);
}

}  // namespace verdancy::codec
