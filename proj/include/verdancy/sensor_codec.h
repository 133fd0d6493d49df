#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// RuuviTag manufacturer-data codec. Supports data format 5 (RAWv2, 24 bytes)
// and the legacy data format 3 (RAWv1, 14 bytes). Offsets are relative to the
// start of the payload, i.e. after the 0x0499 manufacturer id.
//
// Values are kept as scaled integers so that decoded numbers are exact
// multiples of the wire step:
//   temperature  milli-degrees Celsius (format 5 step 5, format 3 step 10)
//   humidity     1/10000 %RH           (format 5 step 25, format 3 step 5000)
namespace verdancy::codec {

inline constexpr std::size_t kFormat5Length = 24;
inline constexpr std::size_t kFormat3Length = 14;

class CodecError : public std::runtime_error {
 public:
  enum class Kind { kUnknownFormat, kTruncatedPayload, kOutOfRange, kMalformedHex };

  CodecError(Kind kind, std::string detail);

  Kind kind() const { return kind_; }
  const std::string& detail() const { return detail_; }

 private:
  Kind kind_;
  std::string detail_;
};

using MacAddress = std::array<std::uint8_t, 6>;

struct DecodedMeasurement {
  int format = 5;
  std::optional<std::int32_t> temperature_milli_c;
  std::optional<std::int32_t> humidity_pct_e4;
  std::optional<std::int32_t> pressure_pa;
  std::array<std::optional<std::int16_t>, 3> accel_mg;
  std::optional<std::int32_t> battery_mv;
  std::optional<std::int32_t> tx_power_dbm;
  std::optional<std::int32_t> movement_count;
  std::optional<std::int32_t> sequence;
  std::optional<MacAddress> mac;

  std::optional<double> temperature_c() const;
  std::optional<double> humidity_pct() const;

  void set_temperature_c(double c);
  void set_humidity_pct(double pct);

  bool operator==(const DecodedMeasurement&) const = default;
};

/// Returns the data format id (3 or 5). Throws kUnknownFormat for any other
/// id and kTruncatedPayload when the length does not match the format.
int detect_format(std::span<const std::uint8_t> payload);

DecodedMeasurement decode(std::span<const std::uint8_t> payload);

/// Inverse of decode. Absent fields become the format's invalid sentinels.
/// Throws kOutOfRange naming the first field that cannot be represented.
std::vector<std::uint8_t> encode(const DecodedMeasurement& m);

std::vector<std::uint8_t> parse_hex(std::string_view hex);
std::string to_hex(std::span<const std::uint8_t> bytes);

std::string format_mac(const MacAddress& mac);

}  // namespace verdancy::codec
