#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "verdancy/reading.h"
#include "verdancy/time.h"

namespace verdancy {

/// Ordered optional bounds. [low, high] is the optimal range; the critical
/// bounds are optional outer bands. Present values must be strictly
/// increasing in the order critical_low < low < high < critical_high.
struct ThresholdBands {
  std::optional<double> critical_low;
  std::optional<double> low;
  std::optional<double> high;
  std::optional<double> critical_high;

  bool is_ordered() const;
  bool empty() const { return !critical_low && !low && !high && !critical_high; }
  bool operator==(const ThresholdBands&) const = default;
};

struct SpeciesProfile {
  std::string species_id;
  std::string name;
  ThresholdBands temperature;
  ThresholdBands humidity;
  ThresholdBands illuminance;
  std::string description;

  const ThresholdBands& bands(Variable v) const;
  bool operator==(const SpeciesProfile&) const = default;
};

struct PlantInstance {
  std::string instance_id;
  std::string species_id;
  std::string sensor_id;
  std::string display_name;
  Timestamp added_at{};

  bool operator==(const PlantInstance&) const = default;
};

class CatalogError : public std::runtime_error {
 public:
  enum class Kind {
    kParse,
    kInvalidBands,
    kDuplicateSpecies,
    kUnknownSpecies,
    kUnknownInstance,
    kInvalidInstance,
    kIdempotencyConflict,
  };
  CatalogError(Kind kind, std::string subject, const std::string& message);

  Kind kind() const { return kind_; }
  const std::string& subject() const { return subject_; }

 private:
  Kind kind_;
  std::string subject_;
};

/// The Peace Lily fixture shipped with the service (data/species.json holds
/// the same document).
extern const char* const kDefaultSpeciesJson;

using SpeciesMap = std::map<std::string, SpeciesProfile>;

// Species file format: a JSON array of objects with keys
//   id (optional, defaults to the name lowercased with non-alphanumerics as '_'),
//   name, description,
//   temperature / humidity / illuminance: {critical_low, low, high, critical_high}
// Absent keys (or null) mean absent bounds.
SpeciesMap parse_species(const std::string& json_text);
SpeciesMap load_species(const std::filesystem::path& file);
std::string species_to_json(const SpeciesProfile& profile);
std::string plant_to_json(const PlantInstance& instance);

std::string slugify(std::string_view name);

/// Species profiles plus the user's plant instances. Instances are persisted
/// to a JSON file when a path is configured. Not internally synchronized:
/// callers serialize mutations.
class PlantCatalog {
 public:
  explicit PlantCatalog(SpeciesMap species, std::optional<std::filesystem::path> store = {});

  const SpeciesMap& species() const { return species_; }
  const SpeciesProfile* find_species(const std::string& id) const;

  std::vector<PlantInstance> instances() const;
  std::vector<PlantInstance> instances_for_sensor(const std::string& sensor_id) const;
  const PlantInstance* find_instance(const std::string& id) const;

  /// Adds a plant. When an idempotency key is supplied and was seen before
  /// with the same arguments, the original instance is returned and
  /// `created` is false. Reusing a key with different arguments throws
  /// kIdempotencyConflict.
  struct AddResult {
    PlantInstance instance;
    bool created = true;
  };
  AddResult add_instance(const std::string& species_id, const std::string& sensor_id,
                         const std::string& display_name, Timestamp added_at,
                         const std::optional<std::string>& idempotency_key = {});

  PlantInstance remove_instance(const std::string& instance_id);

 private:
  struct KeyedRequest {
    std::string species_id, sensor_id, display_name, instance_id;
  };

  void load_instances();
  void persist() const;

  SpeciesMap species_;
  std::map<std::string, PlantInstance> instances_;
  std::map<std::string, KeyedRequest> idempotency_;
  std::uint64_t next_id_ = 1;
  std::optional<std::filesystem::path> store_;
};

}  // namespace verdancy
