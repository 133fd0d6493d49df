#include "verdancy/plant_catalog.h"

#include <fmt/format.h>

#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace verdancy {

using nlohmann::json;

const char* const kDefaultSpeciesJson = R"([
  {
    "id": "peace_lily",
    "name": "Peace Lily",
    "description": "Spathiphyllum. Tropical plant that likes high humidity. Needs low to moderate light.",
    "temperature": { "low": 18, "high": 25 },
    "humidity": { "low": 40, "high": 90 },
    "illuminance": {}
  }
]
)";

namespace {

constexpr const char* kBandKeys[] = {"critical_low", "low", "high", "critical_high"};

std::optional<double> optional_number(const json& obj, const char* key,
                                      const std::string& species) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number())
    throw CatalogError(CatalogError::Kind::kParse, species,
                       fmt::format("species '{}': '{}' must be a number", species, key));
  return it->get<double>();
}

ThresholdBands parse_bands(const json& obj, const std::string& species, Variable v) {
  ThresholdBands bands;
  if (obj.is_null()) return bands;
  if (!obj.is_object())
    throw CatalogError(CatalogError::Kind::kParse, species,
                       fmt::format("species '{}': '{}' must be an object", species,
                                   to_string(v)));
  bands.critical_low = optional_number(obj, "critical_low", species);
  bands.low = optional_number(obj, "low", species);
  bands.high = optional_number(obj, "high", species);
  bands.critical_high = optional_number(obj, "critical_high", species);
  if (!bands.is_ordered())
    throw CatalogError(CatalogError::Kind::kInvalidBands, species,
                       fmt::format("species '{}': {} bounds are not strictly ordered",
                                   species, to_string(v)));
  return bands;
}

json bands_to_json(const ThresholdBands& b) {
  json out = json::object();
  const std::optional<double> values[] = {b.critical_low, b.low, b.high, b.critical_high};
  for (std::size_t i = 0; i < 4; ++i)
    if (values[i]) out[kBandKeys[i]] = *values[i];
  return out;
}

json instance_to_json(const PlantInstance& p) {
  return json{{"instance_id", p.instance_id},
              {"species_id", p.species_id},
              {"sensor_id", p.sensor_id},
              {"display_name", p.display_name},
              {"added_at", format_iso8601(p.added_at)}};
}

}  // namespace

bool ThresholdBands::is_ordered() const {
  const std::optional<double> values[] = {critical_low, low, high, critical_high};
  std::optional<double> previous;
  for (const auto& v : values) {
    if (!v) continue;
    if (previous && !(*previous < *v)) return false;
    previous = v;
  }
  return true;
}

const ThresholdBands& SpeciesProfile::bands(Variable v) const {
  switch (v) {
    case Variable::kTemperature: return temperature;
    case Variable::kHumidity: return humidity;
    case Variable::kIlluminance: return illuminance;
  }
  return temperature;
}

CatalogError::CatalogError(Kind kind, std::string subject, const std::string& message)
    : std::runtime_error(message), kind_(kind), subject_(std::move(subject)) {}

std::string slugify(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    out += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '_';
  }
  return out;
}

SpeciesMap parse_species(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CatalogError(CatalogError::Kind::kParse, "", e.what());
  }
  if (!doc.is_array())
    throw CatalogError(CatalogError::Kind::kParse, "", "species file must be a JSON array");

  SpeciesMap out;
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string())
      throw CatalogError(CatalogError::Kind::kParse, "",
                         "every species needs a string 'name'");
    SpeciesProfile p;
    p.name = entry["name"].get<std::string>();
    p.species_id = entry.contains("id") ? entry["id"].get<std::string>() : slugify(p.name);
    if (p.species_id.empty())
      throw CatalogError(CatalogError::Kind::kParse, p.name, "species id is empty");
    p.description = entry.value("description", "");
    p.temperature = parse_bands(entry.value("temperature", json()), p.species_id,
                                Variable::kTemperature);
    p.humidity =
        parse_bands(entry.value("humidity", json()), p.species_id, Variable::kHumidity);
    p.illuminance = parse_bands(entry.value("illuminance", json()), p.species_id,
                                Variable::kIlluminance);
    const auto id = p.species_id;
    if (!out.emplace(id, std::move(p)).second)
      throw CatalogError(CatalogError::Kind::kDuplicateSpecies, id,
                         fmt::format("duplicate species id '{}'", id));
  }
  return out;
}

SpeciesMap load_species(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in)
    throw CatalogError(CatalogError::Kind::kParse, "",
                       fmt::format("cannot read species file {}", file.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_species(buffer.str());
}

std::string species_to_json(const SpeciesProfile& p) {
  return json{{"id", p.species_id},
              {"name", p.name},
              {"description", p.description},
              {"temperature", bands_to_json(p.temperature)},
              {"humidity", bands_to_json(p.humidity)},
              {"illuminance", bands_to_json(p.illuminance)}}
      .dump();
}

std::string plant_to_json(const PlantInstance& instance) { return instance_to_json(instance).dump(); }

PlantCatalog::PlantCatalog(SpeciesMap species, std::optional<std::filesystem::path> store)
    : species_(std::move(species)), store_(std::move(store)) {
  if (store_) load_instances();
}

const SpeciesProfile* PlantCatalog::find_species(const std::string& id) const {
  const auto it = species_.find(id);
  return it == species_.end() ? nullptr : &it->second;
}

std::vector<PlantInstance> PlantCatalog::instances() const {
  std::vector<PlantInstance> out;
  out.reserve(instances_.size());
  for (const auto& [id, inst] : instances_) out.push_back(inst);
  return out;
}

std::vector<PlantInstance> PlantCatalog::instances_for_sensor(
    const std::string& sensor_id) const {
  std::vector<PlantInstance> out;
  for (const auto& [id, inst] : instances_)
    if (inst.sensor_id == sensor_id) out.push_back(inst);
  return out;
}

const PlantInstance* PlantCatalog::find_instance(const std::string& id) const {
  const auto it = instances_.find(id);
  return it == instances_.end() ? nullptr : &it->second;
}

PlantCatalog::AddResult PlantCatalog::add_instance(
    const std::string& species_id, const std::string& sensor_id,
    const std::string& display_name, Timestamp added_at,
    const std::optional<std::string>& idempotency_key) {
  if (idempotency_key) {
    const auto it = idempotency_.find(*idempotency_key);
    if (it != idempotency_.end()) {
      const auto& req = it->second;
      if (req.species_id != species_id || req.sensor_id != sensor_id ||
          req.display_name != display_name)
        throw CatalogError(CatalogError::Kind::kIdempotencyConflict, *idempotency_key,
                           "idempotency key reused with a different request");
      if (const auto* existing = find_instance(req.instance_id))
        return {*existing, false};
      throw CatalogError(CatalogError::Kind::kIdempotencyConflict, *idempotency_key,
                         "idempotency key refers to a removed plant");
    }
  }
  if (!find_species(species_id))
    throw CatalogError(CatalogError::Kind::kUnknownSpecies, species_id,
                       fmt::format("unknown species '{}'", species_id));
  if (sensor_id.empty())
    throw CatalogError(CatalogError::Kind::kInvalidInstance, "", "sensor id is empty");

  PlantInstance inst;
  inst.instance_id = fmt::format("plant-{}", next_id_++);
  inst.species_id = species_id;
  inst.sensor_id = sensor_id;
  inst.display_name = display_name.empty() ? find_species(species_id)->name : display_name;
  inst.added_at = added_at;
  instances_.emplace(inst.instance_id, inst);
  if (idempotency_key)
    idempotency_.emplace(*idempotency_key,
                         KeyedRequest{species_id, sensor_id, display_name, inst.instance_id});
  persist();
  return {inst, true};
}

PlantInstance PlantCatalog::remove_instance(const std::string& instance_id) {
  const auto it = instances_.find(instance_id);
  if (it == instances_.end())
    throw CatalogError(CatalogError::Kind::kUnknownInstance, instance_id,
                       fmt::format("unknown plant '{}'", instance_id));
  PlantInstance removed = std::move(it->second);
  instances_.erase(it);
  persist();
  return removed;
}

void PlantCatalog::load_instances() {
  std::ifstream in(*store_);
  if (!in) return;
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CatalogError(CatalogError::Kind::kParse, store_->string(), e.what());
  }
  next_id_ = doc.value("next_id", std::uint64_t{1});
  const json stored = doc.value("instances", json::array());
  for (const auto& j : stored) {
    PlantInstance p;
    p.instance_id = j.at("instance_id").get<std::string>();
    p.species_id = j.at("species_id").get<std::string>();
    p.sensor_id = j.at("sensor_id").get<std::string>();
    p.display_name = j.value("display_name", "");
    const auto added = parse_iso8601(j.value("added_at", ""));
    p.added_at = added.value_or(Timestamp{});
    if (!find_species(p.species_id))
      throw CatalogError(CatalogError::Kind::kUnknownSpecies, p.species_id,
                         fmt::format("stored plant '{}' references unknown species '{}'",
                                     p.instance_id, p.species_id));
    instances_.emplace(p.instance_id, std::move(p));
  }
  const json keys = doc.value("idempotency", json::object());
  for (const auto& [key, j] : keys.items()) {
    idempotency_.emplace(key, KeyedRequest{j.at("species_id"), j.at("sensor_id"),
                                           j.at("display_name"), j.at("instance_id")});
  }
}

void PlantCatalog::persist() const {
  if (!store_) return;
  json doc;
  doc["next_id"] = next_id_;
  doc["instances"] = json::array();
  for (const auto& [id, inst] : instances_) doc["instances"].push_back(instance_to_json(inst));
  doc["idempotency"] = json::object();
  for (const auto& [key, req] : idempotency_)
    doc["idempotency"][key] = json{{"species_id", req.species_id},
                                   {"sensor_id", req.sensor_id},
                                   {"display_name", req.display_name},
                                   {"instance_id", req.instance_id}};

  auto tmp = *store_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << doc.dump(2) << '\n';
    if (!out)
      throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
  }
  std::filesystem::rename(tmp, *store_);
}

}  // namespace verdancy
