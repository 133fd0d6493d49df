#include "doctest.h"

#include <filesystem>
#include <random>

#include "verdancy/plant_catalog.h"

using namespace verdancy;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("verdancy_catalog_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

CatalogError::Kind error_kind(auto&& fn) {
  try {
    fn();
  } catch (const CatalogError& e) {
    return e.kind();
  }
  FAIL("expected CatalogError");
  return CatalogError::Kind::kParse;
}

}  // namespace

TEST_CASE("Peace Lily fixture bounds") {
  const auto species = parse_species(kDefaultSpeciesJson);
  REQUIRE(species.size() == 1);
  const auto& lily = species.at("peace_lily");
  CHECK(lily.name == "Peace Lily");
  CHECK(lily.temperature.low == 18.0);
  CHECK(lily.temperature.high == 25.0);
  CHECK(lily.humidity.low == 40.0);
  CHECK(lily.humidity.high == 90.0);
  CHECK_FALSE(lily.temperature.critical_low);
  CHECK_FALSE(lily.temperature.critical_high);
  CHECK(lily.illuminance.empty());
  CHECK(lily.description.find("low to moderate light") != std::string::npos);
}

TEST_CASE("shipped species file matches the built-in fixture") {
  const auto from_file =
      load_species(std::filesystem::path(VERDANCY_SOURCE_DIR) / "data" / "species.json");
  CHECK(from_file == parse_species(kDefaultSpeciesJson));
  // Loading twice yields equal catalogs.
  CHECK(from_file ==
        load_species(std::filesystem::path(VERDANCY_SOURCE_DIR) / "data" / "species.json"));
}

TEST_CASE("species validation") {
  CHECK(error_kind([] {
          parse_species(R"([{"name":"Bad","temperature":{"low":25,"high":18}}])");
        }) == CatalogError::Kind::kInvalidBands);
  CHECK(error_kind([] {
          parse_species(
              R"([{"name":"Bad","humidity":{"critical_low":40,"low":40,"high":90}}])");
        }) == CatalogError::Kind::kInvalidBands);
  CHECK(error_kind([] {
          parse_species(R"([{"name":"Fern"},{"id":"fern","name":"Other fern"}])");
        }) == CatalogError::Kind::kDuplicateSpecies);
  CHECK(error_kind([] { parse_species(R"({"name":"x"})"); }) == CatalogError::Kind::kParse);
  CHECK(error_kind([] { parse_species("[{]"); }) == CatalogError::Kind::kParse);
  CHECK(error_kind([] { parse_species(R"([{"description":"no name"}])"); }) ==
        CatalogError::Kind::kParse);

  const auto ok = parse_species(
      R"([{"name":"Snake Plant","temperature":{"critical_low":10,"low":15,"high":29,"critical_high":35},
           "illuminance":{"low":null,"high":2000}}])");
  const auto& snake = ok.at("snake_plant");
  CHECK(snake.temperature.critical_low == 10.0);
  CHECK(snake.temperature.critical_high == 35.0);
  CHECK_FALSE(snake.illuminance.low);
  CHECK(snake.illuminance.high == 2000.0);
  CHECK(parse_species(species_to_json(snake).insert(0, "[").append("]")).at("snake_plant") ==
        snake);
}

TEST_CASE("band ordering") {
  CHECK(ThresholdBands{}.is_ordered());
  CHECK(ThresholdBands{5.0, std::nullopt, std::nullopt, 6.0}.is_ordered());
  CHECK_FALSE(ThresholdBands{std::nullopt, 10.0, std::nullopt, 10.0}.is_ordered());
  CHECK_FALSE(ThresholdBands{std::nullopt, 10.0, 9.0, std::nullopt}.is_ordered());
}

TEST_CASE("add and remove plant instances") {
  PlantCatalog catalog(parse_species(kDefaultSpeciesJson));
  const auto t = from_epoch_ms(1543017600000);

  const auto a = catalog.add_instance("peace_lily", "window-tag", "Lily A", t).instance;
  const auto b = catalog.add_instance("peace_lily", "corner-tag", "Lily B", t).instance;
  CHECK(a.instance_id != b.instance_id);
  CHECK(catalog.instances().size() == 2);
  CHECK(catalog.instances_for_sensor("window-tag").size() == 1);
  CHECK(catalog.instances_for_sensor("window-tag")[0].display_name == "Lily A");

  CHECK(error_kind([&] { catalog.add_instance("orchid", "x", "", t); }) ==
        CatalogError::Kind::kUnknownSpecies);
  CHECK(error_kind([&] { catalog.add_instance("peace_lily", "", "", t); }) ==
        CatalogError::Kind::kInvalidInstance);

  catalog.remove_instance(a.instance_id);
  CHECK(catalog.instances().size() == 1);
  CHECK(catalog.find_instance(a.instance_id) == nullptr);
  CHECK(error_kind([&] { catalog.remove_instance(a.instance_id); }) ==
        CatalogError::Kind::kUnknownInstance);

  PlantCatalog empty(SpeciesMap{});
  CHECK(error_kind([&] { empty.add_instance("orchid", "tag", "", t); }) ==
        CatalogError::Kind::kUnknownSpecies);
}

TEST_CASE("idempotency keys") {
  PlantCatalog catalog(parse_species(kDefaultSpeciesJson));
  const auto t = from_epoch_ms(1543017600000);
  const auto first = catalog.add_instance("peace_lily", "tag", "Lily", t, "key-1");
  const auto again = catalog.add_instance("peace_lily", "tag", "Lily", t, "key-1");
  CHECK(first.created);
  CHECK_FALSE(again.created);
  CHECK(first.instance == again.instance);
  CHECK(catalog.instances().size() == 1);
  CHECK(error_kind([&] { catalog.add_instance("peace_lily", "other", "Lily", t, "key-1"); }) ==
        CatalogError::Kind::kIdempotencyConflict);
}

TEST_CASE("instances persist across reopen") {
  const auto dir = temp_dir("persist");
  const auto store = dir / "plants.json";
  const auto t = from_epoch_ms(1543017600000);
  std::string kept_id;
  {
    PlantCatalog catalog(parse_species(kDefaultSpeciesJson), store);
    kept_id = catalog.add_instance("peace_lily", "window", "Lily A", t, "k").instance.instance_id;
    const auto gone = catalog.add_instance("peace_lily", "corner", "Lily B", t).instance;
    catalog.remove_instance(gone.instance_id);
  }
  PlantCatalog reopened(parse_species(kDefaultSpeciesJson), store);
  REQUIRE(reopened.instances().size() == 1);
  CHECK(reopened.instances()[0].instance_id == kept_id);
  CHECK(reopened.instances()[0].added_at == t);
  // Ids are never reused, and idempotency survives the restart.
  const auto next = reopened.add_instance("peace_lily", "corner", "Lily C", t).instance;
  CHECK(next.instance_id == "plant-3");
  CHECK_FALSE(reopened.add_instance("peace_lily", "window", "Lily A", t, "k").created);
}

TEST_CASE("referential integrity under random add/remove sequences") {
  const auto species = parse_species(
      R"([{"name":"Peace Lily"},{"name":"Fern"},{"name":"Cactus"}])");
  std::vector<std::string> ids{"peace_lily", "fern", "cactus", "orchid"};
  std::mt19937 rng(3);
  for (int round = 0; round < 50; ++round) {
    PlantCatalog catalog(species);
    std::vector<std::string> live;
    for (int op = 0; op < 100; ++op) {
      if (live.empty() || rng() % 3 != 0) {
        const auto& sp = ids[rng() % ids.size()];
        try {
          live.push_back(
              catalog.add_instance(sp, "s" + std::to_string(rng() % 4), "", Timestamp{})
                  .instance.instance_id);
          CHECK(sp != "orchid");
        } catch (const CatalogError& e) {
          CHECK(e.kind() == CatalogError::Kind::kUnknownSpecies);
        }
      } else {
        const auto idx = rng() % live.size();
        catalog.remove_instance(live[idx]);
        live.erase(live.begin() + static_cast<long>(idx));
      }
      const auto all = catalog.instances();
      REQUIRE(all.size() == live.size());
      for (const auto& inst : all) REQUIRE(catalog.find_species(inst.species_id) != nullptr);
    }
  }
}
