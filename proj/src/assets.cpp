#include "tg/assets.hpp"

#include <array>
#include <utility>

namespace tg {

namespace {

constexpr std::array<std::pair<std::string_view, bool ObjectFlags::*>, 8> kFlags = {{
    {"container", &ObjectFlags::is_container},
    {"openable", &ObjectFlags::is_openable},
    {"toggleable", &ObjectFlags::is_toggleable},
    {"heat_source", &ObjectFlags::is_heat_source},
    {"cook_tool", &ObjectFlags::is_cook_tool},
    {"cold_source", &ObjectFlags::is_cold_source},
    {"surface", &ObjectFlags::is_surface},
    {"grippable", &ObjectFlags::is_grippable},
}};

ObjectFlags flags_of(std::initializer_list<std::string_view> names) {
  ObjectFlags f;
  for (auto n : names)
    for (const auto& [key, field] : kFlags)
      if (key == n) f.*field = true;
  return f;
}

AssetSpec fixture(std::string cat, Extents e, std::initializer_list<std::string_view> flags,
                  std::vector<std::string> rooms, std::vector<std::string> faces = {}) {
  return {std::move(cat), e, flags_of(flags), std::move(rooms), {}, std::move(faces), true};
}

AssetSpec item(std::string cat, Extents e, std::initializer_list<std::string_view> flags,
               std::vector<std::string> rooms, std::vector<std::string> supports = {}) {
  return {std::move(cat), e, flags_of(flags), std::move(rooms), std::move(supports), {}, false};
}

}  // namespace

const AssetSpec* AssetCatalog::find(std::string_view category) const {
  for (const auto& a : assets_)
    if (a.category == category) return &a;
  return nullptr;
}

std::vector<std::string> flag_names(const ObjectFlags& f) {
  std::vector<std::string> out;
  for (const auto& [key, field] : kFlags)
    if (f.*field) out.emplace_back(key);
  return out;
}

bool flag_by_name(const ObjectFlags& f, std::string_view name, bool* known) {
  for (const auto& [key, field] : kFlags)
    if (key == name) {
      if (known) *known = true;
      return f.*field;
    }
  if (known) *known = false;
  return false;
}

bool is_flag_name(std::string_view name) {
  bool known = false;
  flag_by_name({}, name, &known);
  return known;
}

const AssetCatalog& builtin_catalog() {
  static const AssetCatalog catalog([] {
    std::vector<AssetSpec> v;
    const std::vector<std::string> kitchen{"kitchen"};
    const std::vector<std::string> living{"living"};
    const std::vector<std::string> bedroom{"bedroom"};
    // Floor fixtures.
    v.push_back(fixture("counter", {0.3, 0.9, 0.45}, {"surface"}, kitchen));
    v.push_back(fixture("table", {0.5, 0.3, 0.375}, {"surface"}, {"kitchen", "living", "dining"}));
    v.push_back(fixture("dining_table", {0.7, 0.45, 0.375}, {"surface"}, {"dining", "kitchen"}));
    v.push_back(fixture("coffee_table", {0.45, 0.3, 0.22}, {"surface"}, living));
    v.push_back(fixture("desk", {0.6, 0.35, 0.375}, {"surface"}, {"office", "bedroom"}));
    v.push_back(fixture("shelf", {0.4, 0.2, 0.5}, {"surface"}, {"living", "office", "bedroom"}));
    v.push_back(fixture("side_table", {0.25, 0.25, 0.3}, {"surface"}, {"living", "dining"}));
    v.push_back(fixture("nightstand", {0.22, 0.22, 0.3}, {"surface"}, bedroom));
    v.push_back(fixture("bed", {0.8, 1.0, 0.3}, {"surface"}, bedroom));
    v.push_back(fixture("sofa", {0.9, 0.4, 0.4}, {"surface"}, living, {"tv", "coffee_table"}));
    v.push_back(fixture("armchair", {0.4, 0.4, 0.45}, {"surface"}, living, {"tv", "coffee_table"}));
    v.push_back(fixture("chair", {0.25, 0.25, 0.45}, {}, {"kitchen", "dining", "office"},
                        {"desk", "dining_table", "table"}));
    v.push_back(fixture("fridge", {0.4, 0.35, 0.9}, {"container", "openable", "cold_source"}, kitchen));
    v.push_back(fixture("oven", {0.35, 0.3, 0.45}, {"container", "openable", "toggleable", "heat_source"},
                        kitchen));
    v.push_back(fixture("stove", {0.35, 0.3, 0.45}, {"surface", "toggleable", "heat_source"}, kitchen));
    v.push_back(fixture("cabinet", {0.4, 0.25, 0.45}, {"container", "openable", "surface"},
                        {"kitchen", "living", "bedroom"}));
    v.push_back(fixture("dishwasher", {0.3, 0.3, 0.42}, {"container", "openable", "toggleable"}, kitchen));
    v.push_back(fixture("floor_lamp", {0.15, 0.15, 0.8}, {"toggleable"}, {"living", "bedroom", "office"}));
    v.push_back(fixture("tv_stand", {0.6, 0.2, 0.25}, {"surface"}, living));
    v.push_back(fixture("trash_can", {0.15, 0.15, 0.3}, {"container"}, {"kitchen", "office"}));
    v.push_back(fixture("plant", {0.2, 0.2, 0.5}, {}, {"living", "office"}));
    // Countertop appliances and electronics: not grippable, prefer a support.
    v.push_back(item("microwave", {0.25, 0.2, 0.15}, {"container", "openable", "toggleable", "heat_source"},
                     kitchen, {"counter"}));
    v.push_back(item("toaster", {0.12, 0.1, 0.1}, {"container", "toggleable", "heat_source"}, kitchen,
                     {"counter"}));
    v.push_back(item("tv", {0.45, 0.08, 0.3}, {"toggleable"}, living, {"tv_stand"}));
    v.push_back(item("desk_lamp", {0.08, 0.08, 0.2}, {"toggleable"}, {"office", "bedroom"}, {"desk", "nightstand"}));
    // Grippable items.
    v.push_back(item("apple", {0.04, 0.04, 0.04}, {"grippable"}, kitchen));
    v.push_back(item("banana", {0.09, 0.04, 0.03}, {"grippable"}, kitchen));
    v.push_back(item("orange", {0.04, 0.04, 0.04}, {"grippable"}, kitchen));
    v.push_back(item("chicken", {0.08, 0.06, 0.04}, {"grippable"}, kitchen));
    v.push_back(item("steak", {0.08, 0.06, 0.02}, {"grippable"}, kitchen));
    v.push_back(item("fish", {0.1, 0.04, 0.03}, {"grippable"}, kitchen));
    v.push_back(item("egg", {0.03, 0.03, 0.03}, {"grippable"}, kitchen));
    v.push_back(item("bread", {0.1, 0.06, 0.05}, {"grippable"}, kitchen));
    v.push_back(item("milk", {0.04, 0.04, 0.1}, {"grippable"}, kitchen));
    v.push_back(item("ice_cream", {0.05, 0.05, 0.05}, {"grippable"}, kitchen));
    v.push_back(item("mug", {0.05, 0.05, 0.05}, {"grippable"}, {"kitchen", "office"}));
    v.push_back(item("cup", {0.04, 0.04, 0.06}, {"grippable"}, kitchen));
    v.push_back(item("plate", {0.12, 0.12, 0.02}, {"grippable", "surface"}, kitchen));
    v.push_back(item("bowl", {0.09, 0.09, 0.05}, {"grippable", "container"}, kitchen));
    v.push_back(item("frying_pan", {0.14, 0.14, 0.04}, {"grippable", "cook_tool"}, kitchen));
    v.push_back(item("pot", {0.13, 0.13, 0.09}, {"grippable", "container", "cook_tool"}, kitchen));
    v.push_back(item("book", {0.1, 0.07, 0.02}, {"grippable"}, {"living", "office", "bedroom"}));
    v.push_back(item("backpack", {0.15, 0.1, 0.2}, {"grippable", "container"}, {"bedroom", "office"}));
    v.push_back(item("basket", {0.17, 0.12, 0.1}, {"grippable", "container"}, {"living", "bedroom"}));
    v.push_back(item("remote", {0.08, 0.025, 0.015}, {"grippable"}, living));
    v.push_back(item("phone", {0.04, 0.075, 0.01}, {"grippable"}, {"living", "bedroom", "office"}));
    v.push_back(item("laptop", {0.17, 0.12, 0.015}, {"grippable"}, {"office", "living"}));
    v.push_back(item("pillow", {0.22, 0.15, 0.06}, {"grippable"}, {"bedroom", "living"}));
    v.push_back(item("towel", {0.15, 0.1, 0.02}, {"grippable"}, {"bathroom", "kitchen"}));
    v.push_back(item("vase", {0.06, 0.06, 0.12}, {"grippable"}, living));
    v.push_back(item("candle", {0.04, 0.04, 0.05}, {"grippable"}, {"living", "dining"}));
    v.push_back(item("toy", {0.06, 0.06, 0.06}, {"grippable"}, {"bedroom", "living"}));
    v.push_back(item("pen", {0.07, 0.01, 0.01}, {"grippable"}, {"office"}));
    v.push_back(item("notebook", {0.1, 0.075, 0.01}, {"grippable"}, {"office", "bedroom"}));
    return v;
  }());
  return catalog;
}

}  // namespace tg
