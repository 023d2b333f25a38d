#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tg/world.hpp"

namespace tg {

/// One placeable category: size, capabilities and where it tends to live.
struct AssetSpec {
  std::string category;
  Extents half;
  ObjectFlags flags;
  std::vector<std::string> rooms;     // room function tags with affinity
  std::vector<std::string> supports;  // preferred support categories, if any
  std::vector<std::string> faces;     // categories a floor copy should face
  bool fixture = false;               // large piece that stands on the floor
};

class AssetCatalog {
 public:
  AssetCatalog() = default;
  explicit AssetCatalog(std::vector<AssetSpec> assets) : assets_(std::move(assets)) {}

  const AssetSpec* find(std::string_view category) const;
  const std::vector<AssetSpec>& all() const { return assets_; }
  void add(AssetSpec a) { assets_.push_back(std::move(a)); }

 private:
  std::vector<AssetSpec> assets_;
};

const AssetCatalog& builtin_catalog();

/// Flag name used in scene and task files ("container", "grippable", ...).
std::vector<std::string> flag_names(const ObjectFlags& f);
bool flag_by_name(const ObjectFlags& f, std::string_view name, bool* known = nullptr);
bool is_flag_name(std::string_view name);

}  // namespace tg
