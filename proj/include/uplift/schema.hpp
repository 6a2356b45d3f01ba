#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uplift/error.hpp"
#include "uplift/hash.hpp"

namespace uplift {

// Real-valued columns that enter the model, in canonical order.
enum class Numeric : std::size_t {
  seed_size_mm,
  seed_weight_g,
  baseline_sod,
  baseline_germination_pct,
  germination_potential_pct,
  germination_index,
  germination_days,
  plate_length_cm,
  plate_width_cm,
  plate_thickness_cm,
  plasma_temp_c,
  electrode_distance_cm,
  voltage_kv,
  frequency_khz,
  power_w,
  pressure_kpa,
  gas_flow_lpm,
  plasma_time_s,
  growing_temp_c,
  water_per_seed,
};

inline constexpr std::size_t kNumericCount = 20;

inline constexpr std::array<std::string_view, kNumericCount> kNumericNames = {
    "seed_size_mm",          "seed_weight_g",    "baseline_sod",
    "baseline_germination_pct", "germination_potential_pct", "germination_index",
    "germination_days",      "plate_length_cm",  "plate_width_cm",
    "plate_thickness_cm",    "plasma_temp_c",    "electrode_distance_cm",
    "voltage_kv",            "frequency_khz",    "power_w",
    "pressure_kpa",          "gas_flow_lpm",     "plasma_time_s",
    "growing_temp_c",        "water_per_seed",
};

constexpr std::size_t index_of(Numeric c) noexcept { return static_cast<std::size_t>(c); }
constexpr std::string_view name_of(Numeric c) noexcept { return kNumericNames[index_of(c)]; }

inline std::optional<Numeric> numeric_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumericCount; ++i)
    if (kNumericNames[i] == name) return static_cast<Numeric>(i);
  return std::nullopt;
}

enum class GasType : std::size_t { Ar, He, O2, air };
inline constexpr std::size_t kGasCount = 4;
inline constexpr std::array<std::string_view, kGasCount> kGasLabels = {"Ar", "He", "O2", "air"};

inline std::string_view label_of(GasType g) noexcept { return kGasLabels[static_cast<std::size_t>(g)]; }

// Case-insensitive; "Ar", "ar", "AIR" all accepted.
inline std::optional<GasType> parse_gas(std::string_view text) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  };
  const std::string t = lower(text);
  for (std::size_t i = 0; i < kGasCount; ++i)
    if (lower(kGasLabels[i]) == t) return static_cast<GasType>(i);
  return std::nullopt;
}

// Non-numeric / target columns of the CSV.
inline constexpr std::string_view kSpecies = "species";
inline constexpr std::string_view kCultivar = "cultivar";
inline constexpr std::string_view kGasType = "gas_type";
inline constexpr std::string_view kTreated = "treated_germination_pct";
inline constexpr std::string_view kUplift = "uplift_pct";

enum class ColumnType { label, real, gas };

// Canonical CSV columns plus header aliases. Aliases let files that use
// descriptive headers ("Voltage (kV)") load without renaming.
class FeatureSchema {
 public:
  static FeatureSchema canonical() {
    FeatureSchema s;
    s.columns_.emplace_back(kSpecies, ColumnType::label);
    s.columns_.emplace_back(kCultivar, ColumnType::label);
    for (auto name : kNumericNames) s.columns_.emplace_back(name, ColumnType::real);
    s.columns_.emplace_back(kGasType, ColumnType::gas);
    s.columns_.emplace_back(kTreated, ColumnType::real);
    s.columns_.emplace_back(kUplift, ColumnType::real);
    return s;
  }

  /// Canonical columns extended with the "aliases" object of a schema document.
  static FeatureSchema from_json(const nlohmann::json& doc) {
    FeatureSchema s = canonical();
    if (doc.contains("aliases")) {
      for (const auto& [alias, target] : doc.at("aliases").items()) {
        const std::string t = target.get<std::string>();
        if (!s.is_canonical(t)) throw SchemaError(t, "alias '" + alias + "' targets unknown column '" + t + "'");
        s.aliases_[normalize(alias)] = t;
      }
    }
    return s;
  }

  static FeatureSchema from_file(const std::filesystem::path& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("schema file '" + path.string() + "': " + e.what());
    }
  }

  const std::vector<std::pair<std::string, ColumnType>>& columns() const noexcept { return columns_; }

  bool is_canonical(std::string_view name) const {
    return std::any_of(columns_.begin(), columns_.end(), [&](const auto& c) { return c.first == name; });
  }

  /// Canonical name for a header cell; SchemaError if neither canonical nor aliased.
  std::string resolve(std::string_view header) const {
    std::string h(header);
    trim(h);
    if (is_canonical(h)) return h;
    if (auto it = aliases_.find(normalize(h)); it != aliases_.end()) return it->second;
    throw SchemaError(h);
  }

  ColumnType type_of(std::string_view name) const {
    for (const auto& [n, t] : columns_)
      if (n == name) return t;
    throw SchemaError(std::string(name));
  }

 private:
  static void trim(std::string& s) {
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && ws(s.back())) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && ws(s[i])) ++i;
    s.erase(0, i);
  }
  static std::string normalize(std::string_view s) {
    std::string out(s);
    trim(out);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  }

  std::vector<std::pair<std::string, ColumnType>> columns_;
  std::map<std::string, std::string> aliases_;
};

}  // namespace uplift
