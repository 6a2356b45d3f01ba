#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uplift/error.hpp"
#include "uplift/hash.hpp"
#include "uplift/matrix.hpp"
#include "uplift/rng.hpp"
#include "uplift/schema.hpp"

namespace uplift {

// A missing cell is an empty optional; CSV "" and "NA" both load as missing.
using Cell = std::optional<double>;

/// One experimental observation.
struct SeedRecord {
  std::string species;
  std::string cultivar;
  std::array<Cell, kNumericCount> numeric{};
  GasType gas = GasType::air;
  Cell treated_germination_pct;
  Cell uplift_pct;

  Cell& operator[](Numeric c) noexcept { return numeric[index_of(c)]; }
  const Cell& operator[](Numeric c) const noexcept { return numeric[index_of(c)]; }

  friend bool operator==(const SeedRecord&, const SeedRecord&) = default;
};

struct Dataset {
  std::vector<SeedRecord> records;
  std::array<std::size_t, kNumericCount> missing_counts{};
  std::string fingerprint;  // SHA-256 of the source bytes

  std::size_t size() const noexcept { return records.size(); }

  std::set<std::string> cultivars() const {
    std::set<std::string> out;
    for (const auto& r : records) out.insert(r.cultivar);
    return out;
  }
  std::set<std::string> species() const {
    std::set<std::string> out;
    for (const auto& r : records) out.insert(r.species);
    return out;
  }
  std::size_t total_missing() const {
    std::size_t n = 0;
    for (auto c : missing_counts) n += c;
    return n;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline void check_percentage(double v, std::string_view what) {
  if (!(v >= 0.0 && v <= 100.0))
    throw DomainError(std::string(what) + " must lie in [0, 100], got " + std::to_string(v));
}

/// Germination uplift: treated minus baseline germination percentage.
inline double compute_uplift(double treated, double baseline) {
  check_percentage(treated, "treated germination");
  check_percentage(baseline, "baseline germination");
  return treated - baseline;
}

namespace detail {

inline std::string trimmed(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// RFC 4180 records: quoted fields may contain commas, doubled quotes and newlines.
inline std::vector<std::vector<std::string>> split_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default:
        field += c;
        any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Cell parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string t = trimmed(raw);
  if (t.empty() || t == "NA") return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw ParseError(row, column, t);
  return v;
}

}  // namespace detail

/// Parses CSV text. Columns absent from the header load as all-missing;
/// species, cultivar and gas_type are required.
inline Dataset parse_csv(std::string_view text, const FeatureSchema& schema = FeatureSchema::canonical()) {
  const auto rows = detail::split_csv(text);
  if (rows.empty()) throw SchemaError("", "CSV has no header row");

  std::vector<std::string> columns;
  for (const auto& h : rows.front()) {
    std::string name = schema.resolve(h);
    if (std::find(columns.begin(), columns.end(), name) != columns.end())
      throw SchemaError(name, "duplicate column '" + name + "'");
    columns.push_back(std::move(name));
  }
  for (auto required : {kSpecies, kCultivar, kGasType}) {
    if (std::find(columns.begin(), columns.end(), required) == columns.end())
      throw SchemaError(std::string(required), "required column '" + std::string(required) + "' is missing");
  }

  Dataset ds;
  ds.fingerprint = sha256_hex(text);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    const std::size_t row_no = r;
    if (cells.size() != columns.size())
      throw ValidationError("row " + std::to_string(row_no) + ": expected " + std::to_string(columns.size()) +
                            " fields, found " + std::to_string(cells.size()));
    SeedRecord rec;
    std::string gas_text;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string& col = columns[c];
      if (col == kSpecies) {
        rec.species = detail::trimmed(cells[c]);
      } else if (col == kCultivar) {
        rec.cultivar = detail::trimmed(cells[c]);
      } else if (col == kGasType) {
        gas_text = detail::trimmed(cells[c]);
      } else if (col == kTreated) {
        rec.treated_germination_pct = detail::parse_cell(cells[c], row_no, col);
      } else if (col == kUplift) {
        rec.uplift_pct = detail::parse_cell(cells[c], row_no, col);
      } else {
        rec[*numeric_from_name(col)] = detail::parse_cell(cells[c], row_no, col);
      }
    }
    const std::string where = "row " + std::to_string(row_no) + ": ";
    if (rec.species.empty()) throw ValidationError(where + "species is empty");
    if (rec.cultivar.empty()) rec.cultivar = rec.species;
    auto gas = parse_gas(gas_text);
    if (!gas) throw ValidationError(where + "unknown gas_type '" + gas_text + "' (expected Ar, He, O2 or air)");
    rec.gas = *gas;

    const auto& base = rec[Numeric::baseline_germination_pct];
    try {
      if (base) check_percentage(*base, "baseline_germination_pct");
      if (rec.treated_germination_pct) check_percentage(*rec.treated_germination_pct, "treated_germination_pct");
    } catch (const DomainError& e) {
      throw ValidationError(where + e.what());
    }
    for (Numeric c : {Numeric::plasma_time_s, Numeric::power_w, Numeric::voltage_kv, Numeric::frequency_khz}) {
      if (rec[c] && *rec[c] < 0.0)
        throw ValidationError(where + std::string(name_of(c)) + " must be non-negative");
    }
    if (base && rec.treated_germination_pct) {
      const double u = compute_uplift(*rec.treated_germination_pct, *base);
      if (rec.uplift_pct && std::abs(*rec.uplift_pct - u) > 1e-9)
        throw ValidationError(where + "uplift_pct disagrees with treated - baseline");
      rec.uplift_pct = u;
    }
    for (std::size_t k = 0; k < kNumericCount; ++k)
      if (!rec.numeric[k]) ++ds.missing_counts[k];
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

inline Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema = FeatureSchema::canonical()) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: " + path.string());
  return parse_csv(read_file(path), schema);
}

inline std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Writes a dataset in canonical column order; missing cells are empty.
inline std::string to_csv(const Dataset& ds) {
  std::string out = "species,cultivar";
  for (auto n : kNumericNames) (out += ',') += n;
  out += ",gas_type,treated_germination_pct,uplift_pct\n";
  auto cell = [](const Cell& c) { return c ? format_number(*c) : std::string(); };
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& r : ds.records) {
    out += quote(r.species) + ',' + quote(r.cultivar);
    for (const auto& c : r.numeric) out += ',' + cell(c);
    out += ',' + std::string(label_of(r.gas)) + ',' + cell(r.treated_germination_pct) + ',' + cell(r.uplift_pct) + '\n';
  }
  return out;
}

// Within-species column means with a global fallback. Stored in serving
// bundles so requests with absent traits are filled the same way.
struct ImputationTable {
  std::map<std::string, std::array<Cell, kNumericCount>> species_means;
  std::array<double, kNumericCount> global_means{};

  double value_for(const std::string& species, std::size_t column) const {
    if (auto it = species_means.find(species); it != species_means.end() && it->second[column])
      return *it->second[column];
    return global_means[column];
  }

  friend bool operator==(const ImputationTable&, const ImputationTable&) = default;
};

inline ImputationTable fit_imputation(const Dataset& ds) {
  std::map<std::string, std::array<std::pair<double, std::size_t>, kNumericCount>> acc;
  std::array<std::pair<double, std::size_t>, kNumericCount> global{};
  for (const auto& r : ds.records) {
    auto& s = acc[r.species];
    for (std::size_t k = 0; k < kNumericCount; ++k) {
      if (!r.numeric[k]) continue;
      s[k].first += *r.numeric[k];
      ++s[k].second;
      global[k].first += *r.numeric[k];
      ++global[k].second;
    }
  }
  ImputationTable table;
  for (std::size_t k = 0; k < kNumericCount; ++k) {
    if (global[k].second == 0) {
      if (ds.records.empty()) continue;
      throw ValidationError("column '" + std::string(kNumericNames[k]) +
                            "' is missing for every row and cannot be imputed");
    }
    table.global_means[k] = global[k].first / static_cast<double>(global[k].second);
  }
  for (const auto& [species, sums] : acc) {
    auto& means = table.species_means[species];
    for (std::size_t k = 0; k < kNumericCount; ++k)
      if (sums[k].second > 0) means[k] = sums[k].first / static_cast<double>(sums[k].second);
  }
  return table;
}

inline Dataset apply_imputation(const ImputationTable& table, Dataset ds) {
  for (auto& r : ds.records)
    for (std::size_t k = 0; k < kNumericCount; ++k)
      if (!r.numeric[k]) r.numeric[k] = table.value_for(r.species, k);
  ds.missing_counts.fill(0);
  return ds;
}

/// Fills missing numeric cells with the mean of the same column within the
/// record's species, or the global column mean if the species has none.
inline Dataset impute_within_species(const Dataset& ds) {
  const bool any_missing = std::any_of(ds.records.begin(), ds.records.end(), [](const SeedRecord& r) {
    return std::any_of(r.numeric.begin(), r.numeric.end(), [](const Cell& c) { return !c.has_value(); });
  });
  if (!any_missing) return ds;
  return apply_imputation(fit_imputation(ds), ds);
}

// Model-ready view: numeric columns then gas indicators (Ar, He, O2, air).
// Species and cultivar ride along as grouping labels only.
struct EncodedData {
  Matrix X;
  std::vector<double> y;
  std::vector<std::string> species;
  std::vector<std::string> cultivar;
  std::vector<std::string> feature_names;

  std::size_t size() const noexcept { return X.rows(); }

  EncodedData subset(std::span<const std::size_t> idx) const {
    EncodedData out;
    out.X = X.select_rows(idx);
    if (!y.empty()) out.y = select(y, idx);
    out.species = select(species, idx);
    out.cultivar = select(cultivar, idx);
    out.feature_names = feature_names;
    return out;
  }
};

inline constexpr std::size_t kEncodedWidth = kNumericCount + kGasCount;

inline std::vector<std::string> encoded_feature_names() {
  std::vector<std::string> names(kNumericNames.begin(), kNumericNames.end());
  for (auto g : kGasLabels) names.push_back("gas_" + std::string(g));
  return names;
}

inline std::optional<std::size_t> encoded_index(std::string_view feature) {
  const auto names = encoded_feature_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == feature) return i;
  return std::nullopt;
}

inline void encode_record(const SeedRecord& r, std::span<double> out) {
  for (std::size_t k = 0; k < kNumericCount; ++k) {
    if (!r.numeric[k])
      throw ValidationError("cannot encode: '" + std::string(kNumericNames[k]) + "' is missing (impute first)");
    out[k] = *r.numeric[k];
  }
  for (std::size_t g = 0; g < kGasCount; ++g) out[kNumericCount + g] = 0.0;
  out[kNumericCount + static_cast<std::size_t>(r.gas)] = 1.0;
}

/// Inverse of the one-hot block: the gas with the largest indicator.
inline GasType decode_gas(std::span<const double> encoded_row) {
  const auto block = encoded_row.subspan(kNumericCount, kGasCount);
  return static_cast<GasType>(std::max_element(block.begin(), block.end()) - block.begin());
}

/// One-hot encodes gas_type. When `require_target` is set every record must
/// carry an uplift value.
inline EncodedData encode_features(const Dataset& ds, bool require_target = true) {
  EncodedData out;
  out.feature_names = encoded_feature_names();
  out.X = Matrix(ds.size(), kEncodedWidth);
  bool have_target = true;
  for (const auto& r : ds.records) have_target = have_target && r.uplift_pct.has_value();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records[i];
    encode_record(r, out.X.row_mut(i));
    out.species.push_back(r.species);
    out.cultivar.push_back(r.cultivar);
    if (!r.uplift_pct && require_target)
      throw ValidationError("row " + std::to_string(i + 1) + " has no uplift target");
  }
  if (have_target)
    for (const auto& r : ds.records) out.y.push_back(*r.uplift_pct);
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  double ratio = 0.0;

  friend bool operator==(const SplitIndices&, const SplitIndices&) = default;
};

/// Seeded shuffle, first round(ratio * n) rows train. With `groups` the
/// allocation is done per group (largest remainder keeps the total at
/// round(ratio * n)). Indices within each partition are ascending.
inline SplitIndices train_test_split(std::size_t n, double ratio, std::uint64_t seed,
                                     std::span<const std::string> groups = {}) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  if (n < 2) throw DataError("need at least 2 rows to split");
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (n_train == 0 || n_train == n)
    throw ConfigError("split ratio " + std::to_string(ratio) + " leaves an empty partition for n=" + std::to_string(n));

  SplitIndices s;
  s.seed = seed;
  s.ratio = ratio;
  const auto perm = shuffled_indices(n, seed);
  if (groups.empty()) {
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  } else {
    if (groups.size() != n) throw DataError("group labels do not match row count");
    std::map<std::string, std::vector<std::size_t>> by_group;
    for (std::size_t i : perm) by_group[groups[i]].push_back(i);
    std::vector<std::pair<double, std::string>> remainders;
    std::map<std::string, std::size_t> take;
    std::size_t assigned = 0;
    for (const auto& [g, members] : by_group) {
      const double exact = ratio * static_cast<double>(members.size());
      take[g] = static_cast<std::size_t>(std::floor(exact));
      assigned += take[g];
      remainders.emplace_back(exact - std::floor(exact), g);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n_train && i < remainders.size(); ++i, ++assigned) ++take[remainders[i].second];
    for (const auto& [g, members] : by_group) {
      const std::size_t k = take[g];
      s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
      s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline SplitIndices train_test_split(const Dataset& ds, double ratio, std::uint64_t seed) {
  return train_test_split(ds.size(), ratio, seed);
}

}  // namespace uplift
