#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "test_util.hpp"

using namespace uplift;
using testutil::csv;
using testutil::default_row;

TEST(ComputeUplift, Examples) {
  EXPECT_EQ(compute_uplift(80, 62), 18.0);
  EXPECT_EQ(compute_uplift(62, 62), 0.0);
  EXPECT_EQ(compute_uplift(50, 70), -20.0);
}

TEST(ComputeUplift, RejectsOutOfRange) {
  EXPECT_THROW(compute_uplift(101, 50), DomainError);
  EXPECT_THROW(compute_uplift(50, -0.5), DomainError);
  EXPECT_THROW(compute_uplift(std::nan(""), 50), DomainError);
}

TEST(ComputeUplift, Antisymmetric) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(0, 100), b = rng.uniform(0, 100);
    EXPECT_EQ(compute_uplift(a, b), -compute_uplift(b, a));
  }
}

TEST(LoadCsv, SingleCompleteRow) {
  const auto ds = parse_csv(csv({default_row()}));
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.total_missing(), 0u);
  EXPECT_EQ(*ds.records[0].uplift_pct, 18.0);
  EXPECT_EQ(*ds.records[0][Numeric::seed_size_mm], 1.0);
  EXPECT_EQ(ds.records[0].gas, GasType::air);
  EXPECT_EQ(ds.fingerprint.size(), 64u);
}

TEST(LoadCsv, ParseErrorCitesRowAndColumn) {
  std::vector<std::map<std::string, std::string>> rows(8, default_row());
  rows[6]["voltage_kv"] = "abc";
  try {
    parse_csv(csv(rows));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 7u);
    EXPECT_EQ(e.column(), "voltage_kv");
    EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos);
  }
}

TEST(LoadCsv, UnknownColumnNamesIt) {
  const std::string bad = "species,cultivar,gas_type,mystery\nA,B,air,1\n";
  try {
    parse_csv(bad);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.column(), "mystery");
  }
}

TEST(LoadCsv, UnknownGasIsValidationError) {
  auto r = default_row();
  r["gas_type"] = "N2";
  EXPECT_THROW(parse_csv(csv({r})), ValidationError);
}

TEST(LoadCsv, GasLabelsCaseInsensitive) {
  auto r = default_row();
  r["gas_type"] = "AR";
  EXPECT_EQ(parse_csv(csv({r})).records[0].gas, GasType::Ar);
}

TEST(LoadCsv, MissingMarkers) {
  auto a = default_row(), b = default_row();
  a["seed_size_mm"] = "";
  b["seed_size_mm"] = "NA";
  b["plate_width_cm"] = "NA";
  const auto ds = parse_csv(csv({a, b}));
  EXPECT_FALSE(ds.records[0][Numeric::seed_size_mm].has_value());
  EXPECT_EQ(ds.missing_counts[index_of(Numeric::seed_size_mm)], 2u);
  EXPECT_EQ(ds.total_missing(), 3u);
}

TEST(LoadCsv, RangeAndSignValidation) {
  auto r = default_row();
  r["baseline_germination_pct"] = "120";
  EXPECT_THROW(parse_csv(csv({r})), ValidationError);
  r = default_row();
  r["power_w"] = "-1";
  EXPECT_THROW(parse_csv(csv({r})), ValidationError);
}

TEST(LoadCsv, SuppliedUpliftMustAgree) {
  const std::string h = testutil::header() + ",uplift_pct\n";
  auto row = [](const std::string& uplift) {
    std::string s = "A,B";
    for (std::size_t k = 0; k < kNumericCount; ++k) s += k == index_of(Numeric::baseline_germination_pct) ? ",62" : ",1";
    return s + ",air,80," + uplift + "\n";
  };
  EXPECT_EQ(*parse_csv(h + row("18")).records[0].uplift_pct, 18.0);
  EXPECT_THROW(parse_csv(h + row("17")), ValidationError);
}

TEST(LoadCsv, AliasesResolve) {
  const auto schema = FeatureSchema::from_json(nlohmann::json::parse(R"js({"aliases": {"Voltage (kV)": "voltage_kv"}})js"));
  const auto ds = parse_csv("species,cultivar,gas_type,Voltage (kV)\nA,B,He,9.5\n", schema);
  EXPECT_EQ(*ds.records[0][Numeric::voltage_kv], 9.5);
  EXPECT_EQ(ds.missing_counts[index_of(Numeric::power_w)], 1u);
}

TEST(LoadCsv, FileRoundTripKeepsOrder) {
  testutil::TempDir dir;
  std::vector<std::map<std::string, std::string>> rows;
  for (int i = 0; i < 5; ++i) {
    auto r = default_row();
    r["cultivar"] = "c" + std::to_string(i);
    rows.push_back(r);
  }
  const auto path = dir.path / "d.csv";
  std::ofstream(path) << csv(rows);
  const auto a = load_csv(path), b = load_csv(path);
  EXPECT_EQ(a, b);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.records[static_cast<std::size_t>(i)].cultivar, "c" + std::to_string(i));
  EXPECT_EQ(parse_csv(to_csv(a)).records, a.records);
  EXPECT_THROW(load_csv(dir.path / "absent.csv"), DataError);
}

// ---------------------------------------------------------------- imputation

Dataset three_row_species(std::optional<double> middle) {
  Dataset ds;
  for (std::optional<double> v : {std::optional<double>(2.0), middle, std::optional<double>(4.0)}) {
    SeedRecord r;
    r.species = "A";
    for (auto& c : r.numeric) c = 1.0;
    r[Numeric::seed_size_mm] = v;
    ds.records.push_back(r);
  }
  return ds;
}

TEST(Imputation, WithinSpeciesMean) {
  const auto out = impute_within_species(three_row_species(std::nullopt));
  EXPECT_EQ(*out.records[1][Numeric::seed_size_mm], 3.0);
  EXPECT_EQ(*out.records[0][Numeric::seed_size_mm], 2.0);
}

TEST(Imputation, NoMissingIsIdentity) {
  const auto ds = three_row_species(10.0);
  EXPECT_EQ(impute_within_species(ds), ds);
}

TEST(Imputation, GlobalFallback) {
  Dataset ds;
  for (auto [sp, v] : std::vector<std::pair<std::string, std::optional<double>>>{
           {"A", std::nullopt}, {"A", std::nullopt}, {"B", 5.0}, {"B", 7.0}}) {
    SeedRecord r;
    r.species = sp;
    for (auto& c : r.numeric) c = 1.0;
    r[Numeric::seed_size_mm] = v;
    ds.records.push_back(r);
  }
  const auto out = impute_within_species(ds);
  EXPECT_EQ(*out.records[0][Numeric::seed_size_mm], 6.0);
  EXPECT_EQ(*out.records[1][Numeric::seed_size_mm], 6.0);
}

TEST(Imputation, AllMissingColumnIsError) {
  Dataset ds;
  SeedRecord r;
  r.species = "A";
  ds.records.push_back(r);
  EXPECT_THROW(impute_within_species(ds), ValidationError);
}

TEST(Imputation, IdempotentAndObservedUnchanged) {
  auto ds = make_hormetic_dataset(5, [] {
    HormeticSpec s;
    s.n = 60;
    return s;
  }());
  Rng rng(2);
  for (auto& r : ds.records)
    for (auto& c : r.numeric)
      if (rng.uniform() < 0.2) c.reset();
  const auto once = impute_within_species(ds);
  EXPECT_EQ(impute_within_species(once).records, once.records);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t k = 0; k < kNumericCount; ++k)
      if (ds.records[i].numeric[k]) EXPECT_EQ(ds.records[i].numeric[k], once.records[i].numeric[k]);
}

// ------------------------------------------------------------------ encoding

TEST(Encoding, GasOneHotOrder) {
  SeedRecord r;
  for (auto& c : r.numeric) c = 0.0;
  std::vector<double> row(kEncodedWidth);
  r.gas = GasType::Ar;
  encode_record(r, row);
  EXPECT_EQ(std::vector<double>(row.begin() + kNumericCount, row.end()), (std::vector<double>{1, 0, 0, 0}));
  const auto names = encoded_feature_names();
  EXPECT_EQ(names[kNumericCount], "gas_Ar");
  EXPECT_EQ(names.back(), "gas_air");
}

TEST(Encoding, FourExtraColumnsAndRoundTrip) {
  Dataset ds;
  for (std::size_t g = 0; g < kGasCount; ++g) {
    SeedRecord r;
    r.species = "A";
    for (auto& c : r.numeric) c = 1.0;
    r.gas = static_cast<GasType>(g);
    r.uplift_pct = 0.0;
    ds.records.push_back(r);
  }
  const auto enc = encode_features(ds);
  EXPECT_EQ(enc.X.cols(), kNumericCount + 4);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(decode_gas(enc.X.row(i)), ds.records[i].gas);
  EXPECT_EQ(enc.species, std::vector<std::string>(4, "A"));
}

TEST(Encoding, RequiresImputation) {
  SeedRecord r;
  r.species = "A";
  r.uplift_pct = 1.0;
  Dataset ds;
  ds.records.push_back(r);
  EXPECT_THROW(encode_features(ds), ValidationError);
}

// ----------------------------------------------------------------- splitting

TEST(Split, Cardinalities) {
  const auto s = train_test_split(10, 0.7, 3);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.test.size(), 3u);
  const auto p = train_test_split(196, 0.7, 3);
  EXPECT_EQ(p.train.size(), 137u);
  EXPECT_EQ(p.test.size(), 59u);
}

TEST(Split, DisjointCoveringDeterministic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = train_test_split(53, 0.7, seed), b = train_test_split(53, 0.7, seed);
    EXPECT_EQ(a, b);
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    for (auto i : a.test) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(all.size(), 53u);
    EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end()));
  }
  EXPECT_NE(train_test_split(53, 0.7, 1).train, train_test_split(53, 0.7, 2).train);
}

TEST(Split, EmptyPartitionRejected) {
  EXPECT_THROW(train_test_split(2, 0.9, 3), ConfigError);
  EXPECT_THROW(train_test_split(10, 1.0, 3), ConfigError);
  EXPECT_THROW(train_test_split(1, 0.5, 3), DataError);
}

TEST(Split, StratifiedKeepsGroupShares) {
  std::vector<std::string> groups;
  for (int i = 0; i < 60; ++i) groups.push_back(i < 40 ? "a" : "b");
  const auto s = train_test_split(60, 0.7, 9, groups);
  EXPECT_EQ(s.train.size(), 42u);
  std::size_t a = 0;
  for (auto i : s.train) a += groups[i] == "a";
  EXPECT_EQ(a, 28u);
}
