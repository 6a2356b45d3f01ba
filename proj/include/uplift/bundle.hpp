#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "uplift/serialize.hpp"
#include "uplift/tracking.hpp"

namespace uplift {

struct BundleMetadata {
  std::string train_date;  // UTC, ISO 8601
  std::string dataset_fingerprint;
  std::uint64_t seed = 0;
  double split_ratio = 0.7;
  bool stratify = false;
  bool reduced_features = false;
  std::string run_id;
  std::map<std::string, Metrics> metrics;  // "train", "test"
};

// Everything the service needs to answer a request: preprocessing, model,
// species means for imputation and the raw training rows used as the SHAP
// background and the PDP data.
struct ServingBundle {
  static constexpr int kVersion = 1;

  int version = kVersion;
  FittedLearner learner;
  ImputationTable imputation;
  Matrix background;  // raw encoded training rows
  BundleMetadata meta;

  const std::vector<std::string>& feature_names() const { return learner.pipeline.feature_names_in; }

  void validate() const {
    if (version != kVersion) throw ModelError("unsupported bundle version " + std::to_string(version));
    if (learner.pipeline.feature_names_in != encoded_feature_names())
      throw ModelError("bundle pipeline does not take the encoded feature schema");
    if (background.rows() == 0 || background.cols() != learner.pipeline.width_in())
      throw ModelError("bundle background does not match the pipeline input width");
  }
};

inline std::string utc_now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json to_json(const ServingBundle& b) {
  json metrics = json::object();
  for (const auto& [k, m] : b.meta.metrics) metrics[k] = to_json(m);
  return {{"version", b.version},
          {"learner", to_json(b.learner)},
          {"imputation", to_json(b.imputation)},
          {"background", to_json(b.background)},
          {"meta",
           {{"train_date", b.meta.train_date},
            {"dataset_fingerprint", b.meta.dataset_fingerprint},
            {"seed", b.meta.seed},
            {"split_ratio", b.meta.split_ratio},
            {"stratify", b.meta.stratify},
            {"reduced_features", b.meta.reduced_features},
            {"run_id", b.meta.run_id},
            {"metrics", metrics}}}};
}

inline ServingBundle bundle_from_json(const json& j) {
  return guarded_read("bundle", [&] {
    ServingBundle b;
    b.version = j.at("version").get<int>();
    if (b.version != ServingBundle::kVersion) throw ModelError("unsupported bundle version " + std::to_string(b.version));
    b.learner = learner_from_json(j.at("learner"));
    b.imputation = imputation_from_json(j.at("imputation"));
    b.background = matrix_from_json(j.at("background"));
    const auto& m = j.at("meta");
    b.meta.train_date = m.at("train_date").get<std::string>();
    b.meta.dataset_fingerprint = m.at("dataset_fingerprint").get<std::string>();
    b.meta.seed = m.at("seed").get<std::uint64_t>();
    b.meta.split_ratio = m.at("split_ratio").get<double>();
    b.meta.stratify = m.at("stratify").get<bool>();
    b.meta.reduced_features = m.at("reduced_features").get<bool>();
    b.meta.run_id = m.at("run_id").get<std::string>();
    for (const auto& [k, v] : m.at("metrics").items())
      b.meta.metrics[k] = {v.at("rmse").get<double>(), v.at("mae").get<double>(), optional_from(v.at("r2")),
                           v.at("n").get<std::size_t>()};
    b.validate();
    return b;
  });
}

inline void save_bundle(const ServingBundle& b, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_atomic(path, to_json(b).dump());
}

inline ServingBundle load_bundle(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ModelError("bundle not found: " + path.string());
  const auto text = read_file(path);
  return bundle_from_json(guarded_read("bundle", [&] { return json::parse(text); }));
}

}  // namespace uplift
