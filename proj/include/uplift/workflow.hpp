#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uplift/bundle.hpp"
#include "uplift/data_model.hpp"
#include "uplift/evaluate.hpp"
#include "uplift/interpret.hpp"

namespace uplift {

// End-to-end training on one dataset: impute within species, split, fit the
// pipeline and model on the training partition, score both partitions.
struct TrainRequest {
  LearnerConfig learner = LearnerConfig::from_name("et");
  PipelineStages stages;
  std::uint64_t seed = 3;
  double split_ratio = 0.7;
  bool stratify = false;  // by species
  bool reduced_features = false;
  double reduction_share = kReductionShare;
  std::size_t workers = 1;
};

struct TrainOutcome {
  ServingBundle bundle;
  SplitIndices split;
  EncodedData train;
  EncodedData test;
  EvalReport train_report;
  EvalReport test_report;
  std::optional<ImportanceReport> importance;  // reduced-feature flow only
  std::vector<std::string> warnings;
};

inline TrainOutcome train_model(const Dataset& raw, const TrainRequest& req) {
  TrainOutcome out;
  out.bundle.imputation = fit_imputation(raw);
  const Dataset ds = apply_imputation(out.bundle.imputation, raw);
  const EncodedData all = encode_features(ds);
  out.split = req.stratify ? train_test_split(ds.size(), req.split_ratio, req.seed, all.species)
                           : train_test_split(ds.size(), req.split_ratio, req.seed);
  out.train = all.subset(out.split.train);
  out.test = all.subset(out.split.test);

  FitOptions options{req.workers, &out.warnings};
  if (req.reduced_features) {
    auto reduced = fit_reduced_learner(out.train.X, out.train.y, all.feature_names, req.learner, req.stages, req.seed,
                                       req.reduction_share, options);
    out.bundle.learner = std::move(reduced.learner);
    out.importance = std::move(reduced.importance);
  } else {
    out.bundle.learner =
        fit_learner(out.train.X, out.train.y, all.feature_names, req.learner, req.stages, req.seed, options);
  }

  const auto& l = out.bundle.learner;
  out.train_report = evaluate_predictions("train", out.train.y, l.predict(out.train.X), out.train.species,
                                          out.train.cultivar);
  out.test_report =
      evaluate_predictions("test", out.test.y, l.predict(out.test.X), out.test.species, out.test.cultivar);

  out.bundle.background = out.train.X;
  auto& m = out.bundle.meta;
  m.train_date = utc_now_iso();
  m.dataset_fingerprint = raw.fingerprint;
  m.seed = req.seed;
  m.split_ratio = req.split_ratio;
  m.stratify = req.stratify;
  m.reduced_features = req.reduced_features;
  m.metrics["train"] = out.train_report.metrics;
  m.metrics["test"] = out.test_report.metrics;
  out.bundle.validate();
  return out;
}

/// Replays a bundle on a dataset: imputes with the bundle's stored means
/// and scores every row.
inline EvalReport evaluate_bundle(const ServingBundle& b, const Dataset& raw, std::string label = "evaluate") {
  const Dataset ds = apply_imputation(b.imputation, raw);
  const auto data = encode_features(ds);
  return evaluate_predictions(std::move(label), data.y, b.learner.predict(data.X), data.species, data.cultivar);
}

struct ReplayReport {
  EvalReport train;
  EvalReport test;
};

/// Re-derives the training split from the bundle metadata and rescores both
/// partitions. Only meaningful on the dataset the bundle was trained on.
inline ReplayReport replay_split(const ServingBundle& b, const Dataset& raw) {
  if (raw.fingerprint != b.meta.dataset_fingerprint)
    throw DataError("dataset fingerprint does not match the bundle's training data");
  const Dataset ds = apply_imputation(b.imputation, raw);
  const auto all = encode_features(ds);
  const auto split = b.meta.stratify ? train_test_split(ds.size(), b.meta.split_ratio, b.meta.seed, all.species)
                                     : train_test_split(ds.size(), b.meta.split_ratio, b.meta.seed);
  const auto tr = all.subset(split.train), te = all.subset(split.test);
  return {evaluate_predictions("train", tr.y, b.learner.predict(tr.X), tr.species, tr.cultivar),
          evaluate_predictions("test", te.y, b.learner.predict(te.X), te.species, te.cultivar)};
}

}  // namespace uplift
