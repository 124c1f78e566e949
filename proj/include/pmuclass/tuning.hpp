#pragma once

// Hyperparameter tuning of the classifier and its validation outputs.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmuclass/bayes_opt.hpp"
#include "pmuclass/csv.hpp"
#include "pmuclass/error.hpp"
#include "pmuclass/metrics.hpp"
#include "pmuclass/mlp.hpp"
#include "pmuclass/preprocess.hpp"
#include "pmuclass/search_space.hpp"
#include "pmuclass/train.hpp"

namespace pmuclass {

struct Prediction {
  std::string event_id;
  std::string pmu_id;
  int truth = 0;
  int pred = 0;
};

inline constexpr std::string_view kPredictionsHeader = "event_id,pmu_id,truth,pred";

/// Validation predictions of a training run, in split order.
template <typename Scalar>
std::vector<Prediction> validation_predictions(const TrainResult<Scalar>& r,
                                               std::span<const FeatureInstance> instances) {
  std::vector<Prediction> out;
  for (std::size_t j = 0; j < r.split.validation.size(); ++j) {
    const auto& inst = instances[r.split.validation[j]];
    out.push_back({inst.event_id, inst.pmu_id, r.validation_truth[j], r.validation_predictions[j]});
  }
  return out;
}

inline void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
  auto out = csv::open_output(path.string());
  out << kPredictionsHeader << '\n';
  for (const auto& p : preds) out << p.event_id << ',' << p.pmu_id << ',' << p.truth << ',' << p.pred << '\n';
}

inline std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  auto in = csv::open_input(path.string());
  std::string line;
  if (!std::getline(in, line) || csv::trim_cr(line) != kPredictionsHeader)
    throw Error(Errc::MalformedHeader, path.string() + ": not a predictions file");
  std::vector<Prediction> out;
  while (std::getline(in, line)) {
    const auto row = csv::trim_cr(line);
    if (row.empty()) continue;
    const auto f = csv::split(row);
    if (f.size() != 4) throw Error(Errc::MalformedRow, "wrong field count in predictions");
    out.push_back({std::string(f[0]), std::string(f[1]), csv::parse_int<int>(f[2], "truth"),
                   csv::parse_int<int>(f[3], "pred")});
  }
  return out;
}

inline MetricsReport report_from(const std::vector<Prediction>& preds) {
  std::vector<int> t, p;
  for (const auto& x : preds) {
    t.push_back(x.truth);
    p.push_back(x.pred);
  }
  return evaluate_predictions(t, p);
}

/// Metrics of the per-event majority vote.
inline MetricsReport event_vote_report_from(const std::vector<Prediction>& preds) {
  std::vector<std::string> ids;
  std::vector<int> t, p;
  for (const auto& x : preds) {
    ids.push_back(x.event_id);
    t.push_back(x.truth);
    p.push_back(x.pred);
  }
  const auto v = majority_vote(ids, t, p);
  return evaluate_predictions(v.truths, v.votes);
}

struct TuneResult {
  OptimizeResult search;
  MlpArchitecture best_architecture;
  TrainResult<float> final_run;
  std::vector<Prediction> predictions;
  MetricsReport report;
};

/// Bayesian search over the default MLP space. Each trial trains with `tcfg`
/// and scores validation accuracy. The best architecture is then retrained
/// with the same settings and evaluated on the validation split.
inline TuneResult tune(std::span<const FeatureInstance> instances, const TrainConfig& tcfg, const BoOptions& bo,
                       std::vector<Trial> resume = {}, const TrialCallback& on_trial = {}) {
  tcfg.validate();
  check_training_set(instances);
  const auto space = SearchSpace::mlp_default();
  const Objective objective = [&](const Point& p) {
    return train<float>(to_architecture(p), instances, tcfg).validation_accuracy;
  };
  auto search = optimize(objective, space, bo, std::move(resume), on_trial);
  const auto arch = to_architecture(search.best.params);
  auto final_run = train<float>(arch, instances, tcfg);
  auto preds = validation_predictions(final_run, instances);
  auto report = report_from(preds);
  return {std::move(search), arch, std::move(final_run), std::move(preds), report};
}

inline nlohmann::json best_architecture_json(const Trial& best) {
  return {{"architecture", to_json(to_architecture(best.params))},
          {"call_index", best.call_index},
          {"objective", best.objective}};
}

}  // namespace pmuclass
