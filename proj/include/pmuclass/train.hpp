#pragma once

// Event-level train/validation split and minibatch SGD training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pmuclass/error.hpp"
#include "pmuclass/mlp.hpp"
#include "pmuclass/preprocess.hpp"
#include "pmuclass/rng.hpp"

namespace pmuclass {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double train_fraction = 0.75;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be >= 1");
    if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
    if (!(train_fraction > 0 && train_fraction < 1))
      throw Error(Errc::InvalidConfig, "train_fraction must be in (0, 1)");
  }
};

/// Instance indices on each side of the split.
struct EventSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Checks the common preconditions of training on `instances`: one shared
/// feature kind and fps, and at least two events for every class present.
inline void check_training_set(std::span<const FeatureInstance> instances) {
  if (instances.empty()) throw Error(Errc::InsufficientData, "no instances");
  const auto& first = instances.front();
  std::array<std::set<std::string>, kNumClasses> events;
  std::map<std::string, EventClass> event_class;
  for (const auto& inst : instances) {
    if (inst.feature_kind != first.feature_kind || inst.fps != first.fps)
      throw Error(Errc::MixedFeatureKinds, "instances mix feature kinds or frame rates");
    if (inst.values.size() != first.values.size())
      throw Error(Errc::DimMismatch, "instances have different lengths");
    for (double v : inst.values) {
      if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "non-finite value in " + inst.event_id);
    }
    auto [it, inserted] = event_class.emplace(inst.event_id, inst.class_label);
    if (!inserted && it->second != inst.class_label)
      throw Error(Errc::BadLabel, "event " + inst.event_id + " carries two labels");
    events[to_int(inst.class_label)].insert(inst.event_id);
  }
  for (int k = 0; k < kNumClasses; ++k) {
    if (events[k].size() == 1) {
      throw Error(Errc::InsufficientData,
                  std::string("class ") + std::string(kClassNames[k]) + " has a single event");
    }
  }
}

/// Stratified split by event: every instance of an event lands on the same
/// side. Each class with n events sends clamp(round(f*n), 1, n-1) to train.
inline EventSplit split_by_event(std::span<const FeatureInstance> instances, double train_fraction,
                                 std::uint64_t seed) {
  std::array<std::vector<std::string>, kNumClasses> events;
  for (const auto& inst : instances) {
    auto& v = events[to_int(inst.class_label)];
    if (std::find(v.begin(), v.end(), inst.event_id) == v.end()) v.push_back(inst.event_id);
  }
  Rng rng(sub_seed(seed, "split"));
  std::set<std::string> train_events;
  for (auto& v : events) {
    std::sort(v.begin(), v.end());
    std::shuffle(v.begin(), v.end(), rng);
    if (v.empty()) continue;
    const auto n = static_cast<long>(v.size());
    long n_train = std::lround(train_fraction * static_cast<double>(n));
    n_train = std::clamp(n_train, 1L, std::max(1L, n - 1));
    train_events.insert(v.begin(), v.begin() + n_train);
  }
  EventSplit split;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    (train_events.count(instances[i].event_id) ? split.train : split.validation).push_back(i);
  }
  return split;
}

/// Stacks the selected instances as columns.
template <typename Scalar>
typename Mlp<Scalar>::Matrix stack_columns(std::span<const FeatureInstance> instances,
                                           std::span<const std::size_t> which) {
  const auto dim = static_cast<Eigen::Index>(which.empty() ? 0 : instances[which[0]].values.size());
  typename Mlp<Scalar>::Matrix m(dim, static_cast<Eigen::Index>(which.size()));
  for (std::size_t j = 0; j < which.size(); ++j) {
    const auto& v = instances[which[j]].values;
    if (static_cast<Eigen::Index>(v.size()) != dim) throw Error(Errc::DimMismatch, "ragged instances");
    for (Eigen::Index i = 0; i < dim; ++i) m(i, static_cast<Eigen::Index>(j)) = static_cast<Scalar>(v[i]);
  }
  return m;
}

/// Mean Eval-mode cross-entropy over all columns.
template <typename Scalar>
double mean_loss(const Mlp<Scalar>& model, const typename Mlp<Scalar>::Matrix& x,
                 std::span<const int> labels) {
  const auto z = model.logits(x, ForwardMode::eval());
  double loss = 0;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const auto p = Mlp<Scalar>::softmax_column(z, c);
    loss -= std::log(std::max(p[labels[c]], 1e-300));
  }
  return z.cols() ? loss / static_cast<double>(z.cols()) : 0.0;
}

template <typename Scalar = float>
struct TrainResult {
  Mlp<Scalar> model;
  double validation_accuracy = 0;
  double initial_train_loss = 0;  // Eval-mode, before the first step
  double final_train_loss = 0;    // Eval-mode, after the last epoch
  std::vector<double> epoch_losses;  // mean minibatch loss per epoch
  EventSplit split;
  std::vector<int> validation_truth;
  std::vector<int> validation_predictions;
};

/// Trains a fresh model on the train side of an event split and scores it on
/// the validation side.
template <typename Scalar = float>
TrainResult<Scalar> train(const MlpArchitecture& arch, std::span<const FeatureInstance> instances,
                          const TrainConfig& cfg) {
  cfg.validate();
  check_training_set(instances);
  const EventSplit split = split_by_event(instances, cfg.train_fraction, cfg.seed);
  const int dim = static_cast<int>(instances.front().values.size());

  TrainResult<Scalar> result{init_model<Scalar>(arch, dim, cfg.seed), 0, 0, 0, {}, split, {}, {}};
  auto& model = result.model;

  const auto x_train = stack_columns<Scalar>(instances, split.train);
  std::vector<int> y_train;
  for (auto i : split.train) y_train.push_back(to_int(instances[i].class_label));
  result.initial_train_loss = mean_loss(model, x_train, y_train);

  Rng order_rng(sub_seed(cfg.seed, "shuffle"));
  Rng dropout_rng(sub_seed(cfg.seed, "dropout"));
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  typename Mlp<Scalar>::Matrix batch;
  std::vector<int> batch_labels;
  const auto lr = static_cast<Scalar>(arch.learning_rate);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.resize(x_train.rows(), static_cast<Eigen::Index>(end - start));
      batch_labels.clear();
      for (std::size_t j = start; j < end; ++j) {
        batch.col(static_cast<Eigen::Index>(j - start)) = x_train.col(static_cast<Eigen::Index>(order[j]));
        batch_labels.push_back(y_train[order[j]]);
      }
      const double loss = model.sgd_step(batch, batch_labels, lr, ForwardMode::train(dropout_rng));
      epoch_loss += loss * static_cast<double>(end - start);
    }
    epoch_loss /= static_cast<double>(order.size());
    result.epoch_losses.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss) || !model.all_finite()) {
      throw Error(Errc::TrainingDiverged, "non-finite loss in epoch " + std::to_string(epoch + 1));
    }
  }
  result.final_train_loss = mean_loss(model, x_train, y_train);

  if (!split.validation.empty()) {
    const auto x_val = stack_columns<Scalar>(instances, split.validation);
    result.validation_predictions = model.predict_batch(x_val);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < split.validation.size(); ++j) {
      const int truth = to_int(instances[split.validation[j]].class_label);
      result.validation_truth.push_back(truth);
      if (truth == result.validation_predictions[j]) ++correct;
    }
    result.validation_accuracy = static_cast<double>(correct) / static_cast<double>(split.validation.size());
  }
  return result;
}

}  // namespace pmuclass
