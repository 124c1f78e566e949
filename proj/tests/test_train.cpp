#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "pmuclass/pipeline.hpp"
#include "pmuclass/synth.hpp"
#include "pmuclass/train.hpp"

using namespace pmuclass;

namespace {

std::vector<FeatureInstance> synthetic_instances(std::array<int, 4> per_class, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.events_per_class = per_class;
  cfg.pmus = 3;
  cfg.fps = 30;
  cfg.noise_std = 1e-4;
  cfg.seed = seed;
  const auto ds = generate_dataset(cfg);
  return extract_instances(ds.channels, ds.log, FeatureKind::ROCOF).instances;
}

MlpArchitecture default_arch() {
  MlpArchitecture a;
  a.learning_rate = 0.01;
  a.n_hidden_layers = 1;
  a.nodes_per_layer = 50;
  a.input_dropout = 0.4;
  a.hidden_dropout = 0.2;
  a.activation = Activation::ReLU;
  return a;
}

const std::vector<FeatureInstance>& four_class_set() {
  static const auto data = synthetic_instances({12, 12, 12, 12}, 5);
  return data;
}

}  // namespace

TEST(Split, ByEventAndStratified) {
  const auto& data = four_class_set();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto split = split_by_event(data, 0.75, seed);
    EXPECT_EQ(split.train.size() + split.validation.size(), data.size());
    std::set<std::string> train_events, val_events;
    for (auto i : split.train) train_events.insert(data[i].event_id);
    for (auto i : split.validation) val_events.insert(data[i].event_id);
    for (const auto& e : train_events) EXPECT_EQ(val_events.count(e), 0u) << e;
    // 12 events per class -> 9 train, 3 validation in every class.
    std::array<std::set<std::string>, 4> per_class;
    for (auto i : split.train) per_class[to_int(data[i].class_label)].insert(data[i].event_id);
    for (const auto& s : per_class) EXPECT_EQ(s.size(), 9u);
  }
}

TEST(Split, TinyClassesKeepOneEventOnEachSide) {
  std::vector<FeatureInstance> data;
  for (int e = 0; e < 2; ++e) {
    FeatureInstance f;
    f.event_id = "E" + std::to_string(e);
    f.values = {0.0, 1.0};
    data.push_back(f);
  }
  const auto split = split_by_event(data, 0.9, 1);
  EXPECT_EQ(split.train.size(), 1u);
  EXPECT_EQ(split.validation.size(), 1u);
}

TEST(Train, Preconditions) {
  auto data = four_class_set();
  TrainConfig cfg;
  cfg.epochs = 1;

  auto mixed = data;
  mixed[3].feature_kind = FeatureKind::GF;
  try {
    train(default_arch(), mixed, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MixedFeatureKinds);
  }
  auto mixed_fps = data;
  mixed_fps[0].fps = 60;
  EXPECT_THROW(train(default_arch(), mixed_fps, cfg), Error);

  // Keep a single oscillation event.
  std::vector<FeatureInstance> lonely;
  std::string kept;
  for (const auto& f : data) {
    if (f.class_label != EventClass::Oscillation) {
      lonely.push_back(f);
    } else if (kept.empty() || f.event_id == kept) {
      kept = f.event_id;
      lonely.push_back(f);
    }
  }
  try {
    train(default_arch(), lonely, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientData);
  }
  cfg.train_fraction = 1.0;
  EXPECT_THROW(train(default_arch(), data, cfg), Error);
}

TEST(Train, DeterministicPerSeed) {
  const auto& data = four_class_set();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 21;
  const auto a = train(default_arch(), data, cfg);
  const auto b = train(default_arch(), data, cfg);
  EXPECT_EQ(a.validation_accuracy, b.validation_accuracy);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  for (std::size_t l = 0; l < a.model.layers().size(); ++l) {
    EXPECT_EQ(a.model.layers()[l].weights, b.model.layers()[l].weights);
  }
}

TEST(Train, LossDecreasesOverThirtyEpochs) {
  const auto& data = four_class_set();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    const auto r = train(default_arch(), data, cfg);
    EXPECT_LT(r.final_train_loss, r.initial_train_loss) << "seed " << seed;
    EXPECT_EQ(r.epoch_losses.size(), 30u);
  }
}

TEST(Train, SeparatesTwoCleanClasses) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = synthetic_instances({0, 12, 12, 0}, 100 + seed);
    TrainConfig cfg;
    cfg.seed = seed;
    const auto r = train(default_arch(), data, cfg);
    EXPECT_GE(r.validation_accuracy, 0.99) << "seed " << seed;
  }
}

TEST(Train, ShuffledLabelsScoreNearChance) {
  const auto& data = four_class_set();
  double total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    // Permute labels across events so instances of one event stay consistent.
    std::vector<std::string> events;
    std::vector<EventClass> labels;
    for (const auto& f : data) {
      if (events.empty() || events.back() != f.event_id) {
        events.push_back(f.event_id);
        labels.push_back(f.class_label);
      }
    }
    Rng rng(sub_seed(seed, "permute"));
    std::shuffle(labels.begin(), labels.end(), rng);
    auto shuffled = data;
    for (auto& f : shuffled) {
      const auto it = std::find(events.begin(), events.end(), f.event_id);
      f.class_label = labels[static_cast<std::size_t>(it - events.begin())];
    }
    TrainConfig cfg;
    cfg.seed = seed;
    total += train(default_arch(), shuffled, cfg).validation_accuracy;
  }
  const double mean = total / 10;
  EXPECT_GE(mean, 0.15);
  EXPECT_LE(mean, 0.35);
}
