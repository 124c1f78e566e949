#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pmuclass/config.hpp"
#include "pmuclass/experiment.hpp"

using namespace pmuclass;
using nlohmann::json;

namespace {

json minimal() { return {{"synth", {{"events_per_class", {2, 2, 2, 2}}}}}; }

Errc code_of(const json& j) {
  try {
    parse_run_config(j);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for " << j.dump();
  return Errc::Io;
}

}  // namespace

TEST(RunConfig, DefaultsFollowTheHomeModules) {
  const auto c = parse_run_config(minimal());
  EXPECT_EQ(c.bo.n_calls, 100);
  EXPECT_EQ(c.bo.n_init, 10);
  EXPECT_EQ(c.bo.xi, 0.01);
  EXPECT_EQ(c.train.epochs, 30);
  EXPECT_EQ(c.train.batch_size, 16);
  EXPECT_EQ(c.train.train_fraction, 0.75);
  EXPECT_EQ(c.feature, FeatureKind::ROCOF);
  EXPECT_EQ(c.fps, 0);
  EXPECT_TRUE(c.normalize);
  EXPECT_EQ(c.synth->pmus, 5);
}

TEST(RunConfig, StageSeedsAreDistinctAndStable) {
  auto j = minimal();
  j["seed"] = 11;
  const auto c = parse_run_config(j);
  EXPECT_NE(c.generate_seed(), c.train_seed());
  EXPECT_NE(c.train_seed(), c.bo_seed());
  EXPECT_EQ(c.synth_config().seed, sub_seed(11, "generate"));
  EXPECT_EQ(c.train_config().seed, sub_seed(11, "train"));
  EXPECT_EQ(c.bo_options().seed, sub_seed(11, "bo"));
}

TEST(RunConfig, RejectsUnknownKeysAtEveryLevel) {
  for (const char* section : {"synth", "train", "bo", "experiment"}) {
    auto j = minimal();
    j[section]["nope"] = 1;
    EXPECT_EQ(code_of(j), Errc::InvalidConfig) << section;
  }
  auto j = minimal();
  j["nope"] = 1;
  EXPECT_EQ(code_of(j), Errc::InvalidConfig);
}

TEST(RunConfig, ExactlyOneDataSource) {
  EXPECT_EQ(code_of(json::object()), Errc::InvalidConfig);
  auto j = minimal();
  j["data"] = {{"streams_dir", "s"}, {"event_log", "e"}};
  EXPECT_EQ(code_of(j), Errc::InvalidConfig);
  j.erase("synth");
  EXPECT_EQ(parse_run_config(j).data->event_log, "e");
}

TEST(RunConfig, RejectsOutOfRangeValues) {
  const std::vector<std::pair<json::json_pointer, json>> bad = {
      {json::json_pointer("/fps"), 50},
      {json::json_pointer("/feature"), "volts"},
      {json::json_pointer("/bo/n_init"), 1},
      {json::json_pointer("/bo/n_calls"), 5},
      {json::json_pointer("/train/train_fraction"), 1.0},
      {json::json_pointer("/synth/events_per_class"), json::array({1, 2, 3})},
      {json::json_pointer("/synth/start_day"), "2016-13-01"},
      {json::json_pointer("/experiment/weeks"), json::array({0})},
      {json::json_pointer("/architecture"), {{"learning_rate", 1.0}}},
      {json::json_pointer("/architecture"), to_json(MlpArchitecture{1e-3, 2, 64, 0.2, 0.3, Activation::ReLU})},
      {json::json_pointer("/seed"), "seven"},
  };
  for (const auto& [ptr, value] : bad) {
    auto j = minimal();
    j[ptr] = value;
    EXPECT_EQ(code_of(j), Errc::InvalidConfig) << ptr.to_string();
  }
}

TEST(RunConfig, ArchitectureAndGridParse) {
  auto j = minimal();
  j["architecture"] = to_json(MlpArchitecture{1e-3, 2, 64, 0.5, 0.3, Activation::ReLU});
  j["experiment"] = {{"features", {"gv", "gf"}}, {"weeks", {6, 12}}, {"fps", {30, 60}}, {"base_weeks", 12}};
  const auto c = parse_run_config(j);
  EXPECT_EQ(c.architecture->nodes_per_layer, 64);
  EXPECT_EQ(grid_cells(c.experiment).size(), 8u);
}

TEST(Experiment, SyntheticCountsScaleWithWeeks) {
  SynthConfig s;
  s.events_per_class = {50, 50, 50, 50};
  const auto half = scaled_synth(s, 6, 12, 30);
  EXPECT_EQ(half.events_per_class, (std::array<int, 4>{25, 25, 25, 25}));
  EXPECT_EQ(half.fps, 30);
  EXPECT_EQ(scaled_synth(s, 24, 12, 60).events_per_class[0], 100);
}

TEST(Experiment, FirstWeeksSlicesByCalendarDay) {
  std::vector<EventLogEntry> log;
  const UtcTime t0{Day{std::chrono::year{2016} / 3 / 1}};
  for (int d : {0, 3, 6, 7, 13, 14})
    log.push_back({"E" + std::to_string(d), t0 + std::chrono::days{d} + std::chrono::hours{23}, EventClass::LineOutage});
  EXPECT_EQ(first_weeks(log, 1).size(), 3u);
  EXPECT_EQ(first_weeks(log, 2).size(), 5u);
  EXPECT_EQ(first_weeks(log, 3).size(), 6u);
}
