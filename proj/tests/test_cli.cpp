#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pmuclass/bayes_opt.hpp"
#include "pmuclass/csv.hpp"
#include "pmuclass/ingest.hpp"
#include "pmuclass/metrics.hpp"
#include "pmuclass/search_space.hpp"
#include "pmuclass/tuning.hpp"

namespace fs = std::filesystem;
using namespace pmuclass;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pmuclass_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + PMUCLASS_CLI + "\" " + args + " --quiet > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json tiny_config(std::uint64_t seed = 7) {
  return {{"seed", seed},
          {"synth",
           {{"events_per_class", {3, 3, 3, 3}}, {"pmus", 2}, {"fps", 30}, {"noise_std", 1e-3}, {"missing_rate", 0.01}}},
          {"feature", "rocof"},
          {"train", {{"epochs", 3}, {"batch_size", 16}, {"train_fraction", 0.75}}},
          {"bo", {{"n_calls", 3}, {"n_init", 2}, {"xi", 0.01}}},
          {"experiment", {{"features", {"rocof"}}, {"weeks", {12}}, {"fps", {30}}, {"base_weeks", 12}}}};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j, const std::string& name = "config.json") {
  const auto p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

/// Relative path -> contents for every file outside logs/.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).string();
    if (rel.starts_with("logs")) continue;
    out[rel] = slurp(e.path());
  }
  return out;
}

int count_rows(const fs::path& csv_path) { return static_cast<int>(lines_of(csv_path).size()) - 1; }

}  // namespace

TEST(Cli, EveryCommandIsByteDeterministic) {
  const auto dir = scratch("determinism");
  auto cfg = tiny_config();
  cfg["experiment"]["features"] = {"gv", "gi", "gv-angle", "gf", "rocof"};
  cfg["experiment"]["weeks"] = {6, 12};
  const auto config = write_config(dir, cfg);
  for (const char* out : {"a", "b"}) {
    for (const char* cmd : {"generate", "preprocess", "tune", "train", "evaluate", "experiment", "report"}) {
      ASSERT_EQ(run(std::string(cmd) + " --config " + config.string() + " --out " + (dir / out).string()), 0)
          << cmd;
    }
  }
  const auto a = tree(dir / "a"), b = tree(dir / "b");
  EXPECT_GT(a.size(), 40u);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [rel, contents] : a) {
    ASSERT_TRUE(b.count(rel)) << rel;
    EXPECT_EQ(contents, b.at(rel)) << rel;
  }
  EXPECT_TRUE(fs::exists(dir / "a" / "logs" / "tune.log"));
  // 5 features x 2 sizes x 1 fps.
  EXPECT_EQ(count_rows(dir / "a" / "experiment" / "table.csv"), 10);
}

TEST(Cli, ManifestCountsMatchEventLog) {
  const auto dir = scratch("manifest");
  auto cfg = tiny_config();
  cfg["synth"]["events_per_class"] = {2, 5, 1, 4};
  ASSERT_EQ(run("generate --config " + write_config(dir, cfg).string() + " --out " + (dir / "out").string()), 0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "data" / "manifest.json"));
  const auto log = parse_event_log(dir / "out" / "data" / "events.csv");
  EXPECT_EQ(manifest.at("n_events").get<std::size_t>(), log.size());
  EXPECT_EQ(count_rows(dir / "out" / "data" / "events.csv"), 12);
  std::map<std::string, int> tally;
  for (const auto& e : log) ++tally[std::string(kClassNames[to_int(e.class_label)])];
  for (const auto& [name, n] : manifest.at("events_per_class").items()) EXPECT_EQ(tally[name], n.get<int>()) << name;
  EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 7u);
}

TEST(Cli, EmptyCountsGiveHeaderOnlyOutputs) {
  const auto dir = scratch("empty");
  auto cfg = tiny_config();
  cfg["synth"]["events_per_class"] = {0, 0, 0, 0};
  const auto config = write_config(dir, cfg);
  const auto out = dir / "out";
  ASSERT_EQ(run("generate --config " + config.string() + " --out " + out.string()), 0);
  EXPECT_EQ(lines_of(out / "data" / "events.csv"), std::vector<std::string>{std::string(kEventLogHeader)});
  ASSERT_EQ(run("preprocess --config " + config.string() + " --out " + out.string()), 0);
  EXPECT_EQ(count_rows(out / "features" / "rocof.csv"), 0);
  EXPECT_EQ(count_rows(out / "features" / "rocof_dropped.csv"), 0);
}

TEST(Cli, DropReportPlusInstancesEqualsCandidatePairs) {
  const auto dir = scratch("drops");
  const auto gen = dir / "gen";
  ASSERT_EQ(run("generate --config " + write_config(dir, tiny_config()).string() + " --out " + gen.string()), 0);

  // Add events outside stream coverage and a PMU with a gappy stream.
  auto log = parse_event_log(gen / "data" / "events.csv");
  const auto late = log.back().utc_time + std::chrono::hours{30};
  log.push_back({"EV9001", late, EventClass::Oscillation});
  log.push_back({"EV9002", late + std::chrono::minutes{10}, EventClass::LineOutage});
  write_event_log(dir / "events.csv", log);
  fs::copy(gen / "data" / "streams", dir / "streams");
  auto channels = parse_stream_file(dir / "streams" / "PMU02_2016-01-01.csv");
  for (auto& ch : channels) {
    ch.pmu_id = "PMU99";
    for (std::size_t k = 0; k < ch.size(); k += 4) ch.samples.set(k, std::nullopt);
  }
  write_stream_file(dir / "streams" / "PMU99_2016-01-01.csv", channels);

  auto cfg = tiny_config();
  cfg.erase("synth");
  cfg["data"] = {{"streams_dir", (dir / "streams").string()}, {"event_log", (dir / "events.csv").string()}};
  const auto out = dir / "out";
  ASSERT_EQ(run("preprocess --config " + write_config(dir, cfg).string() + " --out " + out.string()), 0);
  const auto summary = nlohmann::json::parse(slurp(out / "features" / "summary.json"));
  const std::size_t pairs = log.size() * 3;
  for (FeatureKind k : kAllFeatureKinds) {
    const std::string name(to_string(k));
    const int instances = count_rows(out / "features" / (name + ".csv"));
    const auto dropped = lines_of(out / "features" / (name + "_dropped.csv"));
    EXPECT_EQ(static_cast<std::size_t>(instances) + dropped.size() - 1, pairs) << name;
    EXPECT_EQ(summary.at(name).at("candidates").get<std::size_t>(), pairs);
    // Two uncovered events on 3 PMUs plus every PMU99 window inside coverage.
    EXPECT_EQ(dropped.size() - 1, 2 * 3 + (log.size() - 2)) << name;
    int out_of_range = 0, too_many_missing = 0;
    for (std::size_t i = 1; i < dropped.size(); ++i) {
      out_of_range += dropped[i].find(",WindowOutOfRange,") != std::string::npos;
      too_many_missing += dropped[i].find(",TooManyMissing,") != std::string::npos;
    }
    EXPECT_EQ(out_of_range, 6);
    EXPECT_EQ(too_many_missing, static_cast<int>(log.size()) - 2);
  }
}

TEST(Cli, TuneSmokeRunPersistsConsistentArtifacts) {
  const auto dir = scratch("tune");
  const auto config = write_config(dir, tiny_config());
  const auto out = dir / "out";
  ASSERT_EQ(run("generate --config " + config.string() + " --out " + out.string()), 0);
  ASSERT_EQ(run("preprocess --feature rocof --config " + config.string() + " --out " + out.string()), 0);
  EXPECT_FALSE(fs::exists(out / "features" / "gv.csv"));
  ASSERT_EQ(run("tune --config " + config.string() + " --out " + out.string()), 0);

  const auto space = SearchSpace::mlp_default();
  const auto history = read_history(out / "tune" / "history.csv", space);
  ASSERT_EQ(history.size(), 3u);
  double max_objective = -1;
  for (const auto& t : history) max_objective = std::max(max_objective, t.objective);
  const auto best = nlohmann::json::parse(slurp(out / "tune" / "best_architecture.json"));
  EXPECT_EQ(best.at("objective").get<double>(), max_objective);

  // Metrics recomputed from the persisted predictions by an independent tally.
  const auto preds = read_predictions(out / "tune" / "predictions.csv");
  ASSERT_FALSE(preds.empty());
  long correct = 0;
  long counts[4][4] = {};
  for (const auto& p : preds) {
    correct += p.truth == p.pred;
    ++counts[p.truth][p.pred];
  }
  const auto metrics = nlohmann::json::parse(slurp(out / "tune" / "metrics.json"));
  EXPECT_EQ(metrics.at("accuracy").get<double>(), static_cast<double>(correct) / static_cast<double>(preds.size()));
  EXPECT_EQ(metrics.at("accuracy").get<double>(), best.at("objective").get<double>());
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) EXPECT_EQ(metrics.at("confusion")[t][p].get<long>(), counts[t][p]);
  std::vector<std::string> keys;
  for (const auto& [k, v] : metrics.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"accuracy", "confusion", "macro", "per_class", "weighted"}));

  // Re-running resumes from the complete history and changes nothing.
  const auto before = tree(out / "tune");
  ASSERT_EQ(run("tune --config " + config.string() + " --out " + out.string()), 0);
  EXPECT_EQ(tree(out / "tune"), before);

  // A truncated history is completed to the same result.
  auto rows = lines_of(out / "tune" / "history.csv");
  rows.pop_back();
  {
    std::ofstream f(out / "tune" / "history.csv");
    for (const auto& r : rows) f << r << '\n';
  }
  ASSERT_EQ(run("tune --config " + config.string() + " --out " + out.string()), 0);
  EXPECT_EQ(tree(out / "tune"), before);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  auto bad = tiny_config();
  bad["bogus"] = 1;
  EXPECT_EQ(run("generate --config " + write_config(dir, bad, "bad.json").string()), 2);
  EXPECT_EQ(run("generate --config " + (dir / "absent.json").string()), 2);
  auto both = tiny_config();
  both["data"] = {{"streams_dir", "x"}, {"event_log", "y"}};
  EXPECT_EQ(run("generate --config " + write_config(dir, both, "both.json").string()), 2);

  const auto config = write_config(dir, tiny_config());
  const auto out = dir / "out";
  EXPECT_EQ(run("preprocess --config " + config.string() + " --out " + out.string()), 3);
  EXPECT_EQ(run("tune --config " + config.string() + " --out " + out.string()), 3);
  EXPECT_EQ(run("report --config " + config.string() + " --out " + out.string()), 3);

  auto one = tiny_config();
  one["synth"]["events_per_class"] = {3, 1, 3, 3};
  const auto one_cfg = write_config(dir, one, "one.json");
  const auto out1 = dir / "out1";
  ASSERT_EQ(run("generate --config " + one_cfg.string() + " --out " + out1.string()), 0);
  ASSERT_EQ(run("preprocess --config " + one_cfg.string() + " --out " + out1.string()), 0);
  EXPECT_EQ(run("tune --config " + one_cfg.string() + " --out " + out1.string()), 4);
}

TEST(Cli, FlagsOverrideConfig) {
  const auto dir = scratch("flags");
  const auto config = write_config(dir, tiny_config());
  const auto out = dir / "out";
  ASSERT_EQ(run("generate --seed 99 --fps 60 --config " + config.string() + " --out " + out.string()), 0);
  const auto manifest = nlohmann::json::parse(slurp(out / "data" / "manifest.json"));
  EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 99u);
  EXPECT_EQ(manifest.at("fps").get<int>(), 60);
  EXPECT_EQ(run("generate --fps 45 --config " + config.string() + " --out " + out.string()), 2);
}

TEST(Cli, SingleCellExperimentTableRecomputesFromPredictions) {
  const auto dir = scratch("cell");
  const auto out = dir / "out";
  ASSERT_EQ(run("experiment --config " + write_config(dir, tiny_config()).string() + " --out " + out.string()), 0);
  const auto rows = lines_of(out / "experiment" / "table.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "feature,weeks,fps,acc,pre,rec,f1,error");
  const auto f = csv::split(rows[1]);
  ASSERT_EQ(f.size(), 8u);
  EXPECT_EQ(f[7], "");
  const auto r = report_from(read_predictions(out / "experiment" / "cells" / "rocof_w12_f30" / "predictions.csv"));
  EXPECT_EQ(csv::parse_real(f[3], "acc"), r.accuracy);
  EXPECT_EQ(csv::parse_real(f[4], "pre"), r.weighted.precision);
  EXPECT_EQ(csv::parse_real(f[5], "rec"), r.weighted.recall);
  EXPECT_EQ(csv::parse_real(f[6], "f1"), r.weighted.f1);
  EXPECT_EQ(count_rows(out / "experiment" / "long.csv"), 4);
}

TEST(Cli, FailedCellsAreRecordedAndTheRunContinues) {
  const auto dir = scratch("failcell");
  auto cfg = tiny_config();
  // One week scales 3 events per class down to 0: no instances.
  cfg["experiment"]["weeks"] = {1, 12};
  const auto out = dir / "out";
  ASSERT_EQ(run("experiment --config " + write_config(dir, cfg).string() + " --out " + out.string()), 0);
  const auto rows = lines_of(out / "experiment" / "table.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[1].starts_with("rocof,1,30,,,,,")) << rows[1];
  EXPECT_GT(rows[1].size(), std::string("rocof,1,30,,,,,").size());
  EXPECT_TRUE(rows[2].ends_with(",")) << rows[2];
}

TEST(Cli, SmallNoiseBeatsLargeNoiseAcrossSeeds) {
  const auto dir = scratch("noise");
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double acc[2];
    for (int arm = 0; arm < 2; ++arm) {
      auto cfg = tiny_config(seed);
      cfg["synth"]["events_per_class"] = {6, 6, 6, 6};
      cfg["synth"]["pmus"] = 3;
      cfg["synth"]["noise_std"] = arm == 0 ? 1e-3 : 0.3;
      cfg["train"]["epochs"] = 10;
      cfg["bo"]["n_calls"] = 4;
      const auto name = "s" + std::to_string(seed) + "_" + std::to_string(arm);
      const auto out = dir / name;
      ASSERT_EQ(run("experiment --config " + write_config(dir, cfg, name + ".json").string() + " --out " +
                    out.string()),
                0);
      const auto rows = lines_of(out / "experiment" / "table.csv");
      ASSERT_EQ(rows.size(), 2u);
      acc[arm] = csv::parse_real(csv::split(rows[1])[3], "acc");
    }
    wins += acc[0] >= acc[1];
  }
  EXPECT_GE(wins, 8);
}
