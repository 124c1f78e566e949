#pragma once

// Run configuration: one JSON document drives every command.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmuclass/bayes_opt.hpp"
#include "pmuclass/error.hpp"
#include "pmuclass/mlp.hpp"
#include "pmuclass/synth.hpp"
#include "pmuclass/train.hpp"
#include "pmuclass/types.hpp"
#include "pmuclass/utc.hpp"

namespace pmuclass {

struct DataPaths {
  std::filesystem::path streams_dir;
  std::filesystem::path event_log;
};

/// Grid of (feature, weeks, fps) cells. In synthetic mode the per-class
/// event counts of `synth` describe `base_weeks` weeks and scale linearly.
struct ExperimentGrid {
  std::vector<FeatureKind> features{FeatureKind::ROCOF};
  std::vector<int> weeks{12};
  std::vector<int> fps{60};
  int base_weeks = 12;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  std::optional<DataPaths> data;
  std::optional<SynthConfig> synth;
  FeatureKind feature = FeatureKind::ROCOF;
  int fps = 0;  // 0 keeps every rate
  bool normalize = true;
  double max_gap_ratio = kDefaultMaxGapRatio;
  TrainConfig train;
  BoOptions bo;
  std::optional<MlpArchitecture> architecture;
  ExperimentGrid experiment;
  bool event_vote = true;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
    if (data.has_value() == synth.has_value()) bad("exactly one of 'data' and 'synth' must be present");
    if (synth) synth->validate();
    if (fps != 0 && !is_supported_fps(fps)) bad("fps must be 30 or 60");
    if (!(max_gap_ratio >= 0 && max_gap_ratio < 1)) bad("max_gap_ratio must lie in [0, 1)");
    train.validate();
    bo.validate();
    if (architecture) architecture->validate();
    if (experiment.features.empty() || experiment.weeks.empty() || experiment.fps.empty())
      bad("experiment grid dimensions must be non-empty");
    for (int w : experiment.weeks)
      if (w < 1) bad("experiment weeks must be >= 1");
    for (int f : experiment.fps)
      if (!is_supported_fps(f)) bad("experiment fps must be 30 or 60");
    if (experiment.base_weeks < 1) bad("experiment.base_weeks must be >= 1");
  }

  /// Seeds for the independent stages, all derived from `seed`.
  std::uint64_t generate_seed() const { return sub_seed(seed, "generate"); }
  std::uint64_t train_seed() const { return sub_seed(seed, "train"); }
  std::uint64_t bo_seed() const { return sub_seed(seed, "bo"); }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = train_seed();
    return t;
  }
  BoOptions bo_options() const {
    BoOptions b = bo;
    b.seed = bo_seed();
    return b;
  }
  SynthConfig synth_config() const {
    SynthConfig s = synth.value();
    s.seed = generate_seed();
    s.max_gap_ratio = max_gap_ratio;
    return s;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw Error(Errc::InvalidConfig, "unknown key '" + it.key() + "' in " + where);
  }
}

inline FeatureKind feature_from_json(const nlohmann::json& j) {
  const auto s = j.get<std::string>();
  const auto k = parse_feature_kind(s);
  if (!k) throw Error(Errc::InvalidConfig, "unknown feature '" + s + "'");
  return *k;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::check_keys(j, "config",
                       {"seed", "output_dir", "data", "synth", "feature", "fps", "normalize", "max_gap_ratio",
                        "train", "bo", "architecture", "experiment", "event_vote"});
    c.seed = j.value("seed", std::uint64_t{0});
    c.output_dir = j.value("output_dir", std::string("out"));
    if (j.contains("data")) {
      const auto& d = j["data"];
      detail::check_keys(d, "data", {"streams_dir", "event_log"});
      c.data = DataPaths{d.at("streams_dir").get<std::string>(), d.at("event_log").get<std::string>()};
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      detail::check_keys(s, "synth",
                         {"events_per_class", "pmus", "fps", "noise_std", "missing_rate", "start_day",
                          "events_per_day"});
      SynthConfig sc;
      const auto counts = s.at("events_per_class").get<std::vector<int>>();
      if (counts.size() != kNumClasses) throw Error(Errc::InvalidConfig, "events_per_class needs 4 entries");
      std::copy(counts.begin(), counts.end(), sc.events_per_class.begin());
      sc.pmus = s.value("pmus", sc.pmus);
      sc.fps = s.value("fps", sc.fps);
      sc.noise_std = s.value("noise_std", sc.noise_std);
      sc.missing_rate = s.value("missing_rate", sc.missing_rate);
      sc.events_per_day = s.value("events_per_day", sc.events_per_day);
      if (s.contains("start_day")) {
        const auto day = parse_iso_date(s["start_day"].get<std::string>());
        if (!day) throw Error(Errc::InvalidConfig, "synth.start_day must be YYYY-MM-DD");
        sc.start_day = *day;
      }
      c.synth = sc;
    }
    if (j.contains("feature")) c.feature = detail::feature_from_json(j["feature"]);
    c.fps = j.value("fps", 0);
    c.normalize = j.value("normalize", true);
    c.max_gap_ratio = j.value("max_gap_ratio", kDefaultMaxGapRatio);
    c.event_vote = j.value("event_vote", true);
    if (j.contains("train")) {
      const auto& t = j["train"];
      detail::check_keys(t, "train", {"epochs", "batch_size", "train_fraction"});
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.train_fraction = t.value("train_fraction", c.train.train_fraction);
    }
    if (j.contains("bo")) {
      const auto& b = j["bo"];
      detail::check_keys(b, "bo", {"n_calls", "n_init", "xi"});
      c.bo.n_calls = b.value("n_calls", c.bo.n_calls);
      c.bo.n_init = b.value("n_init", c.bo.n_init);
      c.bo.xi = b.value("xi", c.bo.xi);
    }
    if (j.contains("architecture")) c.architecture = architecture_from_json(j["architecture"]);
    if (j.contains("experiment")) {
      const auto& e = j["experiment"];
      detail::check_keys(e, "experiment", {"features", "weeks", "fps", "base_weeks"});
      if (e.contains("features")) {
        c.experiment.features.clear();
        for (const auto& f : e["features"]) c.experiment.features.push_back(detail::feature_from_json(f));
      }
      c.experiment.weeks = e.value("weeks", c.experiment.weeks);
      c.experiment.fps = e.value("fps", c.experiment.fps);
      c.experiment.base_weeks = e.value("base_weeks", c.experiment.base_weeks);
    }
    c.validate();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::InvalidConfig) throw;
    throw Error(Errc::InvalidConfig, e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

}  // namespace pmuclass
