// pmuclass command-line driver.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pmuclass/bayes_opt.hpp"
#include "pmuclass/config.hpp"
#include "pmuclass/error.hpp"
#include "pmuclass/experiment.hpp"
#include "pmuclass/ingest.hpp"
#include "pmuclass/metrics.hpp"
#include "pmuclass/mlp.hpp"
#include "pmuclass/pipeline.hpp"
#include "pmuclass/preprocess.hpp"
#include "pmuclass/search_space.hpp"
#include "pmuclass/synth.hpp"
#include "pmuclass/train.hpp"
#include "pmuclass/tuning.hpp"

namespace fs = std::filesystem;
using namespace pmuclass;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kInvalidConfig = 2, kMissingInput = 3, kTooFewEvents = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> fps;
  std::optional<std::string> feature;
  bool quiet = false;
};

class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Timestamped lines go to out/logs/<cmd>.log; the summary goes to stdout.
class RunLog {
 public:
  RunLog(const fs::path& out, const std::string& cmd, bool quiet) : quiet_(quiet) {
    fs::create_directories(out / "logs");
    file_.open(out / "logs" / (cmd + ".log"), std::ios::app);
  }

  void log(const std::string& msg) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    file_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
    file_.flush();
  }

  void summary(const std::string& msg) {
    log(msg);
    if (!quiet_) std::cout << msg << '\n';
  }

 private:
  std::ofstream file_;
  bool quiet_;
};

RunConfig load_config(const Overrides& o) {
  if (o.config.empty()) throw Error(Errc::InvalidConfig, "--config is required");
  if (!fs::exists(o.config)) throw Error(Errc::InvalidConfig, "config file not found: " + o.config);
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.fps) {
    cfg.fps = *o.fps;
    if (cfg.synth) cfg.synth->fps = *o.fps;
    cfg.experiment.fps = {*o.fps};
  }
  if (o.feature) {
    const auto k = parse_feature_kind(*o.feature);
    if (!k) throw Error(Errc::InvalidConfig, "unknown feature '" + *o.feature + "'");
    cfg.feature = *k;
    cfg.experiment.features = {*k};
  }
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = csv::open_output(path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  auto in = csv::open_input(path.string());
  return nlohmann::json::parse(in);
}

void require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw MissingInput("missing input " + p.string() + " (" + hint + ")");
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

/// Re-reads a metrics document and checks its key set.
void validate_metrics_json(const fs::path& path) {
  const auto j = read_json(path);
  const std::vector<std::string> keys = {"accuracy", "confusion", "macro", "per_class", "weighted"};
  std::vector<std::string> got;
  for (auto it = j.begin(); it != j.end(); ++it) got.push_back(it.key());
  if (got != keys) throw Error(Errc::MalformedRow, path.string() + " does not have the metrics key set");
}

/// Writes predictions and metrics, then checks that the persisted predictions
/// reproduce the metrics.
void write_evaluation(const fs::path& dir, const std::vector<Prediction>& preds, bool event_vote) {
  write_predictions(dir / "predictions.csv", preds);
  const auto report = report_from(preds);
  write_json(dir / "metrics.json", to_json(report));
  if (event_vote) write_json(dir / "metrics_event_vote.json", to_json(event_vote_report_from(preds)));
  validate_metrics_json(dir / "metrics.json");
  if (to_json(report_from(read_predictions(dir / "predictions.csv"))) != read_json(dir / "metrics.json"))
    throw Error(Errc::MalformedRow, "persisted predictions do not reproduce " + (dir / "metrics.json").string());
}

struct Inputs {
  fs::path streams_dir;
  fs::path event_log;
};

Inputs data_inputs(const RunConfig& cfg) {
  Inputs in = cfg.data ? Inputs{cfg.data->streams_dir, cfg.data->event_log}
                       : Inputs{cfg.output_dir / "data" / "streams", cfg.output_dir / "data" / "events.csv"};
  require(in.streams_dir, cfg.data ? "data.streams_dir" : "run 'generate' first");
  require(in.event_log, cfg.data ? "data.event_log" : "run 'generate' first");
  return in;
}

std::vector<FeatureInstance> load_features(const RunConfig& cfg) {
  const auto path = cfg.output_dir / "features" / (std::string(to_string(cfg.feature)) + ".csv");
  require(path, "run 'preprocess' first");
  auto all = read_feature_csv(path);
  if (cfg.fps == 0) return all;
  std::vector<FeatureInstance> kept;
  for (auto& inst : all)
    if (inst.fps == cfg.fps) kept.push_back(std::move(inst));
  return kept;
}

int cmd_generate(const RunConfig& cfg, RunLog& log) {
  if (!cfg.synth) throw Error(Errc::InvalidConfig, "'generate' needs a synth section");
  const auto sc = cfg.synth_config();
  const auto dir = cfg.output_dir / "data";
  if (fs::exists(dir / "streams")) fs::remove_all(dir / "streams");
  log.log("generating " + std::to_string(sc.total_events()) + " events");
  const auto ds = generate_dataset(sc);
  write_dataset(dir, ds);
  write_availability_csv(dir / "availability.csv", availability_matrix(ds.channels, ds.calendar, ds.pmu_ids));

  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "streams"))
    if (e.path().extension() == ".csv") ++files;
  nlohmann::json counts = nlohmann::json::object();
  for (int c = 0; c < kNumClasses; ++c) counts[std::string(kClassNames[c])] = sc.events_per_class[c];
  const nlohmann::json manifest = {{"seed", cfg.seed},
                                   {"generate_seed", sc.seed},
                                   {"events_per_class", counts},
                                   {"n_events", ds.log.size()},
                                   {"pmus", ds.pmu_ids},
                                   {"fps", sc.fps},
                                   {"noise_std", sc.noise_std},
                                   {"missing_rate", sc.missing_rate},
                                   {"start_day", format_iso_date(ds.calendar.first)},
                                   {"n_days", ds.calendar.n_days},
                                   {"n_stream_files", files}};
  write_json(dir / "manifest.json", manifest);
  if (parse_event_log(dir / "events.csv").size() != ds.log.size())
    throw Error(Errc::MalformedRow, "event log does not match the manifest");
  log.summary("generate: " + std::to_string(ds.log.size()) + " events, " + std::to_string(ds.pmu_ids.size()) +
              " PMUs, " + std::to_string(files) + " stream files -> " + dir.string());
  return kOk;
}

int cmd_preprocess(const RunConfig& cfg, const Overrides& o, RunLog& log) {
  const auto in = data_inputs(cfg);
  const auto channels = load_streams(in.streams_dir);
  const auto events = parse_event_log(in.event_log);
  const auto dir = cfg.output_dir / "features";
  fs::create_directories(dir);
  std::vector<FeatureKind> kinds(kAllFeatureKinds.begin(), kAllFeatureKinds.end());
  if (o.feature) kinds = {cfg.feature};
  nlohmann::json summary = nlohmann::json::object();
  for (FeatureKind kind : kinds) {
    const auto ex = extract_instances(channels, events, kind, cfg.max_gap_ratio, cfg.normalize, cfg.fps);
    const std::string name(to_string(kind));
    write_feature_csv(dir / (name + ".csv"), ex.instances);
    write_drop_report(dir / (name + "_dropped.csv"), ex.dropped);
    if (read_feature_csv(dir / (name + ".csv")).size() != ex.instances.size())
      throw Error(Errc::MalformedRow, "feature file does not re-read");
    summary[name] = {{"candidates", ex.candidates}, {"instances", ex.instances.size()}, {"dropped", ex.dropped.size()}};
    log.summary("preprocess " + name + ": " + std::to_string(ex.instances.size()) + " instances, " +
                std::to_string(ex.dropped.size()) + " dropped of " + std::to_string(ex.candidates) + " candidates");
  }
  write_json(dir / "summary.json", summary);
  return kOk;
}

int cmd_tune(const RunConfig& cfg, RunLog& log) {
  const auto instances = load_features(cfg);
  check_training_set(instances);
  const auto dir = cfg.output_dir / "tune";
  fs::create_directories(dir);
  const auto space = SearchSpace::mlp_default();
  const auto history_path = dir / "history.csv";
  std::vector<Trial> resume;
  if (fs::exists(history_path)) {
    resume = read_history(history_path, space);
    log.summary("tune: resuming after " + std::to_string(resume.size()) + " recorded calls");
  }
  write_history(history_path, space, resume);
  std::ofstream history(history_path, std::ios::app);
  const auto on_trial = [&](const Trial& t) {
    history << history_row(space, t) << '\n';
    history.flush();
    log.log("call " + std::to_string(t.call_index) + " objective " + fmt(t.objective) +
            (t.failed ? " failed: " + t.error : ""));
  };
  auto result = tune(instances, cfg.train_config(), cfg.bo_options(), std::move(resume), on_trial);
  history.close();
  write_history(history_path, space, result.search.history);
  if (read_history(history_path, space).size() != static_cast<std::size_t>(cfg.bo.n_calls))
    throw Error(Errc::MalformedRow, "trial history does not have n_calls rows");

  write_json(dir / "best_architecture.json", best_architecture_json(result.search.best));
  save_model(result.final_run.model, dir / "model.bin");
  write_evaluation(dir, result.predictions, cfg.event_vote);
  const auto& b = result.best_architecture;
  log.summary("tune: best call " + std::to_string(result.search.best.call_index) + " objective " +
              fmt(result.search.best.objective) + " (lr " + fmt(b.learning_rate, 6) + ", " +
              std::to_string(b.n_hidden_layers) + "x" + std::to_string(b.nodes_per_layer) + ", dropout " +
              fmt(b.input_dropout, 3) + "/" + fmt(b.hidden_dropout, 3) + ", " + std::string(to_string(b.activation)) +
              ")");
  log.summary("tune: validation accuracy " + fmt(result.report.accuracy) + ", weighted F1 " +
              fmt(result.report.weighted.f1));
  return kOk;
}

MlpArchitecture chosen_architecture(const RunConfig& cfg) {
  if (cfg.architecture) return *cfg.architecture;
  const auto path = cfg.output_dir / "tune" / "best_architecture.json";
  require(path, "set 'architecture' in the config or run 'tune' first");
  return architecture_from_json(read_json(path).at("architecture"));
}

int cmd_train(const RunConfig& cfg, RunLog& log) {
  const auto arch = chosen_architecture(cfg);
  const auto instances = load_features(cfg);
  const auto r = train<float>(arch, instances, cfg.train_config());
  const auto dir = cfg.output_dir / "train";
  fs::create_directories(dir);
  save_model(r.model, dir / "model.bin");
  {
    auto out = csv::open_output((dir / "losses.csv").string());
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) {
      std::string line = std::to_string(e + 1) + ",";
      csv::append_exact(line, r.epoch_losses[e]);
      out << line << '\n';
    }
  }
  write_evaluation(dir, validation_predictions(r, std::span<const FeatureInstance>(instances)), cfg.event_vote);
  log.summary("train: loss " + fmt(r.initial_train_loss) + " -> " + fmt(r.final_train_loss) +
              ", validation accuracy " + fmt(r.validation_accuracy));
  return kOk;
}

int cmd_evaluate(const RunConfig& cfg, RunLog& log) {
  fs::path model_path = cfg.output_dir / "train" / "model.bin";
  if (!fs::exists(model_path)) model_path = cfg.output_dir / "tune" / "model.bin";
  require(model_path, "run 'train' or 'tune' first");
  const auto model = load_model<float>(model_path);
  const auto instances = load_features(cfg);
  check_training_set(instances);
  const auto tcfg = cfg.train_config();
  const auto split = split_by_event(instances, tcfg.train_fraction, tcfg.seed);
  const auto x = stack_columns<float>(instances, split.validation);
  if (x.rows() != model.input_dim()) throw Error(Errc::DimMismatch, "model input dimension differs from features");
  const auto pred = model.predict_batch(x);
  std::vector<Prediction> preds;
  for (std::size_t j = 0; j < split.validation.size(); ++j) {
    const auto& inst = instances[split.validation[j]];
    preds.push_back({inst.event_id, inst.pmu_id, to_int(inst.class_label), pred[j]});
  }
  const auto dir = cfg.output_dir / "evaluate";
  fs::create_directories(dir);
  write_evaluation(dir, preds, cfg.event_vote);
  const auto report = report_from(preds);
  log.summary("evaluate " + model_path.string() + ": accuracy " + fmt(report.accuracy) + ", weighted F1 " +
              fmt(report.weighted.f1) + " on " + std::to_string(preds.size()) + " validation instances");
  return kOk;
}

int cmd_experiment(const RunConfig& cfg, RunLog& log) {
  if (cfg.data) require(cfg.data->streams_dir, "data.streams_dir"), require(cfg.data->event_log, "data.event_log");
  const auto dir = cfg.output_dir / "experiment";
  fs::create_directories(dir / "cells");
  const auto space = SearchSpace::mlp_default();
  const auto on_row = [&](const ExperimentRow& row) {
    const auto name = cell_name(row.cell);
    if (!row.tuning) {
      log.summary("experiment " + name + ": failed: " + row.error);
      return;
    }
    const auto cell_dir = dir / "cells" / name;
    fs::create_directories(cell_dir);
    write_history(cell_dir / "history.csv", space, row.tuning->search.history);
    write_json(cell_dir / "best_architecture.json", best_architecture_json(row.tuning->search.best));
    write_evaluation(cell_dir, row.tuning->predictions, cfg.event_vote);
    log.summary("experiment " + name + ": acc " + fmt(row.report->accuracy) + " pre " +
                fmt(row.report->weighted.precision) + " rec " + fmt(row.report->weighted.recall) + " f1 " +
                fmt(row.report->weighted.f1));
  };
  const auto on_trial = [&](const Trial& t) {
    log.log("call " + std::to_string(t.call_index) + " objective " + fmt(t.objective));
  };
  const auto rows = run_experiment(cfg, grid_cells(cfg.experiment), on_row, on_trial);
  write_experiment_table(dir / "table.csv", rows);
  write_experiment_long(dir / "long.csv", rows);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.report ? 0 : 1;
  log.summary("experiment: " + std::to_string(rows.size()) + " cells, " + std::to_string(failed) + " failed -> " +
              (dir / "table.csv").string());
  return kOk;
}

std::string read_text(const fs::path& p) {
  auto in = csv::open_input(p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void metrics_section(std::ostringstream& md, const nlohmann::json& m) {
  md << "| class | precision | recall | F1 |\n|---|---|---|---|\n";
  for (const auto name : kClassNames) {
    const auto& v = m.at("per_class").at(std::string(name));
    md << "| " << name << " | " << fmt(v.at("precision")) << " | " << fmt(v.at("recall")) << " | "
       << fmt(v.at("f1")) << " |\n";
  }
  for (const char* avg : {"macro", "weighted"}) {
    const auto& a = m.at(avg);
    md << "| " << avg << " | " << fmt(a.at("precision")) << " | " << fmt(a.at("recall")) << " | "
       << fmt(a.at("f1")) << " |\n";
  }
  md << "\nAccuracy: " << fmt(m.at("accuracy")) << "\n\nConfusion matrix (rows true, columns predicted):\n\n```\n";
  for (const auto& row : m.at("confusion")) {
    for (const auto& c : row) md << std::setw(6) << c.get<long>();
    md << '\n';
  }
  md << "```\n";
}

int cmd_report(const RunConfig& cfg, RunLog& log) {
  std::ostringstream md;
  md << "# pmuclass run summary\n\nSeed: " << cfg.seed << "\n";
  bool any = false;
  const auto tune_dir = cfg.output_dir / "tune";
  if (fs::exists(tune_dir / "metrics.json")) {
    any = true;
    const auto best = read_json(tune_dir / "best_architecture.json");
    md << "\n## Tuning\n\nCalls: " << read_history(tune_dir / "history.csv", SearchSpace::mlp_default()).size()
       << "  \nBest call: " << best.at("call_index").get<int>() << " (objective " << fmt(best.at("objective"))
       << ")  \nArchitecture: `" << best.at("architecture").dump() << "`\n\n### Validation metrics\n\n";
    metrics_section(md, read_json(tune_dir / "metrics.json"));
    if (fs::exists(tune_dir / "metrics_event_vote.json")) {
      md << "\n### Event-level majority vote\n\n";
      metrics_section(md, read_json(tune_dir / "metrics_event_vote.json"));
    }
  }
  for (const char* stage : {"train", "evaluate"}) {
    const auto p = cfg.output_dir / stage / "metrics.json";
    if (!fs::exists(p)) continue;
    any = true;
    md << "\n## " << stage << "\n\n";
    metrics_section(md, read_json(p));
  }
  const auto table = cfg.output_dir / "experiment" / "table.csv";
  if (fs::exists(table)) {
    any = true;
    md << "\n## Experiment (weighted metrics)\n\n| feature | weeks | fps | acc | pre | rec | f1 | error |\n"
       << "|---|---|---|---|---|---|---|---|\n";
    std::istringstream lines(read_text(table));
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      const auto f = csv::split(csv::trim_cr(line));
      md << '|';
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (i >= 3 && i <= 6 && !f[i].empty()) md << ' ' << fmt(csv::parse_real(f[i], "metric")) << " |";
        else md << ' ' << f[i] << " |";
      }
      md << '\n';
    }
  }
  if (!any) throw MissingInput("nothing to report under " + cfg.output_dir.string());
  const auto dir = cfg.output_dir / "report";
  fs::create_directories(dir);
  auto out = csv::open_output((dir / "summary.md").string());
  out << md.str();
  log.summary("report -> " + (dir / "summary.md").string());
  return kOk;
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::InvalidConfig: return kInvalidConfig;
    case Errc::Io: return kMissingInput;
    case Errc::InsufficientData: return kTooFewEvents;
    default: return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PMU event classification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--seed", o.seed, "Top-level seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--fps", o.fps, "Frame rate filter")->check(CLI::IsMember({30, 60}));
  app.add_option("--feature", o.feature, "Feature kind")->check(CLI::IsMember({"gv", "gi", "gv-angle", "gf", "rocof"}));
  app.add_flag("--quiet", o.quiet, "No summary on stdout");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"generate", "Write a synthetic dataset"},
      {"preprocess", "Extract feature instances and drop reports"},
      {"tune", "Bayesian hyperparameter search, final retrain and metrics"},
      {"train", "Train one architecture"},
      {"evaluate", "Score a saved model on the validation split"},
      {"experiment", "Run the feature / size / fps grid"},
      {"report", "Summarize outputs as Markdown"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kInvalidConfig;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  RunConfig cfg;
  try {
    cfg = load_config(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidConfig;
  }

  try {
    fs::create_directories(cfg.output_dir);
    RunLog log(cfg.output_dir, cmd, o.quiet);
    log.log("start " + cmd + " seed " + std::to_string(cfg.seed));
    try {
      int rc = kFailure;
      if (cmd == "generate") rc = cmd_generate(cfg, log);
      else if (cmd == "preprocess") rc = cmd_preprocess(cfg, o, log);
      else if (cmd == "tune") rc = cmd_tune(cfg, log);
      else if (cmd == "train") rc = cmd_train(cfg, log);
      else if (cmd == "evaluate") rc = cmd_evaluate(cfg, log);
      else if (cmd == "experiment") rc = cmd_experiment(cfg, log);
      else if (cmd == "report") rc = cmd_report(cfg, log);
      log.log("done " + cmd + " exit " + std::to_string(rc));
      return rc;
    } catch (const MissingInput& e) {
      log.log(std::string("error: ") + e.what());
      std::cerr << "error: " << e.what() << '\n';
      return kMissingInput;
    } catch (const Error& e) {
      log.log(std::string("error: ") + e.what());
      std::cerr << "error: " << e.what() << '\n';
      return exit_code_for(e.code());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
