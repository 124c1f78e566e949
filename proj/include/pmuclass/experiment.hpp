#pragma once

// Feature / dataset-size / sampling-rate grid experiments.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pmuclass/config.hpp"
#include "pmuclass/csv.hpp"
#include "pmuclass/error.hpp"
#include "pmuclass/ingest.hpp"
#include "pmuclass/metrics.hpp"
#include "pmuclass/pipeline.hpp"
#include "pmuclass/synth.hpp"
#include "pmuclass/tuning.hpp"
#include "pmuclass/utc.hpp"

namespace pmuclass {

struct ExperimentCell {
  FeatureKind feature = FeatureKind::ROCOF;
  int weeks = 12;
  int fps = 60;
};

inline std::string cell_name(const ExperimentCell& c) {
  return std::string(to_string(c.feature)) + "_w" + std::to_string(c.weeks) + "_f" + std::to_string(c.fps);
}

struct ExperimentRow {
  ExperimentCell cell;
  std::optional<MetricsReport> report;  // empty when the cell failed
  std::string error;
  std::optional<TuneResult> tuning;
};

/// Cells ordered by weeks, then fps, then feature, so that consecutive cells
/// share a dataset.
inline std::vector<ExperimentCell> grid_cells(const ExperimentGrid& g) {
  std::vector<ExperimentCell> out;
  for (int w : g.weeks)
    for (int f : g.fps)
      for (FeatureKind k : g.features) out.push_back({k, w, f});
  return out;
}

/// Per-class event counts for a `weeks`-long synthetic set, scaled from the
/// counts that describe `base_weeks`.
inline SynthConfig scaled_synth(SynthConfig s, int weeks, int base_weeks, int fps) {
  for (auto& n : s.events_per_class)
    n = static_cast<int>(std::lround(static_cast<double>(n) * weeks / base_weeks));
  s.fps = fps;
  return s;
}

/// Events of the first `weeks` weeks of the log, counted from the day of the
/// earliest event.
inline std::vector<EventLogEntry> first_weeks(const std::vector<EventLogEntry>& log, int weeks) {
  if (log.empty()) return {};
  Day first = day_of(log.front().utc_time);
  for (const auto& e : log) first = std::min(first, day_of(e.utc_time));
  const Day end = first + std::chrono::days{7 * weeks};
  std::vector<EventLogEntry> out;
  for (const auto& e : log)
    if (day_of(e.utc_time) < end) out.push_back(e);
  return out;
}

using ExperimentRowCallback = std::function<void(const ExperimentRow&)>;

/// Runs one tuning campaign per cell. Cell failures are recorded in the row
/// and the run continues.
inline std::vector<ExperimentRow> run_experiment(const RunConfig& cfg, const std::vector<ExperimentCell>& cells,
                                                 const ExperimentRowCallback& on_row = {},
                                                 const TrialCallback& on_trial = {}) {
  std::vector<ExperimentRow> rows;
  std::vector<SignalChannel> real_channels;
  std::vector<EventLogEntry> real_log;
  if (cfg.data) {
    real_channels = load_streams(cfg.data->streams_dir);
    real_log = parse_event_log(cfg.data->event_log);
  }
  std::optional<std::pair<int, int>> loaded;  // (weeks, fps) of the synthetic set in memory
  SynthDataset ds;
  for (const auto& cell : cells) {
    ExperimentRow row{cell, std::nullopt, {}, std::nullopt};
    try {
      ExtractionResult ex;
      if (cfg.synth) {
        if (loaded != std::pair{cell.weeks, cell.fps}) {
          ds = {};
          ds = generate_dataset(scaled_synth(cfg.synth_config(), cell.weeks, cfg.experiment.base_weeks, cell.fps));
          loaded = std::pair{cell.weeks, cell.fps};
        }
        ex = extract_instances(ds.channels, ds.log, cell.feature, cfg.max_gap_ratio, cfg.normalize, cell.fps);
      } else {
        ex = extract_instances(real_channels, first_weeks(real_log, cell.weeks), cell.feature, cfg.max_gap_ratio,
                               cfg.normalize, cell.fps);
      }
      if (ex.instances.empty()) throw Error(Errc::InsufficientData, "no instances for " + cell_name(cell));
      auto t = tune(ex.instances, cfg.train_config(), cfg.bo_options(), {}, on_trial);
      row.report = t.report;
      row.tuning = std::move(t);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (on_row) on_row(row);
    row.tuning.reset();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline constexpr std::string_view kExperimentHeader = "feature,weeks,fps,acc,pre,rec,f1,error";
inline constexpr std::string_view kExperimentLongHeader = "feature,weeks,fps,metric,value";

inline std::string cell_prefix(const ExperimentCell& c) {
  return std::string(to_string(c.feature)) + "," + std::to_string(c.weeks) + "," + std::to_string(c.fps);
}

/// Weighted precision/recall/F1 and accuracy per cell.
inline void write_experiment_table(const std::filesystem::path& path, const std::vector<ExperimentRow>& rows) {
  auto out = csv::open_output(path.string());
  out << kExperimentHeader << '\n';
  for (const auto& r : rows) {
    std::string line = cell_prefix(r.cell);
    if (r.report) {
      for (double v : {r.report->accuracy, r.report->weighted.precision, r.report->weighted.recall,
                       r.report->weighted.f1}) {
        line += ',';
        csv::append_exact(line, v);
      }
      line += ',';
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      line += ",,,,," + msg;
    }
    out << line << '\n';
  }
}

/// One row per (cell, metric); failed cells are left out.
inline void write_experiment_long(const std::filesystem::path& path, const std::vector<ExperimentRow>& rows) {
  auto out = csv::open_output(path.string());
  out << kExperimentLongHeader << '\n';
  for (const auto& r : rows) {
    if (!r.report) continue;
    const std::pair<const char*, double> metrics[] = {{"acc", r.report->accuracy},
                                                      {"pre", r.report->weighted.precision},
                                                      {"rec", r.report->weighted.recall},
                                                      {"f1", r.report->weighted.f1}};
    for (const auto& [name, v] : metrics) {
      std::string line = cell_prefix(r.cell) + "," + name + ",";
      csv::append_exact(line, v);
      out << line << '\n';
    }
  }
}

}  // namespace pmuclass
