#pragma once

// Gap filling, gradient features and per-PMU instance construction.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pmuclass/csv.hpp"
#include "pmuclass/error.hpp"
#include "pmuclass/ingest.hpp"
#include "pmuclass/types.hpp"

namespace pmuclass {

/// Piece-wise linear gap filling. Interior gaps are interpolated between the
/// nearest present neighbours; leading and trailing gaps take the nearest
/// present value.
inline std::vector<double> fill_missing(const MaskedSeries& series,
                                        double max_gap_ratio = kDefaultMaxGapRatio) {
  const std::size_t n = series.size();
  std::vector<std::size_t> known;
  for (std::size_t k = 0; k < n; ++k) {
    if (series.present(k)) known.push_back(k);
  }
  if (known.empty()) throw Error(Errc::AllMissing, "series has no present samples");
  if (series.missing_ratio() > max_gap_ratio) {
    throw Error(Errc::GapRatioExceeded,
                "missing ratio " + csv::format_real(series.missing_ratio(), 4) + " exceeds " +
                    csv::format_real(max_gap_ratio, 4));
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < known.front(); ++k) out[k] = *series[known.front()];
  for (std::size_t k = known.back(); k < n; ++k) out[k] = *series[known.back()];
  for (std::size_t i = 0; i + 1 < known.size(); ++i) {
    const std::size_t a = known[i], b = known[i + 1];
    const double va = *series[a], vb = *series[b];
    out[a] = va;
    for (std::size_t k = a + 1; k < b; ++k) {
      const double t = static_cast<double>(k - a) / static_cast<double>(b - a);
      out[k] = va + (vb - va) * t;
    }
  }
  return out;
}

inline SignalChannel fill_missing(const SignalChannel& channel,
                                  double max_gap_ratio = kDefaultMaxGapRatio) {
  SignalChannel out = channel;
  out.samples = MaskedSeries::dense(fill_missing(channel.samples, max_gap_ratio));
  return out;
}

inline EventWindow fill_missing(const EventWindow& window, double max_gap_ratio = kDefaultMaxGapRatio) {
  EventWindow out = window;
  out.samples = MaskedSeries::dense(fill_missing(window.samples, max_gap_ratio));
  return out;
}

/// Time derivative in units of input per second: central differences inside,
/// one-sided differences at both ends.
inline std::vector<double> gradient(std::span<const double> values, int fps) {
  const std::size_t n = values.size();
  if (n < 2) throw Error(Errc::TooShort, "gradient needs at least 2 samples");
  const double rate = static_cast<double>(fps);
  std::vector<double> g(n);
  g[0] = (values[1] - values[0]) * rate;
  g[n - 1] = (values[n - 1] - values[n - 2]) * rate;
  for (std::size_t k = 1; k + 1 < n; ++k) g[k] = (values[k + 1] - values[k - 1]) * rate / 2.0;
  return g;
}

/// Rate of change of frequency in Hz/s.
inline std::vector<double> rocof(std::span<const double> freq_hz, int fps) {
  return gradient(freq_hz, fps);
}

struct Normalization {
  double mean = 0.0;
  double std = 1.0;
  bool identity = true;
};

struct FeatureInstance {
  std::string event_id;
  EventClass class_label = EventClass::LineOutage;
  std::string pmu_id;
  FeatureKind feature_kind = FeatureKind::ROCOF;
  int fps = 60;
  std::vector<double> values;
  Normalization normalization;
};

/// Z-scores `values` in place with its own population moments. Vectors with
/// (numerically) zero spread are left untouched and marked identity.
inline Normalization zscore(std::vector<double>& values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12 * (std::abs(mean) + 1.0))) return {mean, 1.0, true};
  for (double& v : values) v = (v - mean) / sd;
  return {mean, sd, false};
}

/// One instance per window (event, PMU pair), ordered by event id then PMU id.
inline std::vector<FeatureInstance> build_instances(const std::vector<EventWindow>& windows,
                                                    FeatureKind kind, bool normalize = true) {
  std::vector<FeatureInstance> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (w.quantity != source_quantity(kind)) {
      throw Error(Errc::QuantityMismatch, "window of event " + w.event_id + " on PMU " + w.pmu_id +
                                              " does not carry the source quantity of " +
                                              std::string(to_string(kind)));
    }
    const std::vector<double> dense = w.samples.to_dense();
    FeatureInstance inst;
    inst.event_id = w.event_id;
    inst.class_label = w.class_label;
    inst.pmu_id = w.pmu_id;
    inst.feature_kind = kind;
    inst.fps = w.fps;
    inst.values = kind == FeatureKind::ROCOF ? rocof(dense, w.fps) : gradient(dense, w.fps);
    if (normalize) inst.normalization = zscore(inst.values);
    out.push_back(std::move(inst));
  }
  std::stable_sort(out.begin(), out.end(), [](const FeatureInstance& a, const FeatureInstance& b) {
    return std::tie(a.event_id, a.pmu_id) < std::tie(b.event_id, b.pmu_id);
  });
  return out;
}

inline void write_feature_csv(const std::filesystem::path& path,
                              const std::vector<FeatureInstance>& instances) {
  std::size_t width = 0;
  for (const auto& inst : instances) width = std::max(width, inst.values.size());
  auto out = csv::open_output(path.string());
  std::string buf = "event_id,class_label,pmu_id,feature_kind,fps";
  for (std::size_t k = 0; k < width; ++k) buf += ",v" + std::to_string(k);
  buf.push_back('\n');
  out << buf;
  buf.clear();
  for (const auto& inst : instances) {
    buf += inst.event_id;
    buf += ',' + std::to_string(to_int(inst.class_label)) + ',' + inst.pmu_id + ',';
    buf += to_string(inst.feature_kind);
    buf += ',' + std::to_string(inst.fps);
    for (double v : inst.values) {
      buf.push_back(',');
      csv::append_real(buf, v);
    }
    buf.push_back('\n');
    out << buf;
    buf.clear();
  }
}

inline std::vector<FeatureInstance> read_feature_csv(const std::filesystem::path& path) {
  auto in = csv::open_input(path.string());
  std::string line;
  if (!std::getline(in, line) ||
      !csv::trim_cr(line).starts_with("event_id,class_label,pmu_id,feature_kind,fps")) {
    throw Error(Errc::MalformedHeader, path.string() + ": not a feature instance file");
  }
  std::vector<FeatureInstance> out;
  while (std::getline(in, line)) {
    const auto view = csv::trim_cr(line);
    if (view.empty()) continue;
    const auto fields = csv::split(view);
    if (fields.size() < 7) throw Error(Errc::MalformedRow, "feature row too short");
    FeatureInstance inst;
    inst.event_id = std::string(fields[0]);
    inst.class_label = class_from_int(csv::parse_int<int>(fields[1], "class_label"));
    inst.pmu_id = std::string(fields[2]);
    const auto kind = parse_feature_kind(fields[3]);
    if (!kind) throw Error(Errc::MalformedRow, "unknown feature kind '" + std::string(fields[3]) + "'");
    inst.feature_kind = *kind;
    inst.fps = csv::parse_int<int>(fields[4], "fps");
    inst.values.reserve(fields.size() - 5);
    for (std::size_t k = 5; k < fields.size(); ++k) inst.values.push_back(csv::parse_real(fields[k], "value"));
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace pmuclass
