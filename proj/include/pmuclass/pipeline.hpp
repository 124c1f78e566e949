#pragma once

// Streams + event log -> per-PMU feature instances, with a drop report.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pmuclass/csv.hpp"
#include "pmuclass/error.hpp"
#include "pmuclass/ingest.hpp"
#include "pmuclass/preprocess.hpp"
#include "pmuclass/types.hpp"

namespace pmuclass {

/// An (event, PMU) pair that did not produce an instance.
struct DroppedPair {
  std::string event_id;
  std::string pmu_id;
  Errc reason = Errc::WindowOutOfRange;
  std::string message;
};

struct ExtractionResult {
  std::vector<FeatureInstance> instances;
  std::vector<DroppedPair> dropped;
  std::size_t candidates = 0;
};

/// Distinct PMU ids in order of first appearance.
inline std::vector<std::string> pmu_ids_of(const std::vector<SignalChannel>& channels) {
  std::vector<std::string> ids;
  for (const auto& ch : channels) {
    if (std::find(ids.begin(), ids.end(), ch.pmu_id) == ids.end()) ids.push_back(ch.pmu_id);
  }
  return ids;
}

/// Every (event, PMU) pair is a candidate. Pairs whose window is not covered,
/// has too many missing samples or cannot be filled are reported as dropped.
/// A non-zero `fps` keeps only channels at that rate.
inline ExtractionResult extract_instances(const std::vector<SignalChannel>& channels,
                                          const std::vector<EventLogEntry>& log, FeatureKind kind,
                                          double max_gap_ratio = kDefaultMaxGapRatio,
                                          bool normalize = true, int fps = 0) {
  std::vector<SignalChannel> kept;
  const Quantity q = source_quantity(kind);
  for (const auto& ch : channels) {
    if (ch.quantity == q && (fps == 0 || ch.fps == fps)) kept.push_back(ch);
  }
  const auto pmus = pmu_ids_of(kept);
  ExtractionResult result;
  std::vector<EventWindow> windows;
  for (const auto& ev : log) {
    for (const auto& pmu : pmus) {
      ++result.candidates;
      const SignalChannel* ch = find_covering_channel(kept, pmu, q, ev.utc_time);
      if (!ch) {
        result.dropped.push_back({ev.event_id, pmu, Errc::WindowOutOfRange, "no stream covers the window"});
        continue;
      }
      try {
        windows.push_back(fill_missing(extract_window(*ch, ev, max_gap_ratio), max_gap_ratio));
      } catch (const Error& e) {
        result.dropped.push_back({ev.event_id, pmu, e.code(), e.what()});
      }
    }
  }
  result.instances = build_instances(windows, kind, normalize);
  std::sort(result.dropped.begin(), result.dropped.end(), [](const DroppedPair& a, const DroppedPair& b) {
    return std::tie(a.event_id, a.pmu_id) < std::tie(b.event_id, b.pmu_id);
  });
  return result;
}

inline constexpr std::string_view kDropReportHeader = "event_id,pmu_id,reason,message";

inline void write_drop_report(const std::filesystem::path& path, const std::vector<DroppedPair>& dropped) {
  auto out = csv::open_output(path.string());
  out << kDropReportHeader << '\n';
  for (const auto& d : dropped) {
    std::string msg = d.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    out << d.event_id << ',' << d.pmu_id << ',' << to_string(d.reason) << ',' << msg << '\n';
  }
}

}  // namespace pmuclass
