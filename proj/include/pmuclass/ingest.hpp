#pragma once

// PMU stream files, event logs, availability and event windowing.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pmuclass/csv.hpp"
#include "pmuclass/error.hpp"
#include "pmuclass/types.hpp"
#include "pmuclass/utc.hpp"

namespace pmuclass {

/// A sequence of real samples in which each entry is either present or absent.
/// Absent entries carry no numeric value; reading one yields std::nullopt.
class MaskedSeries {
 public:
  MaskedSeries() = default;
  explicit MaskedSeries(std::size_t n) : values_(n, 0.0), present_(n, false) {}

  static MaskedSeries dense(std::vector<double> values) {
    MaskedSeries s;
    s.present_.assign(values.size(), true);
    s.values_ = std::move(values);
    return s;
  }

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool present(std::size_t k) const { return present_[k]; }

  std::optional<double> operator[](std::size_t k) const {
    if (!present_[k]) return std::nullopt;
    return values_[k];
  }

  void set(std::size_t k, std::optional<double> v) {
    present_[k] = v.has_value();
    values_[k] = v.value_or(0.0);
  }

  void push_back(std::optional<double> v) {
    present_.push_back(v.has_value());
    values_.push_back(v.value_or(0.0));
  }

  void reserve(std::size_t n) {
    values_.reserve(n);
    present_.reserve(n);
  }

  /// Adds `delta` to a present sample; absent samples stay absent.
  void add(std::size_t k, double delta) {
    if (present_[k]) values_[k] += delta;
  }

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), false));
  }

  double missing_ratio() const {
    return empty() ? 0.0 : static_cast<double>(missing_count()) / static_cast<double>(size());
  }

  bool gap_free() const { return missing_count() == 0; }

  MaskedSeries slice(std::size_t first, std::size_t count) const {
    MaskedSeries s;
    s.values_.assign(values_.begin() + first, values_.begin() + first + count);
    s.present_.assign(present_.begin() + first, present_.begin() + first + count);
    for (std::size_t k = 0; k < count; ++k) {
      if (!s.present_[k]) s.values_[k] = 0.0;
    }
    return s;
  }

  /// Dense copy; throws NotGapFree if any sample is absent.
  std::vector<double> to_dense() const {
    if (!gap_free()) throw Error(Errc::NotGapFree, "series still contains missing samples");
    return values_;
  }

  friend bool operator==(const MaskedSeries& a, const MaskedSeries& b) {
    if (a.present_ != b.present_) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a.present_[k] && a.values_[k] != b.values_[k]) return false;
    }
    return true;
  }

 private:
  std::vector<double> values_;
  std::vector<bool> present_;
};

/// Millisecond timestamp of frame `k` of a stream that starts at `start`.
inline UtcTime frame_time(UtcTime start, int fps, std::int64_t k) {
  const std::int64_t num = k * 1000;
  const std::int64_t ms = num >= 0 ? (num + fps / 2) / fps : -((-num + fps / 2) / fps);
  return start + std::chrono::milliseconds{ms};
}

/// Nearest frame index to time `t` (may be negative or past the end).
inline std::int64_t nearest_frame(UtcTime start, int fps, UtcTime t) {
  const std::int64_t delta_ms = (t - start).count();
  const std::int64_t num = 2 * delta_ms * fps + 1000;
  const std::int64_t den = 2000;
  std::int64_t q = num / den;
  if ((num % den != 0) && ((num < 0) != (den < 0))) --q;
  return q;
}

struct SignalChannel {
  std::string pmu_id;
  Quantity quantity = Quantity::Freq;
  int fps = 60;
  UtcTime start_utc{};
  MaskedSeries samples;

  std::size_t size() const { return samples.size(); }
  UtcTime sample_time(std::size_t k) const {
    return frame_time(start_utc, fps, static_cast<std::int64_t>(k));
  }
  /// Exact offset of frame k from the (millisecond) event time `t`, in seconds.
  double seconds_since(std::size_t k, UtcTime t) const {
    const std::int64_t num = static_cast<std::int64_t>(k) * 1000 + (start_utc - t).count() * fps;
    return static_cast<double>(num) / (1000.0 * fps);
  }
};

struct EventLogEntry {
  std::string event_id;
  UtcTime utc_time{};
  EventClass class_label = EventClass::LineOutage;

  friend bool operator==(const EventLogEntry&, const EventLogEntry&) = default;
};

struct EventWindow {
  std::string event_id;
  EventClass class_label = EventClass::LineOutage;
  std::string pmu_id;
  Quantity quantity = Quantity::Freq;
  int fps = 60;
  UtcTime start_utc{};
  MaskedSeries samples;
};

inline constexpr int kWindowBeforeSeconds = 60;
inline constexpr int kWindowAfterSeconds = 180;
inline constexpr int kWindowSeconds = kWindowBeforeSeconds + kWindowAfterSeconds;
inline constexpr double kDefaultMaxGapRatio = 0.1;

inline constexpr std::size_t window_length(int fps) {
  return static_cast<std::size_t>(kWindowSeconds) * static_cast<std::size_t>(fps);
}

inline constexpr std::string_view kStreamHeader = "utc,pmu_id,vmag_pu,vang_deg,imag_pu,freq_hz";
inline constexpr std::string_view kEventLogHeader = "event_id,utc,class_label";

namespace detail {

struct RawPmuRows {
  std::vector<UtcTime> times;
  std::array<MaskedSeries, 4> values;
};

inline int infer_fps(const std::string& pmu_id, const std::vector<UtcTime>& times) {
  if (times.size() < 2) {
    throw Error(Errc::UnsupportedFps, "cannot infer frame rate of PMU " + pmu_id + " from " +
                                          std::to_string(times.size()) + " row(s)");
  }
  for (int fps : {60, 30}) {
    bool matches = true;
    for (std::size_t k = 0; k < times.size() && matches; ++k) {
      const auto expected = frame_time(times.front(), fps, static_cast<std::int64_t>(k));
      matches = std::abs((times[k] - expected).count()) <= 1;
    }
    if (matches) return fps;
  }
  throw Error(Errc::UnsupportedFps,
              "rows of PMU " + pmu_id + " do not lie on a 30 or 60 frame-per-second grid");
}

}  // namespace detail

/// Reads one stream CSV. Returns one channel per (pmu_id, quantity), PMUs in
/// order of first appearance and quantities in VMag, VAng, IMag, Freq order.
inline std::vector<SignalChannel> parse_stream_file(const std::filesystem::path& path) {
  auto in = csv::open_input(path.string());
  std::string line;
  if (!std::getline(in, line) || csv::trim_cr(line) != kStreamHeader) {
    throw Error(Errc::MalformedHeader, path.string() + ": expected header '" +
                                           std::string(kStreamHeader) + "'");
  }
  std::vector<std::string> order;
  std::map<std::string, detail::RawPmuRows> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = csv::trim_cr(line);
    if (view.empty()) continue;
    const auto fields = csv::split(view);
    if (fields.size() != 6) {
      throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(line_no) +
                                          ": expected 6 fields");
    }
    const auto t = parse_iso8601(fields[0]);
    if (!t) {
      throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(line_no) +
                                          ": bad timestamp '" + std::string(fields[0]) + "'");
    }
    std::string pmu(fields[1]);
    auto [it, inserted] = rows.try_emplace(pmu);
    if (inserted) order.push_back(pmu);
    auto& r = it->second;
    if (!r.times.empty() && *t <= r.times.back()) {
      throw Error(Errc::NonMonotonicTimestamps,
                  path.string() + ":" + std::to_string(line_no) + ": timestamp does not increase");
    }
    r.times.push_back(*t);
    for (std::size_t q = 0; q < 4; ++q) r.values[q].push_back(csv::parse_optional_real(fields[2 + q]));
  }

  std::vector<SignalChannel> channels;
  for (const auto& pmu : order) {
    auto& r = rows.at(pmu);
    const int fps = detail::infer_fps(pmu, r.times);
    for (std::size_t q = 0; q < 4; ++q) {
      channels.push_back(
          SignalChannel{pmu, kAllQuantities[q], fps, r.times.front(), std::move(r.values[q])});
    }
  }
  return channels;
}

/// Writes channels in the stream CSV format. Channels are grouped by PMU; all
/// channels of one PMU must share fps, start time and length. Quantities with
/// no channel are written as empty fields.
inline void write_stream_file(const std::filesystem::path& path,
                              const std::vector<SignalChannel>& channels) {
  std::vector<std::string> order;
  std::map<std::string, std::array<const SignalChannel*, 4>> by_pmu;
  for (const auto& ch : channels) {
    auto [it, inserted] = by_pmu.try_emplace(ch.pmu_id, std::array<const SignalChannel*, 4>{});
    if (inserted) order.push_back(ch.pmu_id);
    auto& slot = it->second[static_cast<std::size_t>(ch.quantity)];
    if (slot) throw Error(Errc::InconsistentChannels, "duplicate channel for PMU " + ch.pmu_id);
    slot = &ch;
  }
  auto out = csv::open_output(path.string());
  std::string buf;
  buf.append(kStreamHeader);
  buf.push_back('\n');
  for (const auto& pmu : order) {
    const auto& slots = by_pmu.at(pmu);
    const SignalChannel* ref = nullptr;
    for (auto* s : slots) {
      if (!s) continue;
      if (!ref) {
        ref = s;
      } else if (s->fps != ref->fps || s->start_utc != ref->start_utc || s->size() != ref->size()) {
        throw Error(Errc::InconsistentChannels, "channels of PMU " + pmu + " are not aligned");
      }
    }
    for (std::size_t k = 0; k < ref->size(); ++k) {
      buf += format_iso8601(ref->sample_time(k));
      buf.push_back(',');
      buf += pmu;
      for (auto* s : slots) {
        buf.push_back(',');
        if (s) {
          if (auto v = s->samples[k]) csv::append_real(buf, *v);
        }
      }
      buf.push_back('\n');
      if (buf.size() > (1u << 20)) {
        out << buf;
        buf.clear();
      }
    }
  }
  out << buf;
}

inline std::vector<EventLogEntry> parse_event_log(const std::filesystem::path& path) {
  auto in = csv::open_input(path.string());
  std::string line;
  if (!std::getline(in, line) || csv::trim_cr(line) != kEventLogHeader) {
    throw Error(Errc::MalformedHeader, path.string() + ": expected header '" +
                                           std::string(kEventLogHeader) + "'");
  }
  std::vector<EventLogEntry> log;
  while (std::getline(in, line)) {
    const auto view = csv::trim_cr(line);
    if (view.empty()) continue;
    const auto fields = csv::split(view);
    if (fields.size() != 3) throw Error(Errc::MalformedRow, "event log row needs 3 fields");
    const auto t = parse_iso8601(fields[1]);
    if (!t) throw Error(Errc::MalformedRow, "bad event timestamp '" + std::string(fields[1]) + "'");
    const int label = csv::parse_int<int>(fields[2], "class_label");
    log.push_back(EventLogEntry{std::string(fields[0]), *t, class_from_int(label)});
  }
  return log;
}

inline void write_event_log(const std::filesystem::path& path, const std::vector<EventLogEntry>& log) {
  auto out = csv::open_output(path.string());
  out << kEventLogHeader << '\n';
  for (const auto& e : log) {
    out << e.event_id << ',' << format_iso8601(e.utc_time) << ',' << to_int(e.class_label) << '\n';
  }
}

struct Calendar {
  Day first;
  int n_days = 1;
};

struct AvailabilityMatrix {
  std::vector<std::string> pmu_ids;
  std::vector<Day> days;
  std::vector<std::vector<std::uint8_t>> bits;  // [pmu][day]

  int row_sum(std::size_t i) const {
    int s = 0;
    for (auto b : bits[i]) s += b;
    return s;
  }
};

/// bits(i, j) = 1 iff PMU i has at least one present sample timestamped on day j.
/// Rows follow `pmu_ids` when given, otherwise the sorted set of PMUs in `channels`.
inline AvailabilityMatrix availability_matrix(const std::vector<SignalChannel>& channels,
                                              const Calendar& calendar,
                                              std::vector<std::string> pmu_ids = {}) {
  if (calendar.n_days <= 0) throw Error(Errc::InvalidConfig, "calendar must contain at least one day");
  if (pmu_ids.empty()) {
    std::set<std::string> ids;
    for (const auto& ch : channels) ids.insert(ch.pmu_id);
    pmu_ids.assign(ids.begin(), ids.end());
  }
  AvailabilityMatrix m;
  m.pmu_ids = pmu_ids;
  for (int j = 0; j < calendar.n_days; ++j) m.days.push_back(calendar.first + std::chrono::days{j});
  m.bits.assign(pmu_ids.size(), std::vector<std::uint8_t>(calendar.n_days, 0));

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < pmu_ids.size(); ++i) row_of[pmu_ids[i]] = i;

  for (const auto& ch : channels) {
    auto row = row_of.find(ch.pmu_id);
    if (row == row_of.end() || ch.samples.empty()) continue;
    auto& bits = m.bits[row->second];
    // Walk the stream one calendar day at a time: find the frame range of the
    // day by bisection on frame_time, then stop at the first present sample.
    const auto n = static_cast<std::int64_t>(ch.size());
    auto first_frame_at_or_after = [&](UtcTime t) {
      std::int64_t lo = 0, hi = n;
      while (lo < hi) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        if (ch.sample_time(static_cast<std::size_t>(mid)) < t) lo = mid + 1; else hi = mid;
      }
      return lo;
    };
    for (int j = 0; j < calendar.n_days; ++j) {
      if (bits[j]) continue;
      const UtcTime day_start{m.days[j]};
      const UtcTime day_end{m.days[j] + std::chrono::days{1}};
      if (ch.sample_time(0) >= day_end || ch.sample_time(static_cast<std::size_t>(n - 1)) < day_start) {
        continue;
      }
      const std::int64_t lo = first_frame_at_or_after(day_start);
      const std::int64_t hi = first_frame_at_or_after(day_end);
      for (std::int64_t k = lo; k < hi; ++k) {
        if (ch.samples.present(static_cast<std::size_t>(k))) {
          bits[j] = 1;
          break;
        }
      }
    }
  }
  return m;
}

inline void write_availability_csv(const std::filesystem::path& path, const AvailabilityMatrix& m) {
  auto out = csv::open_output(path.string());
  out << "pmu_id";
  for (auto d : m.days) out << ',' << format_iso_date(d);
  out << '\n';
  for (std::size_t i = 0; i < m.pmu_ids.size(); ++i) {
    out << m.pmu_ids[i];
    for (auto b : m.bits[i]) out << ',' << static_cast<int>(b);
    out << '\n';
  }
}

/// Cuts the 4-minute window [t - 60 s, t + 180 s) around the event, with t
/// snapped to the nearest frame. Missing samples are kept.
inline EventWindow extract_window(const SignalChannel& channel, const EventLogEntry& event,
                                  double max_gap_ratio = kDefaultMaxGapRatio) {
  const std::int64_t event_frame = nearest_frame(channel.start_utc, channel.fps, event.utc_time);
  const std::int64_t first = event_frame - static_cast<std::int64_t>(kWindowBeforeSeconds) * channel.fps;
  const auto length = static_cast<std::int64_t>(window_length(channel.fps));
  if (first < 0 || first + length > static_cast<std::int64_t>(channel.size())) {
    throw Error(Errc::WindowOutOfRange, "stream of PMU " + channel.pmu_id + " does not cover event " +
                                            event.event_id);
  }
  EventWindow w;
  w.event_id = event.event_id;
  w.class_label = event.class_label;
  w.pmu_id = channel.pmu_id;
  w.quantity = channel.quantity;
  w.fps = channel.fps;
  w.start_utc = channel.sample_time(static_cast<std::size_t>(first));
  w.samples = channel.samples.slice(static_cast<std::size_t>(first), static_cast<std::size_t>(length));
  const double ratio = w.samples.missing_ratio();
  if (ratio > max_gap_ratio) {
    throw Error(Errc::TooManyMissing, "event " + event.event_id + " on PMU " + channel.pmu_id +
                                          ": missing ratio " + csv::format_real(ratio, 4));
  }
  return w;
}

/// Finds the channel of `pmu_id`/`quantity` whose span covers the event window.
inline const SignalChannel* find_covering_channel(const std::vector<SignalChannel>& channels,
                                                  const std::string& pmu_id, Quantity quantity,
                                                  UtcTime event_time) {
  for (const auto& ch : channels) {
    if (ch.pmu_id != pmu_id || ch.quantity != quantity || ch.samples.empty()) continue;
    const std::int64_t f = nearest_frame(ch.start_utc, ch.fps, event_time);
    const std::int64_t first = f - static_cast<std::int64_t>(kWindowBeforeSeconds) * ch.fps;
    if (first >= 0 && first + static_cast<std::int64_t>(window_length(ch.fps)) <=
                          static_cast<std::int64_t>(ch.size())) {
      return &ch;
    }
  }
  return nullptr;
}

}  // namespace pmuclass
