#pragma once

// Seeded synthetic PMU streams with labelled events of the four classes.
//
// Every event perturbs a flat nominal baseline (VMag 1.0 pu, VAng 0.0 deg,
// IMag 1.0 pu, Freq 60.0 Hz) only inside its span [t, t + 180 s). Voltage and
// current effects are confined to the event's affected PMUs. Frequency-channel
// effects reach every PMU, scaled by a per-PMU participation factor (1 on
// affected PMUs, U(0.3, 0.7) elsewhere); frequency events have participation 1
// everywhere.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "pmuclass/error.hpp"
#include "pmuclass/ingest.hpp"
#include "pmuclass/rng.hpp"
#include "pmuclass/types.hpp"
#include "pmuclass/utc.hpp"

namespace pmuclass {

inline constexpr double kNominalVMag = 1.0;
inline constexpr double kNominalVAng = 0.0;
inline constexpr double kNominalIMag = 1.0;
inline constexpr double kNominalFreq = 60.0;

inline constexpr double nominal(Quantity q) {
  switch (q) {
    case Quantity::VMag: return kNominalVMag;
    case Quantity::VAng: return kNominalVAng;
    case Quantity::IMag: return kNominalIMag;
    case Quantity::Freq: return kNominalFreq;
  }
  return 0.0;
}

struct SynthConfig {
  std::array<int, kNumClasses> events_per_class{0, 0, 0, 0};
  int pmus = 5;
  int fps = 60;
  double noise_std = 1e-3;
  double missing_rate = 0.01;
  std::uint64_t seed = 0;
  Day start_day = Day{std::chrono::year{2016} / 1 / 1};
  int events_per_day = 48;
  double max_gap_ratio = kDefaultMaxGapRatio;

  int total_events() const {
    int n = 0;
    for (int c : events_per_class) n += c;
    return n;
  }

  void validate() const {
    for (int c : events_per_class) {
      if (c < 0) throw Error(Errc::InvalidConfig, "events_per_class must be >= 0");
    }
    if (pmus < 1) throw Error(Errc::InvalidConfig, "pmus must be >= 1");
    if (!is_supported_fps(fps)) throw Error(Errc::InvalidConfig, "fps must be 30 or 60");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
      throw Error(Errc::InvalidConfig, "noise_std must be finite and >= 0");
    }
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) {
      throw Error(Errc::InvalidConfig, "missing_rate must lie in [0, 1)");
    }
    if (!(missing_rate < max_gap_ratio)) {
      throw Error(Errc::InvalidConfig, "missing_rate must stay below max_gap_ratio");
    }
    if (events_per_day < 1) throw Error(Errc::InvalidConfig, "events_per_day must be >= 1");
  }
};

/// Event shapes and the parameters drawn for one injected event.
struct LineOutageShape {
  double imag_level;       // pu, IMag drops to this level at onset
  double vmag_sag;         // pu
  double recovery_tau;     // s
  double kick_amplitude;   // Hz, brief local frequency sag after the trip
  double kick_time;        // s, time of the deepest point
};

struct XfmrOutageShape {
  double vmag_step;         // pu, signed
  double vang_step;         // deg, negative (angle retards)
  double transition;        // s, raised-cosine transition time
  double imag_step;         // pu, signed, applied on `imag_pmus` only
  std::vector<std::string> imag_pmus;
};

struct FrequencyEventShape {
  double rocof;        // Hz/s magnitude of the decline
  double ramp;         // s
  double dip_depth;    // Hz, = rocof * ramp
  double hold;         // s at the nadir
  double recovery;     // s of linear recovery
};

struct OscillationShape {
  double frequency;        // Hz (damped)
  double damping_ratio;
  double freq_amplitude;   // Hz
  double vmag_amplitude;   // pu
  double duration;         // s
};

using EventShape = std::variant<LineOutageShape, XfmrOutageShape, FrequencyEventShape, OscillationShape>;

struct InjectedEvent {
  EventClass class_label = EventClass::LineOutage;
  UtcTime utc{};
  std::vector<std::string> affected_pmus;
  std::map<std::string, double> participation;
  EventShape shape;
};

inline constexpr double kEventSpanSeconds = kWindowAfterSeconds;

namespace detail {

inline double smoothstep(double t, double width) {
  if (t >= width) return 1.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * t / width));
}

inline double smoothstep_rate(double t, double width) {
  if (t >= width) return 0.0;
  return 0.5 * std::numbers::pi / width * std::sin(std::numbers::pi * t / width);
}

inline double oscillation_taper(double t, double duration) {
  if (t >= duration) return 0.0;
  if (t >= duration - 1.0) return duration - t;
  return 1.0;
}

/// Deviation from nominal of quantity `q` at `t` seconds after onset.
inline double deviation(const InjectedEvent& ev, const std::string& pmu, Quantity q, double t) {
  const bool affected =
      std::find(ev.affected_pmus.begin(), ev.affected_pmus.end(), pmu) != ev.affected_pmus.end();
  const double part = ev.participation.at(pmu);
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LineOutageShape>) {
          const double decay = std::exp(-t / s.recovery_tau);
          switch (q) {
            case Quantity::IMag: return affected ? -(1.0 - s.imag_level) * decay : 0.0;
            case Quantity::VMag: return affected ? -s.vmag_sag * decay : 0.0;
            case Quantity::Freq: {
              const double u = t / s.kick_time;
              return -part * s.kick_amplitude * u * std::exp(1.0 - u);
            }
            default: return 0.0;
          }
        } else if constexpr (std::is_same_v<S, XfmrOutageShape>) {
          switch (q) {
            case Quantity::VMag: return affected ? s.vmag_step * smoothstep(t, s.transition) : 0.0;
            case Quantity::VAng: return part * s.vang_step * smoothstep(t, s.transition);
            case Quantity::IMag: {
              const bool stepped =
                  std::find(s.imag_pmus.begin(), s.imag_pmus.end(), pmu) != s.imag_pmus.end();
              return stepped ? s.imag_step * smoothstep(t, s.transition) : 0.0;
            }
            case Quantity::Freq:
              // A PMU's frequency is the rate of its phase angle: f = f0 + (dθ/dt) / 360.
              return part * s.vang_step / 360.0 * smoothstep_rate(t, s.transition);
          }
          return 0.0;
        } else if constexpr (std::is_same_v<S, FrequencyEventShape>) {
          if (q != Quantity::Freq) return 0.0;
          if (t < s.ramp) return -s.rocof * t;
          if (t < s.ramp + s.hold) return -s.dip_depth;
          if (t < s.ramp + s.hold + s.recovery) {
            return -s.dip_depth + s.dip_depth * (t - s.ramp - s.hold) / s.recovery;
          }
          return 0.0;
        } else {
          const double zeta = s.damping_ratio;
          const double omega_d = 2.0 * std::numbers::pi * s.frequency;
          const double omega_n = omega_d / std::sqrt(1.0 - zeta * zeta);
          const double wave = std::exp(-zeta * omega_n * t) * std::sin(omega_d * t) *
                              oscillation_taper(t, s.duration);
          switch (q) {
            case Quantity::Freq: return part * s.freq_amplitude * wave;
            case Quantity::VMag: return affected ? s.vmag_amplitude * wave : 0.0;
            default: return 0.0;
          }
        }
      },
      ev.shape);
}

inline std::vector<std::string> distinct_pmus(const std::vector<SignalChannel>& channels) {
  std::vector<std::string> ids;
  for (const auto& ch : channels) {
    if (std::find(ids.begin(), ids.end(), ch.pmu_id) == ids.end()) ids.push_back(ch.pmu_id);
  }
  return ids;
}

}  // namespace detail

/// Draws the shape of one event; all randomness comes from `rng`.
inline InjectedEvent draw_event(EventClass label, UtcTime utc, const std::vector<std::string>& pmus,
                                Rng& rng) {
  InjectedEvent ev;
  ev.class_label = label;
  ev.utc = utc;
  const int n = static_cast<int>(pmus.size());
  if (label == EventClass::FrequencyEvent) {
    ev.affected_pmus = pmus;
  } else {
    const int size = 1 + static_cast<int>(uniform01(rng) * n);
    std::vector<std::string> shuffled = pmus;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    shuffled.resize(static_cast<std::size_t>(std::min(size, n)));
    // keep the caller's PMU order
    for (const auto& p : pmus) {
      if (std::find(shuffled.begin(), shuffled.end(), p) != shuffled.end()) ev.affected_pmus.push_back(p);
    }
  }
  for (const auto& p : pmus) {
    const bool affected =
        std::find(ev.affected_pmus.begin(), ev.affected_pmus.end(), p) != ev.affected_pmus.end();
    ev.participation[p] = affected ? 1.0 : uniform(rng, 0.3, 0.7);
  }
  auto sign = [&] { return uniform01(rng) < 0.5 ? -1.0 : 1.0; };
  switch (label) {
    case EventClass::LineOutage:
      ev.shape = LineOutageShape{uniform(rng, 0.2, 0.6), uniform(rng, 0.02, 0.08),
                                 uniform(rng, 1.0, 10.0), uniform(rng, 0.005, 0.02),
                                 uniform(rng, 0.2, 0.5)};
      break;
    case EventClass::XfmrOutage: {
      XfmrOutageShape s;
      s.vmag_step = sign() * uniform(rng, 0.01, 0.05);
      s.vang_step = -uniform(rng, 0.5, 3.0);
      s.transition = uniform(rng, 0.1, 0.3);
      s.imag_step = sign() * uniform(rng, 0.1, 0.4);
      for (const auto& p : ev.affected_pmus) {
        if (uniform01(rng) < 0.5) s.imag_pmus.push_back(p);
      }
      ev.shape = s;
      break;
    }
    case EventClass::FrequencyEvent: {
      // ROCOF and ramp time are drawn jointly so that the implied dip depth
      // also falls inside its range.
      double rate = 0.0, ramp = 0.0;
      do {
        rate = uniform(rng, 0.02, 0.2);
        ramp = uniform(rng, 2.0, 10.0);
      } while (rate * ramp < 0.05 || rate * ramp > 0.3);
      ev.shape = FrequencyEventShape{rate, ramp, rate * ramp, uniform(rng, 1.0, 5.0),
                                     uniform(rng, 20.0, 60.0)};
      break;
    }
    case EventClass::Oscillation:
      ev.shape = OscillationShape{uniform(rng, 0.1, 2.0),   uniform(rng, 0.01, 0.1),
                                  uniform(rng, 0.01, 0.05), uniform(rng, 0.005, 0.02),
                                  uniform(rng, 10.0, 60.0)};
      break;
  }
  return ev;
}

/// Applies an already-drawn event to the channels in place.
inline void apply_event(std::vector<SignalChannel>& channels, const InjectedEvent& ev) {
  for (auto& ch : channels) {
    if (!ev.participation.contains(ch.pmu_id)) continue;
    std::int64_t k = std::max<std::int64_t>(0, nearest_frame(ch.start_utc, ch.fps, ev.utc) - 1);
    for (; k < static_cast<std::int64_t>(ch.size()); ++k) {
      const double t = ch.seconds_since(static_cast<std::size_t>(k), ev.utc);
      if (t < 0.0) continue;
      if (t >= kEventSpanSeconds) break;
      ch.samples.add(static_cast<std::size_t>(k), detail::deviation(ev, ch.pmu_id, ch.quantity, t));
    }
  }
}

/// Draws an event of class `label` at `utc` and applies it to `channels` (in place).
inline InjectedEvent inject_event_into(std::vector<SignalChannel>& channels, EventClass label,
                                       UtcTime utc, Rng& rng) {
  for (const auto& ch : channels) {
    const UtcTime first = ch.start_utc;
    const UtcTime end = ch.sample_time(ch.size());
    if (utc - first < std::chrono::seconds{kWindowBeforeSeconds} ||
        end - utc < std::chrono::seconds{kWindowAfterSeconds}) {
      throw Error(Errc::OutOfRange, "event at " + format_iso8601(utc) +
                                        " is too close to the edge of the stream of " + ch.pmu_id);
    }
  }
  InjectedEvent ev = draw_event(label, utc, detail::distinct_pmus(channels), rng);
  apply_event(channels, ev);
  return ev;
}

struct Injection {
  std::vector<SignalChannel> channels;
  InjectedEvent event;
};

inline Injection inject_event(std::vector<SignalChannel> channels, EventClass label, UtcTime utc, Rng& rng) {
  InjectedEvent ev = inject_event_into(channels, label, utc, rng);
  return {std::move(channels), std::move(ev)};
}

struct SynthDataset {
  std::vector<SignalChannel> channels;
  std::vector<EventLogEntry> log;
  std::vector<InjectedEvent> events;
  std::vector<std::string> pmu_ids;
  Calendar calendar;
};

inline constexpr int kSlotSeconds = 250;
inline constexpr int kSlotEventOffsetSeconds = 65;

inline std::string pmu_name(int index) {
  std::string id = std::to_string(index + 1);
  return "PMU" + std::string(id.size() < 2 ? 2 - id.size() : 0, '0') + id;
}

/// Flat nominal channels for all PMUs over `seconds` starting at `start`.
inline std::vector<SignalChannel> baseline_channels(const std::vector<std::string>& pmus, int fps,
                                                    UtcTime start, int seconds) {
  std::vector<SignalChannel> out;
  const std::size_t n = static_cast<std::size_t>(seconds) * static_cast<std::size_t>(fps);
  for (const auto& pmu : pmus) {
    for (Quantity q : kAllQuantities) {
      out.push_back(SignalChannel{pmu, q, fps, start,
                                  MaskedSeries::dense(std::vector<double>(n, nominal(q)))});
    }
  }
  return out;
}

/// Events are laid out in back-to-back 250 s slots, `events_per_day` slots per
/// calendar day starting at midnight; each day yields one contiguous stream per
/// PMU and quantity.
inline SynthDataset generate_dataset(const SynthConfig& config) {
  config.validate();
  SynthDataset ds;
  for (int p = 0; p < config.pmus; ++p) ds.pmu_ids.push_back(pmu_name(p));

  Rng event_rng(sub_seed(config.seed, "events"));
  std::vector<EventClass> labels;
  for (int c = 0; c < kNumClasses; ++c) {
    labels.insert(labels.end(), static_cast<std::size_t>(config.events_per_class[c]), static_cast<EventClass>(c));
  }
  std::shuffle(labels.begin(), labels.end(), event_rng);

  const int total = static_cast<int>(labels.size());
  const int n_days = std::max(1, (total + config.events_per_day - 1) / config.events_per_day);
  ds.calendar = Calendar{config.start_day, n_days};
  const int digits = std::max<int>(4, static_cast<int>(std::to_string(total).size()));

  for (int d = 0; d < n_days; ++d) {
    const int first_event = d * config.events_per_day;
    const int day_events = std::clamp(total - first_event, 0, config.events_per_day);
    const UtcTime day_start{config.start_day + std::chrono::days{d}};
    auto channels =
        baseline_channels(ds.pmu_ids, config.fps, day_start, std::max(1, day_events) * kSlotSeconds);
    for (int s = 0; s < day_events; ++s) {
      const int i = first_event + s;
      const auto jitter_ms = static_cast<std::int64_t>(uniform01(event_rng) * 1000.0);
      const UtcTime utc = day_start + std::chrono::seconds{s * kSlotSeconds + kSlotEventOffsetSeconds} +
                          std::chrono::milliseconds{jitter_ms};
      std::string id = std::to_string(i + 1);
      id = "EV" + std::string(static_cast<std::size_t>(digits) - id.size(), '0') + id;
      ds.log.push_back(EventLogEntry{id, utc, labels[static_cast<std::size_t>(i)]});
      ds.events.push_back(inject_event_into(channels, labels[static_cast<std::size_t>(i)], utc, event_rng));
    }
    // Noise and frame loss come from per-(PMU, day) streams so the result does
    // not depend on the order in which streams are produced.
    for (int p = 0; p < config.pmus; ++p) {
      Rng noise_rng(sub_seed(sub_seed(config.seed, "noise"),
                             static_cast<std::uint64_t>(p) * 1000003ULL + static_cast<std::uint64_t>(d)));
      std::normal_distribution<double> noise(0.0, 1.0);
      auto* group = &channels[static_cast<std::size_t>(p) * 4];
      const std::size_t n = group[0].size();
      for (std::size_t q = 0; q < 4; ++q) {
        if (config.noise_std > 0.0) {
          for (std::size_t k = 0; k < n; ++k) group[q].samples.add(k, config.noise_std * noise(noise_rng));
        }
      }
      if (config.missing_rate > 0.0) {
        for (std::size_t k = 0; k < n; ++k) {
          if (uniform01(noise_rng) < config.missing_rate) {
            for (std::size_t q = 0; q < 4; ++q) group[q].samples.set(k, std::nullopt);
          }
        }
      }
    }
    for (auto& ch : channels) ds.channels.push_back(std::move(ch));
  }
  return ds;
}

/// Writes `streams/<pmu>_<date>.csv` per PMU and day plus `events.csv`.
inline void write_dataset(const std::filesystem::path& dir, const SynthDataset& ds) {
  std::filesystem::create_directories(dir / "streams");
  std::map<std::pair<std::string, Day>, std::vector<SignalChannel>> files;
  for (const auto& ch : ds.channels) files[{ch.pmu_id, day_of(ch.start_utc)}].push_back(ch);
  for (const auto& [key, chans] : files) {
    write_stream_file(dir / "streams" / (key.first + "_" + format_iso_date(key.second) + ".csv"), chans);
  }
  write_event_log(dir / "events.csv", ds.log);
}

/// Parses every `*.csv` under `streams_dir` in file-name order.
inline std::vector<SignalChannel> load_streams(const std::filesystem::path& streams_dir) {
  if (!std::filesystem::is_directory(streams_dir)) {
    throw Error(Errc::Io, "stream directory not found: " + streams_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(streams_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SignalChannel> channels;
  for (const auto& f : files) {
    auto parsed = parse_stream_file(f);
    for (auto& ch : parsed) channels.push_back(std::move(ch));
  }
  return channels;
}

}  // namespace pmuclass
