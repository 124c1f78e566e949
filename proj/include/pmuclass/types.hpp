#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "pmuclass/error.hpp"

namespace pmuclass {

inline constexpr int kNumClasses = 4;

enum class EventClass : int { LineOutage = 0, XfmrOutage = 1, FrequencyEvent = 2, Oscillation = 3 };

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "LineOutage", "XfmrOutage", "FrequencyEvent", "Oscillation"};

inline EventClass class_from_int(int label) {
  if (label < 0 || label >= kNumClasses) {
    throw Error(Errc::BadLabel, "class label out of {0,1,2,3}: " + std::to_string(label));
  }
  return static_cast<EventClass>(label);
}

inline constexpr int to_int(EventClass c) { return static_cast<int>(c); }

enum class Quantity { VMag, VAng, IMag, Freq };

inline constexpr std::array<Quantity, 4> kAllQuantities = {Quantity::VMag, Quantity::VAng,
                                                           Quantity::IMag, Quantity::Freq};

/// Column name used in the stream CSV.
constexpr std::string_view column_name(Quantity q) {
  switch (q) {
    case Quantity::VMag: return "vmag_pu";
    case Quantity::VAng: return "vang_deg";
    case Quantity::IMag: return "imag_pu";
    case Quantity::Freq: return "freq_hz";
  }
  return "";
}

enum class FeatureKind { GV, GI, GVAngle, GF, ROCOF };

inline constexpr std::array<FeatureKind, 5> kAllFeatureKinds = {
    FeatureKind::GV, FeatureKind::GI, FeatureKind::GVAngle, FeatureKind::GF, FeatureKind::ROCOF};

constexpr Quantity source_quantity(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::GV: return Quantity::VMag;
    case FeatureKind::GI: return Quantity::IMag;
    case FeatureKind::GVAngle: return Quantity::VAng;
    case FeatureKind::GF: return Quantity::Freq;
    case FeatureKind::ROCOF: return Quantity::Freq;
  }
  return Quantity::Freq;
}

/// Short lowercase name used by the CLI and in file names.
constexpr std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::GV: return "gv";
    case FeatureKind::GI: return "gi";
    case FeatureKind::GVAngle: return "gv-angle";
    case FeatureKind::GF: return "gf";
    case FeatureKind::ROCOF: return "rocof";
  }
  return "";
}

inline std::optional<FeatureKind> parse_feature_kind(std::string_view s) {
  for (FeatureKind k : kAllFeatureKinds) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

inline constexpr bool is_supported_fps(int fps) { return fps == 30 || fps == 60; }

}  // namespace pmuclass
