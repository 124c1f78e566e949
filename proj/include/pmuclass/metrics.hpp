#pragma once

// Confusion matrices, one-vs-rest precision/recall/F1 and their averages.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmuclass/error.hpp"
#include "pmuclass/types.hpp"

namespace pmuclass {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

  std::int64_t total() const {
    std::int64_t n = 0;
    for (const auto& row : counts)
      for (auto c : row) n += c;
    return n;
  }
  std::int64_t trace() const {
    std::int64_t n = 0;
    for (int k = 0; k < kNumClasses; ++k) n += counts[k][k];
    return n;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const int> truths, std::span<const int> preds) {
  if (truths.size() != preds.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(truths.size()) + " truths vs " +
                                          std::to_string(preds.size()) + " predictions");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = preds[i];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses)
      throw Error(Errc::BadLabel, "label outside 0..3 at position " + std::to_string(i));
    ++cm.counts[t][p];
  }
  return cm;
}

/// a / b with 0/0 := 0.
inline double safe_ratio(double a, double b) { return b == 0 ? 0.0 : a / b; }

struct BinaryMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Class k against all other classes merged.
inline BinaryMetrics binary_metrics(const ConfusionMatrix& cm, int k) {
  if (k < 0 || k >= kNumClasses) throw Error(Errc::BadLabel, "class index out of range");
  BinaryMetrics m;
  const std::int64_t total = cm.total();
  m.tp = cm.counts[k][k];
  for (int j = 0; j < kNumClasses; ++j) {
    if (j == k) continue;
    m.fp += cm.counts[j][k];
    m.fn += cm.counts[k][j];
  }
  m.tn = total - m.tp - m.fp - m.fn;
  m.precision = safe_ratio(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fp));
  m.recall = safe_ratio(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fn));
  m.f1 = safe_ratio(2 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

struct AveragedMetrics {
  double precision = 0, recall = 0, f1 = 0;
};

struct MetricsReport {
  double accuracy = 0;
  std::array<BinaryMetrics, kNumClasses> per_class{};
  AveragedMetrics macro;
  AveragedMetrics weighted;  // weighted by true-class frequency
  ConfusionMatrix confusion;
};

inline MetricsReport aggregate(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw Error(Errc::EmptyMatrix, "confusion matrix has no instances");
  MetricsReport r;
  r.confusion = cm;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  // Frequency-weighted recall sums TP_k / total, which is the accuracy.
  r.weighted.recall = r.accuracy;
  for (int k = 0; k < kNumClasses; ++k) {
    const auto m = binary_metrics(cm, k);
    r.per_class[k] = m;
    r.macro.precision += m.precision / kNumClasses;
    r.macro.recall += m.recall / kNumClasses;
    r.macro.f1 += m.f1 / kNumClasses;
    const double w = static_cast<double>(m.tp + m.fn) / static_cast<double>(total);
    r.weighted.precision += w * m.precision;
    r.weighted.f1 += w * m.f1;
  }
  return r;
}

inline MetricsReport evaluate_predictions(std::span<const int> truths, std::span<const int> preds) {
  return aggregate(confusion(truths, preds));
}

/// Per-event majority vote over instance predictions. Ties go to the lowest
/// class index. Returns (truth, vote) per event in event-id order.
struct EventVotes {
  std::vector<std::string> event_ids;
  std::vector<int> truths;
  std::vector<int> votes;
};

inline EventVotes majority_vote(std::span<const std::string> event_ids, std::span<const int> truths,
                                std::span<const int> preds) {
  if (event_ids.size() != truths.size() || truths.size() != preds.size())
    throw Error(Errc::LengthMismatch, "event ids, truths and predictions differ in length");
  std::map<std::string, std::pair<int, std::array<int, kNumClasses>>> tally;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= kNumClasses) throw Error(Errc::BadLabel, "prediction outside 0..3");
    auto [it, inserted] = tally.try_emplace(event_ids[i], truths[i], std::array<int, kNumClasses>{});
    if (!inserted && it->second.first != truths[i])
      throw Error(Errc::BadLabel, "event " + event_ids[i] + " carries two labels");
    ++it->second.second[preds[i]];
  }
  EventVotes v;
  for (const auto& [id, entry] : tally) {
    int best = 0;
    for (int k = 1; k < kNumClasses; ++k)
      if (entry.second[k] > entry.second[best]) best = k;
    v.event_ids.push_back(id);
    v.truths.push_back(entry.first);
    v.votes.push_back(best);
  }
  return v;
}

inline nlohmann::json to_json(const AveragedMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

/// JSON document with exactly the keys accuracy, per_class, macro, weighted
/// and confusion.
inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (int k = 0; k < kNumClasses; ++k) {
    const auto& m = r.per_class[k];
    per_class[std::string(kClassNames[k])] = {{"precision", m.precision}, {"recall", m.recall},
                                              {"f1", m.f1},               {"tp", m.tp},
                                              {"fp", m.fp},               {"fn", m.fn},
                                              {"tn", m.tn}};
  }
  nlohmann::json cm = nlohmann::json::array();
  for (const auto& row : r.confusion.counts) cm.push_back(row);
  return {{"accuracy", r.accuracy},
          {"per_class", per_class},
          {"macro", to_json(r.macro)},
          {"weighted", to_json(r.weighted)},
          {"confusion", cm}};
}

}  // namespace pmuclass
