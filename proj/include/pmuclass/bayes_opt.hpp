#pragma once

// Sequential model-based optimization: GP surrogate + expected improvement.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmuclass/csv.hpp"
#include "pmuclass/error.hpp"
#include "pmuclass/gp.hpp"
#include "pmuclass/rng.hpp"
#include "pmuclass/search_space.hpp"

namespace pmuclass {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Expected improvement over `best` for a maximization problem.
inline double expected_improvement(double mean, double std, double best, double xi) {
  if (!(std >= 0)) throw Error(Errc::NegativeStd, "standard deviation must be >= 0");
  const double gain = mean - best - xi;
  if (std == 0) return std::max(gain, 0.0);
  const double z = gain / std;
  return std::max(gain * normal_cdf(z) + std * normal_pdf(z), 0.0);
}

struct Trial {
  int call_index = 0;
  Point params;
  double objective = 0;
  bool failed = false;
  std::string error;  // not persisted
};

struct BoOptions {
  int n_calls = 100;
  int n_init = 10;
  double xi = 0.01;
  std::uint64_t seed = 0;
  int n_candidates = 10000;
  int refine_steps = 50;
  double refine_step = 0.01;
  int gp_restarts = 5;

  void validate() const {
    if (n_init < 2) throw Error(Errc::InvalidConfig, "n_init must be >= 2");
    if (n_calls < n_init) throw Error(Errc::InvalidConfig, "n_calls must be >= n_init");
    if (!(xi >= 0)) throw Error(Errc::InvalidConfig, "xi must be >= 0");
    if (n_candidates < 1 || refine_steps < 0 || !(refine_step > 0))
      throw Error(Errc::InvalidConfig, "bad acquisition search settings");
  }
};

struct Suggestion {
  Point params;
  double ei = 0;
  double best_candidate_ei = 0;  // best EI among the raw random candidates
};

/// EI of a posterior in standardized objective units, so `xi` is measured in
/// standard deviations of the observed objectives.
inline double standardized_ei(const GpSurrogate& gp, const Posterior& p, double best, double xi) {
  const double s = gp.target_scale();
  return expected_improvement((p.mean - gp.prior_mean()) / s, p.std / s, (best - gp.prior_mean()) / s, xi);
}

/// Maximizes EI over the space: random candidates first, then coordinate-wise
/// hill climbing from the best one. EI is always scored on the projected
/// (decodable) point.
inline Suggestion suggest(const GpSurrogate& gp, const SearchSpace& space, double best, double xi, Rng& rng,
                          int n_candidates = 10000, int refine_steps = 50, double refine_step = 0.01) {
  const int d = space.encoded_dim();
  Eigen::MatrixXd cand(n_candidates, d);
  for (int i = 0; i < n_candidates; ++i) {
    std::vector<double> u(static_cast<std::size_t>(d));
    for (auto& v : u) v = uniform01(rng);
    const auto p = space.project(u);
    for (int j = 0; j < d; ++j) cand(i, j) = p[j];
  }
  const auto post = gp.posterior_batch(cand);
  int best_i = 0;
  double best_ei = -1;
  for (int i = 0; i < n_candidates; ++i) {
    const double ei = standardized_ei(gp, post[i], best, xi);
    if (ei > best_ei) {
      best_ei = ei;
      best_i = i;
    }
  }
  std::vector<double> x(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) x[j] = cand(best_i, j);

  auto score = [&](const std::vector<double>& u) {
    return standardized_ei(gp, gp.posterior(u), best, xi);
  };
  double current = best_ei, step = refine_step;
  for (int s = 0; s < refine_steps; ++s) {
    bool improved = false;
    for (int j = 0; j < d; ++j) {
      for (double dir : {+1.0, -1.0}) {
        auto trial = x;
        trial[j] = std::clamp(trial[j] + dir * step, 0.0, 1.0);
        trial = space.project(trial);
        const double ei = score(trial);
        if (ei > current) {
          current = ei;
          x = std::move(trial);
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {space.decode(x), current, best_ei};
}

using Objective = std::function<double(const Point&)>;
using TrialCallback = std::function<void(const Trial&)>;

/// First trial with the highest objective.
inline const Trial& best_trial(const std::vector<Trial>& history) {
  if (history.empty()) throw Error(Errc::InsufficientData, "empty history");
  const Trial* best = &history.front();
  for (const auto& t : history)
    if (t.objective > best->objective) best = &t;
  return *best;
}

struct OptimizeResult {
  Trial best;
  std::vector<Trial> history;
};

namespace detail {

inline Trial run_trial(const Objective& objective, const Point& params, int call_index) {
  Trial t{call_index, params, 0.0, false, {}};
  try {
    const double v = objective(params);
    if (!std::isfinite(v)) throw Error(Errc::TrainingDiverged, "objective returned a non-finite value");
    t.objective = v;
  } catch (const std::exception& e) {
    t.failed = true;
    t.error = e.what();
  }
  return t;
}

}  // namespace detail

/// n_init Latin-hypercube points, then one EI suggestion per call. `resume`
/// holds trials from an earlier run with the same seed; they are kept and the
/// loop continues after them.
inline OptimizeResult optimize(const Objective& objective, const SearchSpace& space, const BoOptions& opt,
                               std::vector<Trial> resume = {}, const TrialCallback& on_trial = {}) {
  opt.validate();
  if (static_cast<int>(resume.size()) > opt.n_calls)
    throw Error(Errc::InvalidConfig, "resumed history is longer than n_calls");
  Rng lhs_rng(sub_seed(opt.seed, "lhs"));
  const auto design = space.latin_hypercube(opt.n_init, lhs_rng);
  std::vector<Trial> history = std::move(resume);
  for (int i = 0; i < static_cast<int>(history.size()); ++i) {
    if (history[i].call_index != i) throw Error(Errc::MalformedRow, "resumed history is not contiguous");
  }
  const std::uint64_t suggest_seed = sub_seed(opt.seed, "suggest");
  for (int call = static_cast<int>(history.size()); call < opt.n_calls; ++call) {
    Point params;
    if (call < opt.n_init) {
      params = design[call];
    } else {
      Eigen::MatrixXd x(call, space.encoded_dim());
      Eigen::VectorXd y(call);
      for (int i = 0; i < call; ++i) {
        const auto u = space.encode(history[i].params);
        for (int j = 0; j < x.cols(); ++j) x(i, j) = u[j];
        y(i) = history[i].objective;
      }
      Rng rng(sub_seed(suggest_seed, static_cast<std::uint64_t>(call)));
      GpFitOptions gp_opt;
      gp_opt.seed = rng();
      gp_opt.restarts = opt.gp_restarts;
      const auto gp = gp_fit(x, y, gp_opt);
      params = suggest(gp, space, y.maxCoeff(), opt.xi, rng, opt.n_candidates, opt.refine_steps,
                       opt.refine_step)
                   .params;
    }
    history.push_back(detail::run_trial(objective, params, call));
    if (on_trial) on_trial(history.back());
  }
  return {best_trial(history), std::move(history)};
}

/// Baseline: independent uniform draws.
inline OptimizeResult random_search(const Objective& objective, const SearchSpace& space, int n_calls,
                                    std::uint64_t seed) {
  if (n_calls < 1) throw Error(Errc::InvalidConfig, "n_calls must be >= 1");
  Rng rng(sub_seed(seed, "random-search"));
  std::vector<Trial> history;
  for (int call = 0; call < n_calls; ++call)
    history.push_back(detail::run_trial(objective, space.random_point(rng), call));
  return {best_trial(history), std::move(history)};
}

/// `call_index,<dimension names>,objective`, values written exactly.
inline std::string history_header(const SearchSpace& space) {
  std::string h = "call_index";
  for (const auto& d : space.dims()) h += "," + d.name;
  return h + ",objective";
}

inline std::string history_row(const SearchSpace& space, const Trial& t) {
  std::string row = std::to_string(t.call_index);
  for (std::size_t i = 0; i < space.size(); ++i) row += "," + space.format_value(i, t.params[i]);
  row += ",";
  csv::append_exact(row, t.objective);
  return row;
}

inline void write_history(const std::filesystem::path& path, const SearchSpace& space,
                          const std::vector<Trial>& history) {
  auto out = csv::open_output(path.string());
  out << history_header(space) << '\n';
  for (const auto& t : history) out << history_row(space, t) << '\n';
}

inline std::vector<Trial> read_history(const std::filesystem::path& path, const SearchSpace& space) {
  auto in = csv::open_input(path.string());
  std::string line;
  if (!std::getline(in, line) || csv::trim_cr(line) != history_header(space))
    throw Error(Errc::MalformedHeader, "unexpected trial history header in " + path.string());
  std::vector<Trial> out;
  while (std::getline(in, line)) {
    const auto row = csv::trim_cr(line);
    if (row.empty()) continue;
    const auto f = csv::split(row);
    if (f.size() != space.size() + 2) throw Error(Errc::MalformedRow, "wrong field count in trial history");
    Trial t;
    t.call_index = csv::parse_int<int>(f[0], "call_index");
    for (std::size_t i = 0; i < space.size(); ++i) t.params.push_back(space.parse_value(i, f[i + 1]));
    space.encode(t.params);  // bounds check
    t.objective = csv::parse_real(f.back(), "objective");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace pmuclass
