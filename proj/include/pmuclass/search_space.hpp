#pragma once

// Mixed continuous/integer/categorical search spaces and their unit-cube
// encoding.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "pmuclass/error.hpp"
#include "pmuclass/mlp.hpp"
#include "pmuclass/rng.hpp"

namespace pmuclass {

enum class Scale { Linear, Log10 };

struct ContinuousDim {
  double lo, hi;
  Scale scale = Scale::Linear;
};
struct IntegerDim {
  int lo, hi;
};
struct CategoricalDim {
  std::vector<std::string> values;
};

struct Dimension {
  std::string name;
  std::variant<ContinuousDim, IntegerDim, CategoricalDim> kind;

  /// Number of encoded coordinates (one-hot width for categoricals).
  int width() const {
    if (const auto* c = std::get_if<CategoricalDim>(&kind)) return static_cast<int>(c->values.size());
    return 1;
  }
};

/// One value per dimension: the real value, the integer, or the category index.
using Point = std::vector<double>;

/// Rounds to 10 significant digits. Continuous parameters live on this grid so
/// that decode(encode(p)) reproduces p exactly.
inline double snap10(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 9);
  double out = v;
  std::from_chars(buf, end, out);
  return out;
}

class SearchSpace {
 public:
  explicit SearchSpace(std::vector<Dimension> dims) : dims_(std::move(dims)) {
    for (const auto& d : dims_) {
      if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
        if (!(c->lo < c->hi) || (c->scale == Scale::Log10 && c->lo <= 0))
          throw Error(Errc::InvalidConfig, "bad bounds for " + d.name);
      } else if (const auto* i = std::get_if<IntegerDim>(&d.kind)) {
        if (i->lo > i->hi) throw Error(Errc::InvalidConfig, "bad bounds for " + d.name);
      } else if (std::get<CategoricalDim>(d.kind).values.empty()) {
        throw Error(Errc::InvalidConfig, "no categories for " + d.name);
      }
    }
  }

  /// learning_rate, n_hidden_layers, nodes_per_layer, input_dropout,
  /// hidden_dropout, activation.
  static SearchSpace mlp_default() {
    using B = MlpBounds;
    return SearchSpace({
        {"learning_rate", ContinuousDim{B::kMinLearningRate, B::kMaxLearningRate, Scale::Log10}},
        {"n_hidden_layers", IntegerDim{B::kMinLayers, B::kMaxLayers}},
        {"nodes_per_layer", IntegerDim{B::kMinNodes, B::kMaxNodes}},
        {"input_dropout", ContinuousDim{B::kMinInputDropout, B::kMaxInputDropout, Scale::Linear}},
        {"hidden_dropout", ContinuousDim{B::kMinHiddenDropout, B::kMaxHiddenDropout, Scale::Linear}},
        {"activation", CategoricalDim{{"sigmoid", "relu"}}},
    });
  }

  const std::vector<Dimension>& dims() const { return dims_; }
  std::size_t size() const { return dims_.size(); }

  int encoded_dim() const {
    int n = 0;
    for (const auto& d : dims_) n += d.width();
    return n;
  }

  std::vector<double> encode(const Point& p) const {
    if (p.size() != dims_.size()) throw Error(Errc::DimMismatch, "point has wrong dimension count");
    std::vector<double> u;
    u.reserve(static_cast<std::size_t>(encoded_dim()));
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      const auto& d = dims_[i];
      const double v = p[i];
      auto out_of_bounds = [&] { return Error(Errc::OutOfBounds, d.name + " out of bounds"); };
      if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
        if (!(v >= c->lo && v <= c->hi)) throw out_of_bounds();
        if (c->scale == Scale::Log10) {
          const double a = std::log10(c->lo), b = std::log10(c->hi);
          u.push_back(std::clamp((std::log10(v) - a) / (b - a), 0.0, 1.0));
        } else {
          u.push_back((v - c->lo) / (c->hi - c->lo));
        }
      } else if (const auto* n = std::get_if<IntegerDim>(&d.kind)) {
        if (!(v >= n->lo && v <= n->hi) || v != std::round(v)) throw out_of_bounds();
        u.push_back(n->hi == n->lo ? 0.5 : (v - n->lo) / static_cast<double>(n->hi - n->lo));
      } else {
        const auto k = static_cast<int>(std::get<CategoricalDim>(d.kind).values.size());
        if (!(v >= 0 && v < k) || v != std::round(v)) throw out_of_bounds();
        for (int j = 0; j < k; ++j) u.push_back(j == static_cast<int>(v) ? 1.0 : 0.0);
      }
    }
    return u;
  }

  /// Inverse of encode. Inputs are clamped to [0, 1]; integers round to
  /// nearest, categoricals take the arg-max (lowest index on ties).
  Point decode(const std::vector<double>& u) const {
    if (static_cast<int>(u.size()) != encoded_dim())
      throw Error(Errc::DimMismatch, "encoded vector has wrong length");
    Point p;
    std::size_t pos = 0;
    for (const auto& d : dims_) {
      if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
        const double t = std::clamp(u[pos++], 0.0, 1.0);
        double v;
        if (c->scale == Scale::Log10) {
          const double a = std::log10(c->lo), b = std::log10(c->hi);
          v = std::pow(10.0, a + t * (b - a));
        } else {
          v = c->lo + t * (c->hi - c->lo);
        }
        p.push_back(std::clamp(snap10(v), c->lo, c->hi));
      } else if (const auto* n = std::get_if<IntegerDim>(&d.kind)) {
        const double t = std::clamp(u[pos++], 0.0, 1.0);
        p.push_back(std::clamp(std::round(n->lo + t * (n->hi - n->lo)), double(n->lo), double(n->hi)));
      } else {
        const auto k = std::get<CategoricalDim>(d.kind).values.size();
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
          if (u[pos + j] > u[pos + best]) best = j;
        pos += k;
        p.push_back(static_cast<double>(best));
      }
    }
    return p;
  }

  /// encode(decode(u)): the nearest encodable point.
  std::vector<double> project(const std::vector<double>& u) const { return encode(decode(u)); }

  /// Maps one uniform draw per dimension to a point (categoricals split
  /// [0, 1) into equal bins).
  Point from_unit(const std::vector<double>& t) const {
    if (t.size() != dims_.size()) throw Error(Errc::DimMismatch, "need one draw per dimension");
    std::vector<double> u;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (const auto* c = std::get_if<CategoricalDim>(&dims_[i].kind)) {
        const auto k = c->values.size();
        const auto idx = std::min(k - 1, static_cast<std::size_t>(t[i] * static_cast<double>(k)));
        for (std::size_t j = 0; j < k; ++j) u.push_back(j == idx ? 1.0 : 0.0);
      } else if (const auto* n = std::get_if<IntegerDim>(&dims_[i].kind)) {
        // Equal-width bins so the end values are as likely as interior ones.
        const int count = n->hi - n->lo + 1;
        const int idx = std::min(count - 1, static_cast<int>(t[i] * count));
        u.push_back(count == 1 ? 0.5 : static_cast<double>(idx) / (count - 1));
      } else {
        u.push_back(t[i]);
      }
    }
    return decode(u);
  }

  Point random_point(Rng& rng) const {
    std::vector<double> t(dims_.size());
    for (auto& v : t) v = uniform01(rng);
    return from_unit(t);
  }

  /// Latin-hypercube design: each dimension's [0, 1) range is cut into n
  /// strata and every stratum is used exactly once.
  std::vector<Point> latin_hypercube(int n, Rng& rng) const {
    std::vector<std::vector<double>> t(static_cast<std::size_t>(n), std::vector<double>(dims_.size()));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (std::size_t d = 0; d < dims_.size(); ++d) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (int i = 0; i < n; ++i) t[i][d] = (perm[i] + uniform01(rng)) / n;
    }
    std::vector<Point> out;
    for (const auto& row : t) out.push_back(from_unit(row));
    return out;
  }

  /// Human-readable value of dimension i (category names for categoricals).
  std::string format_value(std::size_t i, double v) const {
    if (const auto* c = std::get_if<CategoricalDim>(&dims_[i].kind))
      return c->values.at(static_cast<std::size_t>(v));
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
  }

  double parse_value(std::size_t i, std::string_view s) const {
    if (const auto* c = std::get_if<CategoricalDim>(&dims_[i].kind)) {
      for (std::size_t j = 0; j < c->values.size(); ++j)
        if (c->values[j] == s) return static_cast<double>(j);
      throw Error(Errc::MalformedRow, "unknown category '" + std::string(s) + "' for " + dims_[i].name);
    }
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw Error(Errc::MalformedRow, "bad value '" + std::string(s) + "' for " + dims_[i].name);
    return v;
  }

 private:
  std::vector<Dimension> dims_;
};

/// Point of the default MLP space -> architecture.
inline MlpArchitecture to_architecture(const Point& p) {
  if (p.size() != 6) throw Error(Errc::DimMismatch, "architecture points have 6 values");
  MlpArchitecture a;
  a.learning_rate = p[0];
  a.n_hidden_layers = static_cast<int>(p[1]);
  a.nodes_per_layer = static_cast<int>(p[2]);
  a.input_dropout = p[3];
  a.hidden_dropout = p[4];
  a.activation = p[5] == 1.0 ? Activation::ReLU : Activation::Sigmoid;
  return a;
}

inline Point to_point(const MlpArchitecture& a) {
  return {a.learning_rate, double(a.n_hidden_layers), double(a.nodes_per_layer), a.input_dropout,
          a.hidden_dropout, a.activation == Activation::ReLU ? 1.0 : 0.0};
}

}  // namespace pmuclass
