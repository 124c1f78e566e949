#pragma once

// Fully connected classifier with dropout and a 4-way softmax head.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pmuclass/error.hpp"
#include "pmuclass/rng.hpp"
#include "pmuclass/types.hpp"

namespace pmuclass {

enum class Activation { Sigmoid, ReLU };

inline std::string to_string(Activation a) { return a == Activation::ReLU ? "relu" : "sigmoid"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "relu" || s == "ReLU") return Activation::ReLU;
  if (s == "sigmoid" || s == "Sigmoid") return Activation::Sigmoid;
  throw Error(Errc::InvalidConfig, "unknown activation '" + std::string(s) + "'");
}

/// Search-space bounds for the tuned hyperparameters.
struct MlpBounds {
  static constexpr double kMinLearningRate = 1e-5, kMaxLearningRate = 1e-1;
  static constexpr int kMinLayers = 1, kMaxLayers = 8;
  static constexpr int kMinNodes = 20, kMaxNodes = 500;
  static constexpr double kMinInputDropout = 0.4, kMaxInputDropout = 0.9;
  static constexpr double kMinHiddenDropout = 0.2, kMaxHiddenDropout = 0.7;
};

struct MlpArchitecture {
  double learning_rate = 1e-2;
  int n_hidden_layers = 1;
  int nodes_per_layer = 20;
  double input_dropout = 0.4;
  double hidden_dropout = 0.2;
  Activation activation = Activation::ReLU;

  bool operator==(const MlpArchitecture&) const = default;

  /// Structural checks only: positive sizes, dropout in [0, 1).
  void validate_structure() const {
    auto bad = [](const std::string& what) { throw Error(Errc::InvalidDims, what); };
    if (!(std::isfinite(learning_rate) && learning_rate > 0)) bad("learning_rate must be positive");
    if (n_hidden_layers < 1) bad("n_hidden_layers must be >= 1");
    if (nodes_per_layer < 1) bad("nodes_per_layer must be >= 1");
    if (!(input_dropout >= 0 && input_dropout < 1)) bad("input_dropout must be in [0, 1)");
    if (!(hidden_dropout >= 0 && hidden_dropout < 1)) bad("hidden_dropout must be in [0, 1)");
  }

  /// Full check against the tuning bounds.
  void validate() const {
    validate_structure();
    auto out = [](const std::string& what) { throw Error(Errc::OutOfBounds, what); };
    using B = MlpBounds;
    if (learning_rate < B::kMinLearningRate || learning_rate > B::kMaxLearningRate)
      out("learning_rate outside [1e-5, 1e-1]");
    if (n_hidden_layers < B::kMinLayers || n_hidden_layers > B::kMaxLayers)
      out("n_hidden_layers outside [1, 8]");
    if (nodes_per_layer < B::kMinNodes || nodes_per_layer > B::kMaxNodes)
      out("nodes_per_layer outside [20, 500]");
    if (input_dropout < B::kMinInputDropout || input_dropout > B::kMaxInputDropout)
      out("input_dropout outside [0.4, 0.9]");
    if (hidden_dropout < B::kMinHiddenDropout || hidden_dropout > B::kMaxHiddenDropout)
      out("hidden_dropout outside [0.2, 0.7]");
  }
};

inline nlohmann::json to_json(const MlpArchitecture& a) {
  return {{"learning_rate", a.learning_rate},   {"n_hidden_layers", a.n_hidden_layers},
          {"nodes_per_layer", a.nodes_per_layer}, {"input_dropout", a.input_dropout},
          {"hidden_dropout", a.hidden_dropout}, {"activation", to_string(a.activation)}};
}

inline MlpArchitecture architecture_from_json(const nlohmann::json& j) {
  MlpArchitecture a;
  a.learning_rate = j.at("learning_rate").get<double>();
  a.n_hidden_layers = j.at("n_hidden_layers").get<int>();
  a.nodes_per_layer = j.at("nodes_per_layer").get<int>();
  a.input_dropout = j.at("input_dropout").get<double>();
  a.hidden_dropout = j.at("hidden_dropout").get<double>();
  a.activation = parse_activation(j.at("activation").get<std::string>());
  return a;
}

/// Forward-pass mode. Train carries the RNG used to draw dropout masks.
class ForwardMode {
 public:
  static ForwardMode eval() { return ForwardMode(nullptr); }
  static ForwardMode train(Rng& rng) { return ForwardMode(&rng); }
  bool training() const { return rng_ != nullptr; }
  Rng& rng() const { return *rng_; }

 private:
  explicit ForwardMode(Rng* rng) : rng_(rng) {}
  Rng* rng_;
};

/// Index of the largest element; ties go to the lowest index.
template <typename Range>
int argmax_lowest(const Range& values) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(std::size(values)); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

template <typename Scalar>
class Mlp {
  static_assert(std::is_floating_point_v<Scalar>);

 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  /// `weights` is out x in column-major, which is the same memory as the
  /// in x out row-major matrix.
  struct Layer {
    Matrix weights;
    Vector bias;
    int fan_in() const { return static_cast<int>(weights.cols()); }
    int fan_out() const { return static_cast<int>(weights.rows()); }
  };

  struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
  };

  /// All-zero parameters.
  Mlp(const MlpArchitecture& arch, int input_dim) : arch_(arch), input_dim_(input_dim) {
    arch.validate_structure();
    if (input_dim < 1) throw Error(Errc::InvalidDims, "input_dim must be >= 1");
    int fan_in = input_dim;
    for (int l = 0; l <= arch.n_hidden_layers; ++l) {
      const int fan_out = l < arch.n_hidden_layers ? arch.nodes_per_layer : kNumClasses;
      layers_.push_back({Matrix::Zero(fan_out, fan_in), Vector::Zero(fan_out)});
      fan_in = fan_out;
    }
  }

  const MlpArchitecture& architecture() const { return arch_; }
  int input_dim() const { return input_dim_; }
  static constexpr int output_dim() { return kNumClasses; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  /// Raw output scores for a batch laid out one column per sample.
  Matrix logits(const Matrix& inputs, ForwardMode mode) const {
    Cache cache;
    run_forward(inputs, mode, cache);
    return std::move(cache.logits);
  }

  /// Softmax probabilities for one input vector.
  std::array<double, kNumClasses> forward(std::span<const double> input, ForwardMode mode) const {
    return forward_one(input, mode);
  }
  std::array<double, kNumClasses> forward(std::span<const float> input, ForwardMode mode) const {
    return forward_one(input, mode);
  }

  int predict(std::span<const double> input) const {
    return argmax_lowest(forward(input, ForwardMode::eval()));
  }
  int predict(std::span<const float> input) const {
    return argmax_lowest(forward(input, ForwardMode::eval()));
  }

  /// Eval-mode predictions for every column.
  std::vector<int> predict_batch(const Matrix& inputs) const {
    const Matrix z = logits(inputs, ForwardMode::eval());
    std::vector<int> out(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index c = 0; c < z.cols(); ++c) out[c] = argmax_lowest(softmax_column(z, c));
    return out;
  }

  /// Mean cross-entropy and its gradients. Dropout masks are drawn from
  /// `mode` and reused in the backward pass.
  double loss_and_gradients(const Matrix& inputs, std::span<const int> labels, ForwardMode mode,
                            Gradients& grads) const {
    grads.weights.resize(layers_.size());
    grads.biases.resize(layers_.size());
    return backprop_impl(inputs, labels, mode, [&](std::size_t l, const Matrix& dz, const Matrix& a_prev) {
      grads.weights[l].noalias() = dz * a_prev.transpose();
      grads.biases[l] = dz.rowwise().sum();
    });
  }

  /// One plain SGD step on a minibatch. Returns the batch loss before the step.
  double sgd_step(const Matrix& inputs, std::span<const int> labels, Scalar learning_rate,
                  ForwardMode mode) {
    return backprop_impl(inputs, labels, mode, [&](std::size_t l, const Matrix& dz, const Matrix& a_prev) {
      layers_[l].weights.noalias() -= (learning_rate * dz) * a_prev.transpose();
      layers_[l].bias.noalias() -= learning_rate * dz.rowwise().sum();
    });
  }

  /// Numerically stable softmax of column `c`, accumulated in double.
  static std::array<double, kNumClasses> softmax_column(const Matrix& z, Eigen::Index c) {
    std::array<double, kNumClasses> p{};
    double zmax = static_cast<double>(z(0, c));
    for (int k = 1; k < kNumClasses; ++k) zmax = std::max(zmax, static_cast<double>(z(k, c)));
    double sum = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      p[k] = std::exp(static_cast<double>(z(k, c)) - zmax);
      sum += p[k];
    }
    for (auto& v : p) v /= sum;
    return p;
  }

 private:
  template <typename T>
  std::array<double, kNumClasses> forward_one(std::span<const T> input, ForwardMode mode) const {
    if (static_cast<int>(input.size()) != input_dim_) {
      throw Error(Errc::DimMismatch, "input has " + std::to_string(input.size()) +
                                         " values, model expects " + std::to_string(input_dim_));
    }
    Matrix x(input_dim_, 1);
    for (int i = 0; i < input_dim_; ++i) {
      if (!std::isfinite(static_cast<double>(input[i])))
        throw Error(Errc::NonFiniteInput, "non-finite input at index " + std::to_string(i));
      x(i, 0) = static_cast<Scalar>(input[i]);
    }
    const Matrix z = logits(x, mode);
    return softmax_column(z, 0);
  }

  struct Cache {
    std::vector<Matrix> acts;   // input to each layer, after dropout
    std::vector<Matrix> pre;    // hidden pre-activations
    std::vector<Matrix> post;   // hidden activations before dropout
    std::vector<Matrix> masks;  // scaled dropout masks, empty when unused
    Matrix logits;
  };

  static Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Matrix m(rows, cols);
    const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p));
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform01(rng) < p ? Scalar(0) : keep;
    }
    return m;
  }

  void activate(const Matrix& z, Matrix& h) const {
    if (arch_.activation == Activation::ReLU) {
      h = z.cwiseMax(Scalar(0));
    } else {
      h = (Scalar(1) + (-z.array()).exp()).inverse().matrix();
    }
  }

  void run_forward(const Matrix& inputs, ForwardMode mode, Cache& cache) const {
    if (inputs.rows() != input_dim_) {
      throw Error(Errc::DimMismatch, "input has " + std::to_string(inputs.rows()) +
                                         " rows, model expects " + std::to_string(input_dim_));
    }
    const std::size_t hidden = layers_.size() - 1;
    cache.acts.assign(layers_.size(), Matrix());
    cache.pre.assign(hidden, Matrix());
    cache.post.assign(hidden, Matrix());
    cache.masks.assign(layers_.size(), Matrix());

    const bool drop_in = mode.training() && arch_.input_dropout > 0;
    if (drop_in) {
      cache.masks[0] = dropout_mask(inputs.rows(), inputs.cols(), arch_.input_dropout, mode.rng());
      cache.acts[0] = inputs.cwiseProduct(cache.masks[0]);
    }
    const Matrix& x0 = drop_in ? cache.acts[0] : inputs;
    const Matrix* a = &x0;
    for (std::size_t l = 0; l < hidden; ++l) {
      cache.pre[l].noalias() = layers_[l].weights * (*a);
      cache.pre[l].colwise() += layers_[l].bias;
      activate(cache.pre[l], cache.post[l]);
      if (mode.training() && arch_.hidden_dropout > 0) {
        cache.masks[l + 1] = dropout_mask(cache.post[l].rows(), cache.post[l].cols(),
                                          arch_.hidden_dropout, mode.rng());
        cache.acts[l + 1] = cache.post[l].cwiseProduct(cache.masks[l + 1]);
      } else {
        cache.acts[l + 1] = cache.post[l];
      }
      a = &cache.acts[l + 1];
    }
    cache.logits.noalias() = layers_.back().weights * (*a);
    cache.logits.colwise() += layers_.back().bias;
    if (!drop_in) cache.acts[0] = Matrix();  // layer 0 reads `inputs` directly
  }

  // Gradients for layer l are handed to `sink` only after the signal for
  // layer l-1 has been computed, so the sink may update layer l in place.
  template <typename Sink>
  double backprop_impl(const Matrix& inputs, std::span<const int> labels, ForwardMode mode,
                       Sink&& sink) const {
    const Eigen::Index batch = inputs.cols();
    if (batch == 0) throw Error(Errc::DimMismatch, "empty batch");
    if (static_cast<Eigen::Index>(labels.size()) != batch)
      throw Error(Errc::DimMismatch, "label count does not match batch size");
    for (int y : labels) {
      if (y < 0 || y >= kNumClasses) throw Error(Errc::BadLabel, "label out of range");
    }
    Cache cache;
    run_forward(inputs, mode, cache);

    Matrix dz(kNumClasses, batch);
    double loss = 0;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (Eigen::Index c = 0; c < batch; ++c) {
      const auto p = softmax_column(cache.logits, c);
      loss -= std::log(std::max(p[labels[c]], 1e-300));
      for (int k = 0; k < kNumClasses; ++k) {
        dz(k, c) = static_cast<Scalar>((p[k] - (k == labels[c] ? 1.0 : 0.0)) * inv_batch);
      }
    }
    loss *= inv_batch;

    auto layer_input = [&](std::size_t l) -> const Matrix& {
      return (l == 0 && cache.acts[0].size() == 0) ? inputs : cache.acts[l];
    };
    for (std::size_t l = layers_.size(); l-- > 0;) {
      Matrix next;
      if (l > 0) {
        const std::size_t h = l - 1;  // hidden layer feeding layer l
        next.noalias() = layers_[l].weights.transpose() * dz;
        if (cache.masks[l].size() != 0) next.array() *= cache.masks[l].array();
        if (arch_.activation == Activation::ReLU) {
          next.array() *= (cache.pre[h].array() > Scalar(0)).template cast<Scalar>();
        } else {
          next.array() *= cache.post[h].array() * (Scalar(1) - cache.post[h].array());
        }
      }
      sink(l, dz, layer_input(l));
      dz = std::move(next);
    }
    return loss;
  }

  MlpArchitecture arch_;
  int input_dim_;
  std::vector<Layer> layers_;
};

/// Half-width of the uniform initialisation range for one layer.
inline double init_limit(Activation activation, Eigen::Index fan_in, Eigen::Index fan_out,
                         bool output_layer) {
  if (activation == Activation::ReLU && !output_layer) return std::sqrt(6.0 / static_cast<double>(fan_in));
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// Uniform initialisation: He limits for ReLU hidden layers, Glorot limits for
/// sigmoid hidden layers and for the softmax layer. Biases start at zero.
template <typename Scalar = float>
Mlp<Scalar> init_model(const MlpArchitecture& arch, int input_dim, std::uint64_t seed) {
  Mlp<Scalar> model(arch, input_dim);
  Rng rng(sub_seed(seed, "init"));
  auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weights;
    const double limit = init_limit(arch.activation, w.cols(), w.rows(), l + 1 == layers.size());
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(uniform(rng, -limit, limit));
    }
  }
  return model;
}

inline constexpr char kModelMagic[8] = {'P', 'M', 'U', 'M', 'L', 'P', '1', '\n'};

template <typename Scalar>
constexpr const char* scalar_name() {
  return sizeof(Scalar) == 4 ? "float32" : "float64";
}

/// Magic, a JSON header line, then each layer's weights (in x out row-major)
/// and bias as raw little-endian values.
template <typename Scalar>
void save_model(const Mlp<Scalar>& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["scalar"] = scalar_name<Scalar>();
  header["input_dim"] = model.input_dim();
  header["output_dim"] = model.output_dim();
  header["architecture"] = to_json(model.architecture());
  auto shapes = nlohmann::json::array();
  for (const auto& l : model.layers()) shapes.push_back({l.fan_in(), l.fan_out()});
  header["layer_shapes"] = shapes;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  out.write(kModelMagic, sizeof kModelMagic);
  out << header.dump() << '\n';
  for (const auto& l : model.layers()) {
    out.write(reinterpret_cast<const char*>(l.weights.data()),
              static_cast<std::streamsize>(l.weights.size() * sizeof(Scalar)));
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              static_cast<std::streamsize>(l.bias.size() * sizeof(Scalar)));
  }
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

template <typename Scalar = float>
Mlp<Scalar> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  char magic[sizeof kModelMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw Error(Errc::MalformedModel, path.string() + " is not a model file");
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedModel, std::string("bad model header: ") + e.what());
  }
  if (header.value("scalar", "") != scalar_name<Scalar>())
    throw Error(Errc::MalformedModel, "model scalar type is " + header.value("scalar", "?"));
  Mlp<Scalar> model(architecture_from_json(header.at("architecture")), header.at("input_dim").get<int>());
  const auto& shapes = header.at("layer_shapes");
  if (shapes.size() != model.layers().size())
    throw Error(Errc::MalformedModel, "layer count mismatch");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    auto& l = model.layers()[i];
    if (shapes[i][0].get<int>() != l.fan_in() || shapes[i][1].get<int>() != l.fan_out())
      throw Error(Errc::MalformedModel, "layer shape mismatch");
    in.read(reinterpret_cast<char*>(l.weights.data()),
            static_cast<std::streamsize>(l.weights.size() * sizeof(Scalar)));
    in.read(reinterpret_cast<char*>(l.bias.data()),
            static_cast<std::streamsize>(l.bias.size() * sizeof(Scalar)));
  }
  if (!in) throw Error(Errc::MalformedModel, "truncated model file " + path.string());
  if (!model.all_finite()) throw Error(Errc::MalformedModel, "model contains non-finite parameters");
  return model;
}

}  // namespace pmuclass
