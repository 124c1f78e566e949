#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "pmuclass/mlp.hpp"

using namespace pmuclass;

namespace {

using MlpD = Mlp<double>;

MlpArchitecture small_arch(Activation act, int layers = 2, int nodes = 6) {
  MlpArchitecture a;
  a.n_hidden_layers = layers;
  a.nodes_per_layer = nodes;
  a.input_dropout = 0;
  a.hidden_dropout = 0;
  a.activation = act;
  return a;
}

MlpD::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  MlpD::Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, -1, 1);
  return m;
}

double loss_of(const MlpD& m, const MlpD::Matrix& x, const std::vector<int>& y) {
  MlpD::Gradients g;
  return m.loss_and_gradients(x, y, ForwardMode::eval(), g);
}

void check_finite_differences(Activation act) {
  auto model = init_model<double>(small_arch(act), 10, 3);
  // Non-zero biases so every parameter path is exercised.
  Rng rng(11);
  for (auto& l : model.layers())
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = uniform(rng, -0.5, 0.5);
  const auto x = random_matrix(10, 7, 5);
  const std::vector<int> y = {0, 1, 2, 3, 1, 2, 0};
  MlpD::Gradients g;
  model.loss_and_gradients(x, y, ForwardMode::eval(), g);

  const double h = 1e-5;
  int checked = 0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = loss_of(model, x, y);
    param = saved - h;
    const double down = loss_of(model, x, y);
    param = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    EXPECT_LE(std::abs(analytic - numeric) / scale, 1e-4) << analytic << " vs " << numeric;
    ++checked;
  };
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    auto& layer = model.layers()[l];
    for (Eigen::Index j = 0; j < layer.weights.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) check(layer.weights(i, j), g.weights[l](i, j));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check(layer.bias(i), g.biases[l](i));
  }
  EXPECT_EQ(static_cast<std::size_t>(checked), model.parameter_count());
}

}  // namespace

TEST(MlpArchitecture, BoundsValidation) {
  MlpArchitecture a;
  EXPECT_NO_THROW(a.validate());
  a.learning_rate = 0.2;
  EXPECT_THROW(a.validate(), Error);
  a = {};
  a.nodes_per_layer = 501;
  EXPECT_THROW(a.validate(), Error);
  a = {};
  a.input_dropout = 0.3;
  EXPECT_THROW(a.validate(), Error);
  a = {};
  a.n_hidden_layers = 0;
  try {
    a.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidDims);
  }
}

TEST(InitModel, ShapesChain) {
  MlpArchitecture a;
  a.n_hidden_layers = 1;
  a.nodes_per_layer = 20;
  const auto m = init_model<float>(a, 14400, 1);
  ASSERT_EQ(m.layers().size(), 2u);
  EXPECT_EQ(m.layers()[0].fan_in(), 14400);
  EXPECT_EQ(m.layers()[0].fan_out(), 20);
  EXPECT_EQ(m.layers()[1].fan_in(), 20);
  EXPECT_EQ(m.layers()[1].fan_out(), 4);
  EXPECT_TRUE(m.layers()[0].bias.isZero());

  a.n_hidden_layers = 3;
  a.nodes_per_layer = 30;
  const auto deep = init_model<float>(a, 100, 1);
  EXPECT_EQ(deep.parameter_count(), 100u * 30 + 30 + 2 * (30 * 30 + 30) + 30 * 4 + 4);
}

TEST(InitModel, DeterministicPerSeed) {
  MlpArchitecture a;
  a.n_hidden_layers = 2;
  a.nodes_per_layer = 25;
  const auto m1 = init_model<float>(a, 300, 9);
  const auto m2 = init_model<float>(a, 300, 9);
  const auto m3 = init_model<float>(a, 300, 10);
  for (std::size_t l = 0; l < m1.layers().size(); ++l) {
    EXPECT_EQ(m1.layers()[l].weights, m2.layers()[l].weights);
  }
  EXPECT_NE(m1.layers()[0].weights, m3.layers()[0].weights);
}

TEST(InitModel, FirstLayerSpreadMatchesScalingRule) {
  for (Activation act : {Activation::ReLU, Activation::Sigmoid}) {
    MlpArchitecture a;
    a.nodes_per_layer = 20;
    a.activation = act;
    const double fan_in = 14400, fan_out = 20;
    const double target = act == Activation::ReLU ? std::sqrt(2.0 / fan_in) : std::sqrt(2.0 / (fan_in + fan_out));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto m = init_model<double>(a, 14400, seed);
      const auto& w = m.layers()[0].weights;
      const double mean = w.mean();
      const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size());
      EXPECT_NEAR(std::sqrt(var), target, 0.1 * target);
    }
  }
}

TEST(InitModel, RejectsBadDims) {
  try {
    init_model<float>(MlpArchitecture{}, 0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidDims);
  }
}

TEST(Forward, ZeroModelIsUniform) {
  const MlpD m(small_arch(Activation::Sigmoid), 5);
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const auto p = m.forward(x, ForwardMode::eval());
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
  EXPECT_EQ(m.predict(std::span<const double>(x)), 0);
}

TEST(Forward, HandBuiltReluNet) {
  // 2 inputs, one hidden layer of 2 ReLU units, unit weights everywhere.
  MlpD m(small_arch(Activation::ReLU, 1, 2), 2);
  for (auto& l : m.layers()) l.weights.setOnes();
  const std::vector<double> x = {1, -1};
  // h = relu(1 - 1) = 0 for both units, so every logit is 0.
  auto p = m.forward(x, ForwardMode::eval());
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);

  // Distinct weights: W1 = [[2, 1], [-1, 3]], b1 = [0.5, 0]
  //   h = relu([2 - 1 + 0.5, -1 - 3]) = [1.5, 0]
  // W2 rows [1,0], [0,1], [-1,0], [2,0], b2 = [0, 0, 0, 0.1]
  //   z = [1.5, 0, -1.5, 3.1]
  m.layers()[0].weights << 2, 1, -1, 3;
  m.layers()[0].bias << 0.5, 0;
  m.layers()[1].weights << 1, 0, 0, 1, -1, 0, 2, 0;
  m.layers()[1].bias << 0, 0, 0, 0.1;
  const double z[4] = {1.5, 0.0, -1.5, 3.1};
  double sum = 0;
  for (double v : z) sum += std::exp(v);
  p = m.forward(x, ForwardMode::eval());
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(p[k], std::exp(z[k]) / sum, 1e-15);
  EXPECT_EQ(m.predict(std::span<const double>(x)), 3);
}

TEST(Forward, SoftmaxNormalisedAndEvalRepeatable) {
  MlpArchitecture a;
  a.n_hidden_layers = 3;
  a.nodes_per_layer = 40;
  a.activation = Activation::Sigmoid;
  const auto m = init_model<double>(a, 50, 4);
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(50);
    for (auto& v : x) v = uniform(rng, -5, 5);
    const auto p = m.forward(x, ForwardMode::eval());
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (double v : p) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    EXPECT_EQ(p, m.forward(x, ForwardMode::eval()));
  }
}

TEST(Forward, Errors) {
  const MlpD m(small_arch(Activation::ReLU), 3);
  const std::vector<double> short_input = {1, 2};
  try {
    m.forward(short_input, ForwardMode::eval());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimMismatch);
  }
  const std::vector<double> nan_input = {1, NAN, 2};
  try {
    m.forward(nan_input, ForwardMode::eval());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteInput);
  }
}

TEST(Forward, DropoutExpectationMatchesEval) {
  // Positive inputs and weights keep every ReLU in its linear region, so the
  // logits are linear in the input mask and inverted dropout is unbiased.
  MlpArchitecture a = small_arch(Activation::ReLU, 1, 3);
  a.input_dropout = 0.5;
  MlpD m(a, 6);
  Rng rng(8);
  for (auto& l : m.layers())
    for (Eigen::Index j = 0; j < l.weights.cols(); ++j)
      for (Eigen::Index i = 0; i < l.weights.rows(); ++i) l.weights(i, j) = uniform(rng, 0.1, 1.0);
  const int n = 10000;
  MlpD::Matrix x(6, n);
  for (int i = 0; i < 6; ++i) x.row(i).setConstant(0.5 + 0.3 * i);
  Rng drop(99);
  const auto z_train = m.logits(x, ForwardMode::train(drop));
  const auto z_eval = m.logits(x.leftCols(1), ForwardMode::eval());
  for (int k = 0; k < 4; ++k) {
    const double mean = z_train.row(k).mean();
    const double sd = std::sqrt((z_train.row(k).array() - mean).square().sum() / (n - 1));
    EXPECT_LE(std::abs(mean - z_eval(k, 0)), 3 * sd / std::sqrt(n));
    EXPECT_GT(sd, 0);
  }
}

TEST(Loss, UniformModelGivesLn4) {
  const MlpD m(small_arch(Activation::Sigmoid), 4);
  const auto x = random_matrix(4, 5, 1);
  for (int label = 0; label < 4; ++label) {
    const std::vector<int> y(5, label);
    EXPECT_NEAR(loss_of(m, x, y), std::log(4.0), 1e-12);
  }
}

TEST(Loss, GradientsMatchFiniteDifferencesRelu) { check_finite_differences(Activation::ReLU); }

TEST(Loss, GradientsMatchFiniteDifferencesSigmoid) { check_finite_differences(Activation::Sigmoid); }

TEST(Loss, DuplicatedBatchIsInvariant) {
  const auto m = init_model<double>(small_arch(Activation::Sigmoid), 10, 2);
  const auto x = random_matrix(10, 6, 3);
  const std::vector<int> y = {3, 2, 1, 0, 0, 1};
  MlpD::Matrix x2(10, 12);
  x2 << x, x;
  std::vector<int> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  MlpD::Gradients g1, g2;
  const double l1 = m.loss_and_gradients(x, y, ForwardMode::eval(), g1);
  const double l2 = m.loss_and_gradients(x2, y2, ForwardMode::eval(), g2);
  EXPECT_NEAR(l1, l2, 1e-14);
  for (std::size_t l = 0; l < g1.weights.size(); ++l) {
    EXPECT_LE((g1.weights[l] - g2.weights[l]).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((g1.biases[l] - g2.biases[l]).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Loss, Errors) {
  const MlpD m(small_arch(Activation::ReLU), 3);
  MlpD::Gradients g;
  const auto x = random_matrix(3, 2, 0);
  EXPECT_THROW(m.loss_and_gradients(x, std::vector<int>{0}, ForwardMode::eval(), g), Error);
  EXPECT_THROW(m.loss_and_gradients(random_matrix(4, 2, 0), std::vector<int>{0, 1}, ForwardMode::eval(), g),
               Error);
  EXPECT_THROW(m.loss_and_gradients(x, std::vector<int>{0, 4}, ForwardMode::eval(), g), Error);
}

TEST(Loss, SgdStepMatchesGradients) {
  auto m = init_model<double>(small_arch(Activation::ReLU), 10, 5);
  const auto x = random_matrix(10, 4, 6);
  const std::vector<int> y = {0, 1, 2, 3};
  MlpD::Gradients g;
  m.loss_and_gradients(x, y, ForwardMode::eval(), g);
  auto stepped = m;
  stepped.sgd_step(x, y, 0.1, ForwardMode::eval());
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    const MlpD::Matrix expected = m.layers()[l].weights - 0.1 * g.weights[l];
    EXPECT_LE((stepped.layers()[l].weights - expected).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Predict, ArgmaxTieBreak) {
  EXPECT_EQ(argmax_lowest(std::array<double, 4>{0.1, 0.7, 0.1, 0.1}), 1);
  EXPECT_EQ(argmax_lowest(std::array<double, 4>{0.25, 0.25, 0.25, 0.25}), 0);
  EXPECT_EQ(argmax_lowest(std::array<double, 4>{0.1, 0.4, 0.1, 0.4}), 1);
}

TEST(Predict, AgreesWithForwardArgmax) {
  MlpArchitecture a;
  a.n_hidden_layers = 2;
  a.nodes_per_layer = 30;
  const auto m = init_model<float>(a, 40, 12);
  Rng rng(3);
  Mlp<float>::Matrix batch(40, 1000);
  for (int c = 0; c < 1000; ++c) {
    std::vector<float> x(40);
    for (auto& v : x) v = static_cast<float>(uniform(rng, -3, 3));
    batch.col(c) = Eigen::Map<const Eigen::VectorXf>(x.data(), 40);
    const auto p = m.forward(std::span<const float>(x), ForwardMode::eval());
    int best = 0;
    for (int k = 1; k < 4; ++k)
      if (p[k] > p[best]) best = k;
    EXPECT_EQ(m.predict(std::span<const float>(x)), best);
  }
  const auto preds = m.predict_batch(batch);
  for (int c = 0; c < 1000; ++c) {
    std::vector<float> x(batch.col(c).data(), batch.col(c).data() + 40);
    EXPECT_EQ(preds[c], m.predict(std::span<const float>(x)));
  }
}

TEST(ModelFile, RoundTripIsBitExact) {
  MlpArchitecture a;
  a.n_hidden_layers = 3;
  a.nodes_per_layer = 21;
  a.activation = Activation::Sigmoid;
  a.learning_rate = 1.25e-3;
  const auto m = init_model<float>(a, 33, 77);
  const auto path = std::filesystem::temp_directory_path() / "pmuclass_model_roundtrip.bin";
  save_model(m, path);
  const auto back = load_model<float>(path);
  EXPECT_EQ(back.architecture(), a);
  EXPECT_EQ(back.input_dim(), 33);
  const auto x = random_matrix(33, 50, 4).cast<float>().eval();
  const auto z1 = m.logits(x, ForwardMode::eval());
  const auto z2 = back.logits(x, ForwardMode::eval());
  EXPECT_EQ(std::memcmp(z1.data(), z2.data(), sizeof(float) * z1.size()), 0);
  EXPECT_THROW(load_model<double>(path), Error);
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "pmuclass_model_garbage.bin";
  {
    std::ofstream out(path);
    out << "not a model";
  }
  try {
    load_model<float>(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MalformedModel);
  }
  std::filesystem::remove(path);
}
