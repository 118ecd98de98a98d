#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "droptune/data.hpp"
#include "droptune/errors.hpp"
#include "droptune/nn.hpp"
#include "droptune/rng.hpp"
#include "support/test_support.hpp"

namespace droptune::nn {
namespace {

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = rng.normal();
  return x;
}

Eigen::VectorXd random_labels(Eigen::Index rows, Rng& rng) {
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return y;
}

MlpConfig config(std::size_t in, std::size_t layers, std::size_t units, double dropout = 0.0,
                 std::uint64_t seed = 1) {
  MlpConfig c;
  c.input_dim = in;
  c.hidden_layers = layers;
  c.hidden_units = units;
  c.dropout_rate = dropout;
  c.init_seed = seed;
  return c;
}

TEST(Xavier, UnitFanStaysWithinSqrtThree) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto w = xavier_init(1, 1, rng);
    EXPECT_LE(std::abs(w(0, 0)), std::sqrt(3.0));
  }
}

TEST(Xavier, VarianceMatchesUniformLimit) {
  Rng rng(11);
  const auto w = xavier_init(100, 100, rng);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  EXPECT_NEAR(var, 0.01, 0.002);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 200.0));
}

TEST(Xavier, SameSeedSameMatrix) {
  Rng a(5);
  Rng b(5);
  EXPECT_EQ(xavier_init(7, 3, a), xavier_init(7, 3, b));
}

TEST(Model, BiasesStartAtZeroAndShapesChain) {
  const MlpModel m(config(3, 2, 5));
  ASSERT_EQ(m.params().size(), 3u);
  EXPECT_EQ(m.params()[0].weights.rows(), 3);
  EXPECT_EQ(m.params()[0].weights.cols(), 5);
  EXPECT_EQ(m.params()[2].weights.cols(), 1);
  for (const auto& layer : m.params()) EXPECT_TRUE(layer.bias.isZero());
  EXPECT_EQ(m.parameter_count(), 3u * 5 + 5 + 5 * 5 + 5 + 5 + 1);
}

TEST(Model, InvalidConfigRejected) {
  EXPECT_THROW(MlpModel(config(0, 1, 4)), DomainError);
  EXPECT_THROW(MlpModel(config(2, 1, 0)), DomainError);
  EXPECT_THROW(MlpModel(config(2, 1, 4, 1.0)), DomainError);
  EXPECT_THROW(MlpModel(config(2, 1, 4, -0.1)), DomainError);
}

TEST(Forward, ZeroWeightsGiveOneHalf) {
  MlpModel m(config(4, 3, 8));
  for (auto& layer : m.mutable_params()) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  Rng rng(2);
  const auto out = forward(m, random_batch(6, 4, rng));
  for (Eigen::Index i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], 0.5);
}

TEST(Forward, HandComputedTwoLayerChain) {
  MlpConfig c = config(1, 1, 2);
  ParamSet p(2);
  p[0].weights.resize(1, 2);
  p[0].weights << 0.5, -1.5;
  p[0].bias.resize(2);
  p[0].bias << 0.25, 0.1;
  p[1].weights.resize(2, 1);
  p[1].weights << 2.0, -3.0;
  p[1].bias.resize(1);
  p[1].bias << -0.2;
  const MlpModel m(c, p);
  Eigen::MatrixXd x(2, 1);
  x << 1.2, -0.4;
  const auto out = forward(m, x);
  for (int i = 0; i < 2; ++i) {
    const double h1 = std::max(0.0, 0.5 * x(i, 0) + 0.25);
    const double h2 = std::max(0.0, -1.5 * x(i, 0) + 0.1);
    const double z = 2.0 * h1 - 3.0 * h2 - 0.2;
    EXPECT_NEAR(out[i], 1.0 / (1.0 + std::exp(-z)), 1e-12);
  }
}

TEST(Forward, ZeroDropoutTrainEqualsEval) {
  const MlpModel m(config(3, 4, 10, 0.0));
  Rng data_rng(8);
  const auto x = random_batch(17, 3, data_rng);
  Rng drop_rng(9);
  EXPECT_EQ(forward(m, x), forward(m, x, drop_rng));
}

TEST(Forward, ColumnMismatchIsShapeError) {
  const MlpModel m(config(3, 1, 4));
  EXPECT_THROW(forward(m, Eigen::MatrixXd::Zero(2, 4)), ShapeError);
}

TEST(Dropout, InvertedMaskPreservesMean) {
  for (const double p : {0.2, 0.5, 0.8}) {
    const MlpModel m(config(1, 1, 1000, p));
    Rng rng(21);
    const auto masks = sample_dropout_masks(m, 1000, rng);
    ASSERT_EQ(masks.size(), 1u);
    EXPECT_NEAR(masks[0].mean(), 1.0, 0.01) << "rate " << p;
    for (Eigen::Index i = 0; i < masks[0].size(); ++i) {
      const double v = masks[0].data()[i];
      EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / (1.0 - p)) < 1e-12);
    }
  }
}

TEST(Loss, BceHandValues) {
  EXPECT_NEAR(bce_cost(Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Ones(1)), std::log(2.0),
              1e-12);
  EXPECT_NEAR(bce_cost(Eigen::VectorXd::Constant(1, 1.0 - 1e-7), Eigen::VectorXd::Ones(1)), 1e-7,
              1e-12);
  Eigen::VectorXd h(2);
  h << 0.9, 0.1;
  Eigen::VectorXd y(2);
  y << 1.0, 0.0;
  EXPECT_NEAR(bce_cost(h, y), -std::log(0.9), 1e-12);
}

TEST(Loss, BceClampsSaturatedPredictions) {
  Eigen::VectorXd h(2);
  h << 0.0, 1.0;
  Eigen::VectorXd y(2);
  y << 1.0, 0.0;
  const double c = bce_cost(h, y);
  EXPECT_TRUE(std::isfinite(c));
  EXPECT_NEAR(c, -std::log(1e-7), 1e-9);
}

TEST(Loss, EmptyInputIsDomainError) {
  EXPECT_THROW(bce_cost(Eigen::VectorXd(), Eigen::VectorXd()), DomainError);
  EXPECT_THROW(binary_accuracy(Eigen::VectorXd(), Eigen::VectorXd()), DomainError);
}

TEST(Accuracy, CountsAndTieRule) {
  Eigen::VectorXd h(4);
  h << 0.9, 0.2, 0.7, 0.6;
  Eigen::VectorXd y(4);
  y << 1, 0, 1, 0;
  EXPECT_DOUBLE_EQ(binary_accuracy(h, y), 75.0);
  y << 1, 0, 1, 1;
  EXPECT_DOUBLE_EQ(binary_accuracy(h, y), 100.0);
  EXPECT_DOUBLE_EQ(binary_accuracy(Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Ones(1)),
                   100.0);
}

TEST(Backward, LogisticModelClosedForm) {
  MlpConfig c = config(3, 0, 1);
  const MlpModel m(c);
  Rng rng(4);
  const auto x = random_batch(9, 3, rng);
  const auto y = random_labels(9, rng);
  const auto cache = forward_cached(m, x);
  const auto g = backward(m, cache, y, Loss::binary_cross_entropy);
  const Eigen::VectorXd expected = x.transpose() * (cache.output - y) / 9.0;
  EXPECT_LT((g[0].weights.col(0) - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(g[0].bias[0], (cache.output - y).sum() / 9.0, 1e-14);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(99);
  const std::size_t layers[] = {1, 2, 3, 4, 6};
  const std::size_t units[] = {4, 9, 16, 32, 7};
  for (int k = 0; k < 5; ++k) {
    const MlpModel m(config(3, layers[k], units[k], 0.0, 100 + k));
    const auto x = random_batch(12, 3, rng);
    const auto y = random_labels(12, rng);
    const auto r = testing::finite_difference_check(m, x, y, Loss::binary_cross_entropy);
    EXPECT_LT(r.max_relative_error, 1e-4) << layers[k] << "x" << units[k];
    EXPECT_EQ(r.checked, m.parameter_count());
  }
}

TEST(Backward, MseWithIdentityOutputMatchesFiniteDifferences) {
  MlpConfig c = config(2, 3, 6, 0.0, 5);
  c.output_activation = OutputActivation::identity;
  const MlpModel m(c);
  Rng rng(7);
  const auto x = random_batch(10, 2, rng);
  const Eigen::VectorXd y = random_batch(10, 1, rng).col(0);
  const auto r = testing::finite_difference_check(m, x, y, Loss::mean_squared_error);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Backward, DuplicatedRowsLeaveGradientUnchanged) {
  const MlpModel m(config(2, 2, 5));
  Rng rng(12);
  const auto x = random_batch(4, 2, rng);
  const auto y = random_labels(4, rng);
  Eigen::MatrixXd x2(8, 2);
  x2 << x, x;
  Eigen::VectorXd y2(8);
  y2 << y, y;
  const auto g1 = backward(m, forward_cached(m, x), y, Loss::binary_cross_entropy);
  const auto g2 = backward(m, forward_cached(m, x2), y2, Loss::binary_cross_entropy);
  for (std::size_t l = 0; l < g1.size(); ++l) {
    EXPECT_LT((g1[l].weights - g2[l].weights).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((g1[l].bias - g2[l].bias).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Backward, CrossEntropyNeedsSigmoid) {
  MlpConfig c = config(2, 1, 3);
  c.output_activation = OutputActivation::identity;
  const MlpModel m(c);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_THROW(backward(m, forward_cached(m, x), Eigen::VectorXd::Ones(2),
                        Loss::binary_cross_entropy),
               DomainError);
}

ParamSet scalar_params(double v) {
  ParamSet p(1);
  p[0].weights = Eigen::MatrixXd::Constant(1, 1, v);
  p[0].bias = Eigen::VectorXd::Zero(1);
  return p;
}

TEST(Adam, FirstStepIsMinusLearningRateTimesSign) {
  ParamSet p = scalar_params(0.0);
  AdamState s = AdamState::for_params(p);
  ParamSet g = scalar_params(4.0);
  adam_step(p, g, s, AdamConfig{});
  EXPECT_EQ(s.t, 1u);
  EXPECT_NEAR(p[0].weights(0, 0), -0.001, 1e-9);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  ParamSet p = scalar_params(0.7);
  AdamState s = AdamState::for_params(p);
  adam_step(p, zeros_like(p), s, AdamConfig{});
  EXPECT_EQ(p[0].weights(0, 0), 0.7);
  EXPECT_EQ(p[0].bias[0], 0.0);
}

TEST(Adam, MatchesScalarOracleOverTenSteps) {
  const std::vector<double> grads{0.3, -1.2, 2.5, 0.0, 0.7, -0.05, 3.1, -2.2, 0.4, 1.0};
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  const auto oracle = testing::scalar_adam(0.25, grads, cfg.learning_rate, cfg.beta1, cfg.beta2,
                                           cfg.epsilon);
  ParamSet p = scalar_params(0.25);
  AdamState s = AdamState::for_params(p);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    adam_step(p, scalar_params(grads[t]), s, cfg);
    EXPECT_NEAR(p[0].weights(0, 0), oracle[t], 1e-12) << "step " << t + 1;
  }
  EXPECT_EQ(s.t, grads.size());
}

TEST(Adam, NonFiniteGradientNamesLayer) {
  MlpModel m(config(2, 2, 3));
  AdamState s = AdamState::for_params(m.params());
  ParamSet g = zeros_like(m.params());
  g[1].weights(0, 0) = std::nan("");
  try {
    adam_step(m.mutable_params(), g, s, AdamConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), 1u);
  }
  EXPECT_EQ(s.t, 0u);
}

data::Dataset blobs(std::size_t rows, std::uint64_t seed) {
  return data::make_synthetic(data::SyntheticKind::separable_blobs, rows, seed);
}

TEST(Train, SeparableBlobsReachHighAccuracy) {
  const auto parts = data::split(blobs(1000, 1), 0.2, 1);
  const auto std_parts = data::standardize(parts.train, {parts.val});
  MlpConfig mc;
  mc.hidden_layers = 6;
  mc.hidden_units = 16;
  mc.dropout_rate = 0.1;
  mc.init_seed = 3;
  TrainConfig tc;
  tc.epochs = 50;
  tc.shuffle_seed = 4;
  tc.dropout_seed = 5;
  const auto r = train(mc, tc, std_parts.train, std_parts.others[0]);
  EXPECT_GE(r.metrics.accuracy, 95.0);
  EXPECT_LE(r.metrics.cost, 0.2);
}

TEST(Train, OneEpochIsFiniteAndZeroEpochsRejected) {
  const auto parts = data::split(blobs(100, 2), 0.2, 2);
  MlpConfig mc;
  mc.hidden_layers = 2;
  mc.hidden_units = 4;
  TrainConfig tc;
  tc.epochs = 1;
  const auto r = train(mc, tc, parts.train, parts.val);
  EXPECT_TRUE(std::isfinite(r.metrics.cost));
  EXPECT_GE(r.metrics.cost, 0.0);
  EXPECT_GE(r.metrics.accuracy, 0.0);
  EXPECT_LE(r.metrics.accuracy, 100.0);
  tc.epochs = 0;
  EXPECT_THROW(train(mc, tc, parts.train, parts.val), DomainError);
}

TEST(Train, SameSeedsBitIdentical) {
  const auto parts = data::split(blobs(300, 3), 0.2, 3);
  MlpConfig mc;
  mc.hidden_layers = 3;
  mc.hidden_units = 8;
  mc.dropout_rate = 0.3;
  mc.init_seed = 1;
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 50;  // leaves a partial final batch
  tc.shuffle_seed = 2;
  tc.dropout_seed = 3;
  const auto a = train(mc, tc, parts.train, parts.val);
  const auto b = train(mc, tc, parts.train, parts.val);
  EXPECT_EQ(a.metrics.cost, b.metrics.cost);
  EXPECT_EQ(a.metrics.accuracy, b.metrics.accuracy);
  for (std::size_t l = 0; l < a.model.params().size(); ++l)
    EXPECT_EQ(a.model.params()[l].weights, b.model.params()[l].weights);
  tc.dropout_seed = 4;
  const auto c = train(mc, tc, parts.train, parts.val);
  EXPECT_NE(a.model.params()[0].weights, c.model.params()[0].weights);
}

TEST(Train, DivergenceCarriesEpoch) {
  const auto parts = data::split(blobs(100, 4), 0.2, 4);
  MlpConfig mc;
  mc.hidden_layers = 1;
  mc.hidden_units = 4;
  mc.input_dim = 2;
  mc.output_activation = OutputActivation::identity;
  MlpModel m(mc);
  TrainConfig tc;
  tc.epochs = 3;
  Eigen::VectorXd y = parts.train.labels;
  y[0] = std::numeric_limits<double>::infinity();
  try {
    train_network(m, tc, parts.train.features, y, Loss::mean_squared_error);
    FAIL() << "expected DivergedError";
  } catch (const DivergedError& e) {
    EXPECT_EQ(e.epoch(), 1u);
  }
}

TEST(Serialization, RoundTripPreservesPredictions) {
  const MlpModel m(config(3, 2, 5, 0.2, 77));
  const auto j = to_json(m);
  const auto back = model_from_json(nlohmann::ordered_json::parse(j.dump()));
  Rng rng(1);
  const auto x = random_batch(4, 3, rng);
  EXPECT_EQ(forward(m, x), forward(back, x));
  EXPECT_EQ(back.config().init_seed, 77u);
  EXPECT_EQ(j.dump(), to_json(back).dump());
}

TEST(Serialization, MalformedModelIsSchemaError) {
  auto j = to_json(MlpModel(config(2, 1, 3)));
  j["layers"][0]["weights"].erase(0);
  EXPECT_THROW(model_from_json(j), SchemaError);
  EXPECT_THROW(model_from_json(nlohmann::ordered_json::object()), SchemaError);
}

}  // namespace
}  // namespace droptune::nn
