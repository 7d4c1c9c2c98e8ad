#include "sslab/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "test_util.hpp"

using namespace sslab;

namespace {

std::vector<TrainExample> random_batch(int n, int num_classes, int dim, std::uint64_t seed,
                                       bool soft_targets) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> cls(1, num_classes);
  std::uniform_real_distribution<double> w(0.5, 2.0);
  std::vector<TrainExample> out;
  for (int i = 0; i < n; ++i) {
    TrainExample ex;
    ex.feature.resize(dim);
    for (double& v : ex.feature) v = z(rng);
    ex.target = soft_targets ? testutil::random_simplex(num_classes, rng)
                             : SoftLabel::one_hot(num_classes, cls(rng));
    ex.weight = w(rng);
    out.push_back(std::move(ex));
  }
  return out;
}

TEST(SoftLabel, Builders) {
  auto u = SoftLabel::uniform(4);
  EXPECT_DOUBLE_EQ(u.probs[0], 0.25);
  auto o = SoftLabel::one_hot(3, 2);
  EXPECT_EQ(o.probs, (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_TRUE(o.is_one_hot());
  EXPECT_TRUE(u.is_valid());
}

TEST(Forward, ZeroWeightsGiveUniform) {
  Classifier c = Classifier::init(Architecture::SoftmaxLinear, 4, 3, 0, 1, 0.0);
  SoftLabel out = c.forward(std::vector<double>{1.5, -2.0, 0.25});
  for (double p : out.probs) EXPECT_NEAR(p, 0.25, 1e-15);
}

TEST(Forward, OutputsAreOnSimplex) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 2.0);
  for (Architecture arch : {Architecture::SoftmaxLinear, Architecture::OneHidden}) {
    Classifier c = Classifier::init(arch, 3, 4, 8, 5, 0.7);
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> x(4);
      for (double& v : x) v = z(rng);
      SoftLabel out = c.forward(x);
      EXPECT_TRUE(out.is_valid(1e-9));
    }
  }
}

TEST(Forward, LogitShiftInvariance) {
  // Adding a constant to every logit is adding the same constant to each
  // class bias; the softmax output must not move.
  Classifier c = Classifier::init(Architecture::SoftmaxLinear, 3, 2, 0, 9, 0.5);
  std::vector<double> x{0.3, -1.2};
  SoftLabel before = c.forward(x);
  for (int k = 0; k < 3; ++k) c.params[3 * 2 + k] += 17.5;
  SoftLabel after = c.forward(x);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(before.probs[i], after.probs[i], 1e-12);
}

TEST(Forward, DimensionMismatchThrows) {
  Classifier c = Classifier::init(Architecture::SoftmaxLinear, 3, 2, 0, 1, 0.1);
  EXPECT_THROW(c.forward(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Predict, ArgmaxAndTies) {
  EXPECT_EQ(SoftLabel({0.1, 0.7, 0.2}).argmax_class(), 2);
  EXPECT_EQ(SoftLabel({0.4, 0.4, 0.2}).argmax_class(), 1);
  EXPECT_EQ(SoftLabel::uniform(5).argmax_class(), 1);
}

TEST(CeLoss, KnownValues) {
  SoftLabel pred({0.1, 0.7, 0.1, 0.1});
  EXPECT_NEAR(ce_loss(pred, SoftLabel::one_hot(4, 2)), 0.356675, 1e-6);
  EXPECT_NEAR(ce_loss(SoftLabel::uniform(4), SoftLabel::uniform(4)), std::log(4.0), 1e-12);
  EXPECT_NEAR(ce_loss(SoftLabel({0.8, 0.2}), SoftLabel({0.5, 0.5})), 0.916291, 1e-6);
}

TEST(CeLoss, ClampKeepsZeroProbFinite) {
  double v = ce_loss(SoftLabel({1.0, 0.0}), SoftLabel::one_hot(2, 2));
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -std::log(kLogClamp), 1e-9);
}

TEST(CeLoss, OneHotTargetIsExactlyNegLogProb) {
  std::mt19937_64 rng(19);
  std::uniform_int_distribution<int> cls(1, 4);
  for (int t = 0; t < 200; ++t) {
    SoftLabel pred = testutil::random_simplex(4, rng);
    int y = cls(rng);
    EXPECT_EQ(ce_loss(pred, SoftLabel::one_hot(4, y)),
              -std::log(std::max(pred.probs[y - 1], kLogClamp)));
  }
}

TEST(CeLoss, GibbsInequality) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 500; ++t) {
    SoftLabel p = testutil::random_simplex(4, rng);
    SoftLabel q = testutil::random_simplex(4, rng);
    EXPECT_GE(ce_loss(p, q) + 1e-12, q.entropy());
    EXPECT_NEAR(ce_loss(q, q), q.entropy(), 1e-12);
  }
}

TEST(CeLoss, SoftTargetDecomposition) {
  // CE with a soft target is the target-weighted mix of one-hot CE losses.
  std::mt19937_64 rng(22);
  for (int t = 0; t < 1000; ++t) {
    SoftLabel pred = testutil::random_simplex(5, rng);
    SoftLabel soft = testutil::random_simplex(5, rng);
    double mix = 0.0;
    for (int i = 0; i < 5; ++i) mix += soft.probs[i] * ce_loss(pred, SoftLabel::one_hot(5, i + 1));
    EXPECT_NEAR(ce_loss(pred, soft), mix, 1e-9);
  }
}

TEST(MseConsistency, KnownValues) {
  EXPECT_DOUBLE_EQ(mse_consistency(SoftLabel({0.3, 0.7}), SoftLabel({0.3, 0.7})), 0.0);
  EXPECT_DOUBLE_EQ(mse_consistency(SoftLabel({1.0, 0.0}), SoftLabel({0.0, 1.0})), 1.0);
  EXPECT_DOUBLE_EQ(mse_consistency(SoftLabel({0.5, 0.5}), SoftLabel({1.0, 0.0})), 0.25);
}

TEST(Gradient, MatchesFiniteDifferencesEverywhere) {
  for (Architecture arch : {Architecture::SoftmaxLinear, Architecture::OneHidden}) {
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::MseConsistency}) {
      Classifier c = Classifier::init(arch, 3, 4, 6, 33, 0.6);
      auto batch = random_batch(12, 3, 4, 44, kind == LossKind::MseConsistency);
      auto analytic = batch_gradient(c, batch, kind);
      auto numeric = testutil::numeric_gradient(c, batch, kind);
      EXPECT_LT(testutil::max_relative_error(analytic, numeric), 1e-4)
          << "arch=" << to_string(arch) << " kind=" << (kind == LossKind::CrossEntropy);
    }
  }
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  auto data = random_batch(10, 3, 2, 5, false);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 17;
  cfg.init_scale = 0.3;
  Classifier trained = train(data, cfg);
  Classifier fresh = Classifier::init(cfg.arch, 3, 2, cfg.hidden_units, cfg.seed, cfg.init_scale);
  EXPECT_EQ(trained.params, fresh.params);
}

TEST(Train, SeparableDataReachesHighTrainAccuracy) {
  // Two clusters 6 sigma apart: a margin exists by construction.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<TrainExample> data;
  std::vector<Example> eval;
  for (int i = 0; i < 200; ++i) {
    int cls = i % 2 + 1;
    double cx = cls == 1 ? -3.0 : 3.0;
    TrainExample ex;
    ex.feature = {cx + z(rng), z(rng)};
    ex.target = SoftLabel::one_hot(2, cls);
    data.push_back(ex);
    eval.push_back(Example{data.back().feature, cls, "g", cls});
  }
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.learning_rate = 0.5;
  cfg.batch_size = 32;
  cfg.seed = 2;
  Classifier c = train(data, cfg);
  EXPECT_GE(accuracy(c, eval).value(), 0.99);
}

TEST(Train, LossTraceDecreasesOnConvexModel) {
  auto data = random_batch(60, 3, 3, 77, false);
  for (auto& ex : data) ex.weight = 1.0;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 0.2;
  cfg.seed = 4;
  TrainTrace trace;
  train(data, cfg, LossKind::CrossEntropy, &trace);
  ASSERT_EQ(trace.epochs_run, 50);
  EXPECT_LE(trace.epoch_loss.back(), trace.epoch_loss.front());
}

TEST(Train, UniformWeightScalingKeepsTrajectory) {
  auto data = random_batch(40, 3, 2, 55, false);
  for (auto& ex : data) ex.weight = 1.0;
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 10;
  Classifier a = train(data, cfg);
  // power-of-two scaling: bitwise identical trajectory
  for (auto& ex : data) ex.weight = 2.0;
  Classifier b = train(data, cfg);
  EXPECT_EQ(a.params, b.params);
  // arbitrary scaling: identical up to rounding drift
  for (auto& ex : data) ex.weight = 3.7;
  Classifier c = train(data, cfg);
  for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_NEAR(a.params[i], c.params[i], 1e-9);
}

TEST(Train, PlateauStopHaltsEarly) {
  auto data = random_batch(30, 2, 2, 66, false);
  TrainConfig cfg;
  cfg.epochs = 5000;
  cfg.learning_rate = 0.5;
  cfg.seed = 6;
  cfg.converge_tol = 1e-5;
  cfg.converge_patience = 10;
  TrainTrace trace;
  train(data, cfg, LossKind::CrossEntropy, &trace);
  EXPECT_LT(trace.epochs_run, 5000);
}

TEST(Train, DivergenceNamesEpoch) {
  auto data = random_batch(20, 2, 2, 67, false);
  for (auto& ex : data)
    for (double& v : ex.feature) v *= 1e4;
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 1e6;
  cfg.seed = 5;
  try {
    train(data, cfg);
    SUCCEED() << "did not diverge; acceptable for this seed";
  } catch (const TrainError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, EmptySetThrows) {
  EXPECT_THROW(train({}, TrainConfig{}), ConfigError);
}

TEST(Accuracy, ConstantPredictorOnSingleClass) {
  Classifier c = Classifier::init(Architecture::SoftmaxLinear, 2, 1, 0, 1, 0.0);
  c.params[0] = 5.0;  // class-1 weight on the only feature
  std::vector<Example> all_one;
  for (int i = 0; i < 20; ++i) all_one.push_back(Example{{1.0}, 1, "g", 1});
  EXPECT_DOUBLE_EQ(accuracy(c, all_one).value(), 1.0);
}

TEST(Accuracy, IndependentLabelsGiveChanceLevel) {
  // Labels drawn independently of the features: any fixed classifier sits at
  // 1/K up to binomial noise. 3-sigma tolerance.
  const int n = 20000, num_classes = 4;
  std::mt19937_64 rng(91);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> cls(1, num_classes);
  std::vector<Example> data;
  for (int i = 0; i < n; ++i) data.push_back(Example{{z(rng), z(rng)}, cls(rng), "g", std::nullopt});
  Classifier c = Classifier::init(Architecture::SoftmaxLinear, num_classes, 2, 0, 13, 1.0);
  double p = 1.0 / num_classes;
  double tol = 3.0 * std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(accuracy(c, data).value(), p, tol);
}

TEST(Accuracy, MissingGroupIsUndefined) {
  Classifier c = Classifier::init(Architecture::SoftmaxLinear, 2, 1, 0, 1, 0.1);
  std::vector<Example> data{Example{{1.0}, 1, "present", 1}};
  EXPECT_FALSE(accuracy(c, data, std::string("absent")).has_value());
  EXPECT_TRUE(accuracy(c, data, std::string("present")).has_value());
}

TEST(Accuracy, UsesHiddenTruthWhenUnlabeled) {
  Classifier c = Classifier::init(Architecture::SoftmaxLinear, 2, 1, 0, 1, 0.0);
  std::vector<Example> data{Example{{1.0}, std::nullopt, "g", 1}};
  EXPECT_NO_THROW(accuracy(c, data));
  data[0].hidden_truth.reset();
  EXPECT_THROW(accuracy(c, data), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  for (Architecture arch : {Architecture::SoftmaxLinear, Architecture::OneHidden}) {
    Classifier c = Classifier::init(arch, 3, 5, 7, 123, 0.4);
    auto path = std::filesystem::temp_directory_path() / "sslab_model.txt";
    save_checkpoint(c, path.string());
    Classifier back = load_checkpoint(path.string());
    EXPECT_EQ(back.arch, c.arch);
    EXPECT_EQ(back.num_classes, c.num_classes);
    EXPECT_EQ(back.dim, c.dim);
    EXPECT_EQ(back.hidden, c.hidden);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.params, c.params);
    std::filesystem::remove(path);
  }
}

}  // namespace
