#include <gtest/gtest.h>

#include "ppan/data.hpp"
#include "ppan/training.hpp"
#include "test_support.hpp"

using namespace ppan;
using namespace testing_support;

namespace {

void zero(Mlp& net) {
  for (auto& w : net.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
  for (auto& b : net.biases) std::fill(b.begin(), b.end(), 0.0);
}

// Adversary whose posterior is N(0, 1) regardless of z.
Mlp standard_posterior_adversary() {
  Mlp a = init_mlp({1, 4, 2}, OutputHead::gaussian_posterior, 1);
  zero(a);
  a.biases.back()[1] = std::log(std::expm1(1.0 - kVarianceFloor));
  return a;
}

Dataset small_gaussian(std::uint64_t seed, std::size_t n = 1500) {
  return standardize(split_dataset(gen_bivariate_gaussian(n, 0.85, 1.0, seed), n * 2 / 3, n / 3, 0.1, seed));
}

PpanConfig quick_config(double delta) {
  PpanConfig c;
  c.delta = delta;
  c.epochs = 6;
  c.patience = 6;
  c.hidden = {8};
  c.batch_size = 100;
  c.step_size = 5e-3;
  return c;
}

}  // namespace

TEST(AdversaryLoss, StandardNormalAtMean) {
  const Mlp a = standard_posterior_adversary();
  EXPECT_NEAR(adversary_loss(a, Matrix::column({0.0}), Matrix::column({0.3})), 0.5 * std::log(2 * std::numbers::pi),
              1e-6);
  EXPECT_NEAR(adversary_loss(a, Matrix::column({0.0}), Matrix::column({0.3})), 0.9189, 1e-4);
}

TEST(AdversaryLoss, BatchMeanOfReference) {
  const Mlp a = init_mlp({2, 5, 2}, OutputHead::gaussian_posterior, 3);
  const Matrix x = random_matrix(7, 1, 4), z = random_matrix(7, 2, 5);
  double expect = 0.0;
  for (std::size_t r = 0; r < 7; ++r) {
    const auto out = reference_forward(a, {z(r, 0), z(r, 1)});
    expect += reference_nll({out[0]}, {out[1]}, {x(r, 0)});
  }
  EXPECT_NEAR(adversary_loss(a, x, z), expect / 7.0, 1e-12);
}

TEST(AdversaryLoss, BatchOfOneAndPermutation) {
  const Mlp a = init_mlp({1, 5, 2}, OutputHead::gaussian_posterior, 6);
  const Matrix x = random_matrix(9, 1, 7), z = random_matrix(9, 1, 8);
  const std::size_t one[] = {4};
  const auto out = reference_forward(a, {z(4, 0)});
  EXPECT_NEAR(adversary_loss(a, x.select_rows(one), z.select_rows(one)), reference_nll({out[0]}, {out[1]}, {x(4, 0)}),
              1e-12);
  std::vector<std::size_t> perm{8, 2, 5, 0, 7, 1, 3, 6, 4};
  EXPECT_NEAR(adversary_loss(a, x.select_rows(perm), z.select_rows(perm)), adversary_loss(a, x, z), 1e-12);
}

TEST(AdversaryLoss, Errors) {
  const Mlp a = standard_posterior_adversary();
  EXPECT_ERROR_KIND(adversary_loss(a, Matrix(3, 1), Matrix(2, 1)), ErrorKind::shape);
  EXPECT_ERROR_KIND(adversary_loss(a, Matrix(0, 1), Matrix(0, 1)), ErrorKind::argument);
  EXPECT_ERROR_KIND(adversary_loss(a, Matrix(2, 2), Matrix(2, 1)), ErrorKind::shape);
}

TEST(MechanismLoss, InactivePenaltyLeavesNegativeAdversaryLoss) {
  const Matrix y = Matrix::column({1.0, 2.0}), z = Matrix::column({1.1, 1.9});
  for (auto form : {DistortionPenalty::per_sample, DistortionPenalty::expected})
    EXPECT_DOUBLE_EQ(mechanism_loss(y, z, 0.7, 10.0, 0.5, form), -0.7);
}

TEST(MechanismLoss, HingeSquared) {
  // single sample, distortion 2, delta 1: lambda * (2 - 1)^2 = 2
  const Matrix y = Matrix::column({0.0}), z = Matrix::column({std::sqrt(2.0)});
  EXPECT_NEAR(mechanism_loss(y, z, 0.0, 2.0, 1.0, DistortionPenalty::per_sample), 2.0, 1e-12);
  EXPECT_NEAR(mechanism_loss(y, z, 0.0, 2.0, 1.0, DistortionPenalty::expected), 2.0, 1e-12);
  // per-sample averages hinges; expected hinges the average
  const Matrix y2 = Matrix::column({0.0, 0.0}), z2 = Matrix::column({2.0, 0.0});
  EXPECT_NEAR(mechanism_loss(y2, z2, 0.0, 1.0, 1.0, DistortionPenalty::per_sample), 4.5, 1e-12);
  EXPECT_NEAR(mechanism_loss(y2, z2, 0.0, 1.0, 1.0, DistortionPenalty::expected), 1.0, 1e-12);
}

TEST(MechanismLoss, RejectsNonPositiveLambda) {
  const Matrix y = Matrix::column({0.0});
  EXPECT_ERROR_KIND(mechanism_loss(y, y, 0.0, 0.0, 1.0), ErrorKind::config);
}

TEST(Gradients, AdversaryUpdateLeavesMechanismUntouched) {
  Mlp mech = init_mlp({4, 6, 1}, OutputHead::linear, 1);
  Mlp adv = init_mlp({1, 6, 2}, OutputHead::gaussian_posterior, 2);
  const Mlp mech0 = mech;
  const Matrix w = random_matrix(20, 1, 3), u = random_matrix(20, 3, 4), x = random_matrix(20, 1, 5);
  OptimizerState opt = make_optimizer_state(adv);
  const Mlp adv0 = adv;
  adversary_update(adv, opt, x, release(mech, w, u));
  EXPECT_EQ(mech, mech0);
  EXPECT_NE(adv, adv0);
}

TEST(Gradients, MechanismGradientLeavesAdversaryUntouched) {
  const Mlp mech = init_mlp({4, 6, 1}, OutputHead::linear, 1);
  const Mlp adv = init_mlp({1, 6, 2}, OutputHead::gaussian_posterior, 2);
  const Mlp adv0 = adv;
  const Matrix w = random_matrix(20, 1, 3), u = random_matrix(20, 3, 4), x = random_matrix(20, 1, 5);
  mechanism_gradient(mech, adv, w, u, x, w, 10.0, 0.1, DistortionPenalty::expected);
  EXPECT_EQ(adv, adv0);
}

TEST(Gradients, MechanismGradientMatchesFiniteDifferences) {
  const Mlp adv = init_mlp({1, 6, 2}, OutputHead::gaussian_posterior, 12);
  const Matrix w = random_matrix(15, 1, 13), u = random_matrix(15, 3, 14), x = random_matrix(15, 1, 15);
  const Matrix y = w;
  for (auto form : {DistortionPenalty::per_sample, DistortionPenalty::expected}) {
    const Mlp mech = init_mlp({4, 6, 1}, OutputHead::linear, 11);
    const auto g = mechanism_gradient(mech, adv, w, u, x, y, 3.0, 0.05, form);
    auto loss = [&](const Mlp& m) {
      const Matrix z = release(m, w, u);
      return mechanism_loss(y, z, adversary_loss(adv, x, z), 3.0, 0.05, form);
    };
    EXPECT_NEAR(g.loss, loss(mech), 1e-12);
    for (std::size_t i = 0; i < parameter_count(mech); ++i)
      EXPECT_LT(gradient_error(gradient_entry(g.grads, i), numeric_gradient(mech, i, loss)), 1e-4) << i;
  }
}

TEST(Gradients, AdversaryGradientMatchesFiniteDifferences) {
  const Mlp adv = init_mlp({1, 6, 2}, OutputHead::gaussian_posterior, 21);
  const Matrix x = random_matrix(12, 1, 22), z = random_matrix(12, 1, 23);
  auto loss = [&](const Mlp& a) { return adversary_loss(a, x, z); };
  auto fwd = forward(adv, z);
  Matrix up(12, 2);
  for (std::size_t r = 0; r < 12; ++r) {
    const auto post = posterior_row(fwd.output, r);
    gaussian_nll_grad(post, x.row(r), up.row(r));
  }
  for (double& v : up.data()) v /= 12.0;
  const auto bw = backward(adv, fwd.cache, up);
  for (std::size_t i = 0; i < parameter_count(adv); ++i)
    EXPECT_LT(gradient_error(gradient_entry(bw.params, i), numeric_gradient(adv, i, loss)), 1e-4) << i;
}

TEST(Release, ShapesAndZeroMechanism) {
  Mlp mech = init_mlp({4, 5, 1}, OutputHead::linear, 1);
  EXPECT_ERROR_KIND(release(mech, Matrix(3, 1), Matrix(3, 2)), ErrorKind::shape);
  EXPECT_ERROR_KIND(release(mech, Matrix(3, 1), Matrix(2, 3)), ErrorKind::shape);
  zero(mech);
  const Matrix z = release(mech, random_matrix(6, 1, 2), random_matrix(6, 3, 3));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Release, StochasticInSeedNoise) {
  const Mlp mech = init_mlp({4, 8, 1}, OutputHead::linear, 4);
  const Matrix w(5, 1, 0.7);
  const Matrix a = release(mech, w, gen_seed_noise(5, 3, 1));
  const Matrix b = release(mech, w, gen_seed_noise(5, 3, 2));
  EXPECT_NE(a, b);
  EXPECT_EQ(a, release(mech, w, gen_seed_noise(5, 3, 1)));
}

TEST(Train, RequiresStandardizedData) {
  const Dataset raw = split_dataset(gen_bivariate_gaussian(300, 0.5, 1, 1), 200, 100, 0.1, 1);
  EXPECT_ERROR_KIND(train_ppan(raw, quick_config(0.5)), ErrorKind::precondition);
}

TEST(Train, ConfigValidationListsEveryField) {
  PpanConfig c;
  c.batch_size = 0;
  c.lambda = -1;
  try {
    c.validate();
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    const std::string m = e.what();
    for (const char* f : {"batch_size", "lambda", "delta"}) EXPECT_NE(m.find(f), std::string::npos) << m;
  }
}

TEST(Train, Deterministic) {
  const Dataset d = small_gaussian(1);
  const PpanModel a = train_ppan(d, quick_config(0.5));
  const PpanModel b = train_ppan(d, quick_config(0.5));
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.mechanism, b.mechanism);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
}

TEST(Train, SelectedEpochScoresNoWorseThanFirst) {
  const Dataset d = small_gaussian(2);
  const PpanModel m = train_ppan(d, quick_config(0.3));
  ASSERT_FALSE(m.history.empty());
  ASSERT_GE(m.best_epoch, 1u);
  const auto score = [](const EpochRecord& r) { return r.val_penalty + r.val_leakage_ksg; };
  for (const auto& r : m.history) EXPECT_LE(score(m.history[m.best_epoch - 1]), score(r));
  EXPECT_LE(score(m.history[m.best_epoch - 1]), score(m.history.front()));
}

TEST(Train, PatienceStopsEarly) {
  PpanConfig c = quick_config(0.5);
  c.epochs = 50;
  c.patience = 1;
  const PpanModel m = train_ppan(small_gaussian(3, 600), c);
  EXPECT_LT(m.history.size(), 50u);
  EXPECT_EQ(m.history.size(), m.best_epoch + 1);
}

TEST(Train, StrongPenaltyForcesLowDistortion) {
  PpanConfig c = quick_config(0.0);
  c.lambda = 100.0;
  c.epochs = 40;
  c.patience = 40;
  const Dataset d = small_gaussian(4);
  const PpanModel m = train_ppan(d, c);
  EXPECT_LT(m.history[m.best_epoch - 1].val_distortion, 0.05);
}

TEST(Train, ActivePenaltyAtTightBudget) {
  const PpanModel m = train_ppan(small_gaussian(5), quick_config(0.05));
  EXPECT_GT(m.history.front().val_penalty, 0.0);
}

TEST(Train, HistoryCsvAndModelRoundTrip) {
  const PpanModel m = train_ppan(small_gaussian(6, 600), quick_config(0.5));
  std::ostringstream h;
  write_history_csv(h, m.history);
  std::istringstream hs(h.str());
  std::string line;
  std::getline(hs, line);
  EXPECT_EQ(line, "epoch,loss_adversary,loss_mechanism,val_distortion,val_leakage_proxy");
  std::size_t rows = 0;
  while (std::getline(hs, line)) ++rows;
  EXPECT_EQ(rows, m.history.size());

  std::stringstream ms;
  write_model(ms, m);
  PpanModel back;
  read_model(ms, back);
  EXPECT_EQ(back.mechanism, m.mechanism);
  EXPECT_EQ(back.adversary, m.adversary);
}
