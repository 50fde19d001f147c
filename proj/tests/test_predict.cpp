#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "bsvm/gradcheck.hpp"
#include "bsvm/predict.hpp"
#include "oracles.hpp"

using namespace bsvm;

TEST_CASE("predictive marginals match the dense-inverse oracle") {
  RandomInstance inst = make_random_instance(18, 3, 5, 3, 3);
  const Eigen::MatrixXd x_test = inst.x.topRows(7).array() + 0.25;
  const PredictiveDistribution dist = predict_dist(inst.state, x_test);

  Eigen::MatrixXd means, variances;
  oracles::predict_dense(inst.state, x_test, means, variances);
  CHECK((dist.means - means).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((dist.variances - variances).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(dist.variances.minCoeff() >= inst.state.hyper.jitter);
}

TEST_CASE("predicting at an inducing input with tiny Sigma returns mu and jitter-level variance") {
  RandomInstance inst = make_random_instance(10, 3, 4, 2, 7);
  for (auto& l : inst.state.vp.chol_sigma) {
    l = 1e-7 * Eigen::MatrixXd::Identity(l.rows(), l.cols());
  }
  const Eigen::Index pick = 2;
  const PredictiveDistribution dist = predict_dist(inst.state, inst.state.Z.Z.row(pick));
  for (int j = 0; j < 3; ++j) {
    CHECK(dist.means(0, j) == doctest::Approx(inst.state.vp.mu(j, pick)).epsilon(1e-4));
    CHECK(dist.variances(0, j) <= 10.0 * inst.state.hyper.jitter);
  }
}

TEST_CASE("zero mu gives zero means") {
  RandomInstance inst = make_random_instance(8, 3, 4, 2, 9);
  inst.state.vp.mu.setZero();
  const PredictiveDistribution dist = predict_dist(inst.state, inst.x.topRows(4));
  CHECK(dist.means.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decide takes the argmax with ties toward the smallest class") {
  PredictiveDistribution dist;
  dist.means.resize(3, 3);
  dist.means << 0.1, 0.9, 0.3, 0.5, 0.5, 0.5, -1.0, -2.0, -1.0;
  dist.variances = Eigen::MatrixXd::Ones(3, 3);
  const Eigen::VectorXi labels = decide(dist);
  CHECK(labels(0) == 2);
  CHECK(labels(1) == 1);  // all equal -> class 1
  CHECK(labels(2) == 1);  // tie between 1 and 3 -> class 1
}

TEST_CASE("decide is invariant to adding a constant to a row") {
  PredictiveDistribution dist;
  dist.means.resize(2, 4);
  dist.means << 0.3, -0.2, 1.4, 0.0, -2.0, -1.0, -3.0, -1.5;
  dist.variances = Eigen::MatrixXd::Ones(2, 4);
  const Eigen::VectorXi before = decide(dist);
  dist.means.row(0).array() += 17.5;
  dist.means.row(1).array() -= 3.25;
  const Eigen::VectorXi after = decide(dist);
  CHECK(before == after);
}

TEST_CASE("variation ratio arithmetic on a forced sample pattern") {
  // one class mean far above the rest with zero-ish variance: every sample
  // votes the same way
  PredictiveDistribution dist;
  dist.means.resize(1, 3);
  dist.means << 100.0, 0.0, 0.0;
  dist.variances = Eigen::MatrixXd::Constant(1, 3, 1e-12);
  const Eigen::VectorXd vr = variation_ratio(dist, 5, 1);
  CHECK(vr(0) == 0.0);
}

TEST_CASE("variation ratio of a symmetric two-class point approaches one half") {
  PredictiveDistribution dist;
  dist.means.resize(1, 2);
  dist.means << 0.0, 0.0;
  dist.variances = Eigen::MatrixXd::Ones(1, 2);
  const Eigen::VectorXd vr = variation_ratio(dist, 10000, 123);
  CHECK(vr(0) == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("variation ratio bounds and dominance") {
  RandomInstance inst = make_random_instance(12, 4, 4, 2, 13);
  const PredictiveDistribution dist = predict_dist(inst.state, inst.x);
  const int s = 50;
  const Eigen::VectorXd vr = variation_ratio(dist, s, 77);
  const double upper = 1.0 - std::ceil(static_cast<double>(s) / 4.0) / s;
  for (Eigen::Index i = 0; i < vr.size(); ++i) {
    CHECK(vr(i) >= 0.0);
    CHECK(vr(i) <= upper);
  }

  // a ten-sigma gap forces VR to zero
  PredictiveDistribution sure;
  sure.means.resize(1, 3);
  sure.means << 30.0, 0.0, 0.0;
  sure.variances = Eigen::MatrixXd::Ones(1, 3);
  CHECK(variation_ratio(sure, 256, 5)(0) == 0.0);
}

TEST_CASE("variation ratio is deterministic given the seed") {
  RandomInstance inst = make_random_instance(6, 3, 4, 2, 15);
  const PredictiveDistribution dist = predict_dist(inst.state, inst.x);
  const Eigen::VectorXd a = variation_ratio(dist, 64, 99);
  const Eigen::VectorXd b = variation_ratio(dist, 64, 99);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mean softmax rows are simplex points") {
  PredictiveDistribution dist;
  dist.means.resize(2, 4);
  dist.means << 0.0, 0.0, 0.0, 0.0, 5.0, 1.0, -2.0, 800.0;
  dist.variances = Eigen::MatrixXd::Ones(2, 4);
  const Eigen::MatrixXd probs = mean_softmax(dist);
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(probs.row(i).minCoeff() >= 0.0);
  }
  CHECK(probs(0, 0) == doctest::Approx(0.25));
  CHECK(probs(1, 3) == doctest::Approx(1.0));
}

TEST_CASE("prediction at scale stays under a second") {
  RandomInstance inst = make_random_instance(64, 3, 64, 5, 17);
  Eigen::MatrixXd big(10000, 5);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index r = 0; r < big.rows(); ++r) {
    for (Eigen::Index c = 0; c < 5; ++c) big(r, c) = gauss(rng);
  }
  const auto tic = std::chrono::steady_clock::now();
  const PredictiveDistribution dist = predict_dist(inst.state, big);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
  CHECK(dist.n_points() == 10000);
  CHECK(secs < 1.0);
}
