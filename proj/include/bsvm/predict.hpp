#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "bsvm/model.hpp"

namespace bsvm {

/// Independent Gaussian marginals of the class decision functions at each
/// test point.
struct PredictiveDistribution {
  Eigen::MatrixXd means;      // T x C
  Eigen::MatrixXd variances;  // T x C, floored at the kernel jitter

  Eigen::Index n_points() const { return means.rows(); }
  Eigen::Index n_classes() const { return means.cols(); }
};

/// mean_j(x*) = k_{*P} K_PP^{-1} mu_j,
/// var_j(x*)  = k(x*,x*) - k_{*P} K_PP^{-1} k_{P*}
///              + k_{*P} K_PP^{-1} Sigma_j K_PP^{-1} k_{P*},
/// all K_PP^{-1} applications through the Cholesky factor. Inputs must be
/// standardized with the training statistics.
PredictiveDistribution predict_dist(const ModelState& state,
                                    const Eigen::Ref<const Eigen::MatrixXd>& x_test);

/// argmax over class means, ties toward the smallest class index (1-based).
Eigen::VectorXi decide(const PredictiveDistribution& dist);

/// Monte-Carlo variation ratio 1 - F/S per test point: S joint samples of
/// the class vector (each class from its own marginal), F the count of the
/// modal argmax.
Eigen::VectorXd variation_ratio(const PredictiveDistribution& dist, int samples,
                                std::uint64_t seed);

/// Row-wise softmax over the predictive means (temperature 1).
Eigen::MatrixXd mean_softmax(const PredictiveDistribution& dist);

}  // namespace bsvm
