#include "bsvm/predict.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "bsvm/errors.hpp"
#include "bsvm/rng.hpp"

namespace bsvm {

PredictiveDistribution predict_dist(const ModelState& state,
                                    const Eigen::Ref<const Eigen::MatrixXd>& x_test) {
  if (state.cache_stale) throw ConfigError("predict: kernel cache is stale");
  if (x_test.cols() != state.Z.Z.cols()) {
    throw IngestError("predict: test feature count does not match the model");
  }
  const Eigen::Index t_count = x_test.rows();
  const Eigen::Index c = state.n_classes;
  const auto& chol = state.cache.chol_kpp;

  // A = L^{-1} K_PT,  B = K_PP^{-1} K_PT
  const Eigen::MatrixXd kpt = kernel_matrix(state.Z.Z, x_test, state.hyper);
  const Eigen::MatrixXd a = chol.triangularView<Eigen::Lower>().solve(kpt);
  const Eigen::MatrixXd b = chol.transpose().triangularView<Eigen::Upper>().solve(a);

  PredictiveDistribution dist;
  dist.means.resize(t_count, c);
  dist.variances.resize(t_count, c);

  const Eigen::VectorXd base_var =
      (Eigen::VectorXd::Constant(t_count, state.hyper.signal_variance) -
       a.colwise().squaredNorm().transpose());

  for (Eigen::Index j = 0; j < c; ++j) {
    dist.means.col(j) = b.transpose() * state.vp.mu.row(j).transpose();
    // kappa_* Sigma_j kappa_*^T = || L_j^T b ||^2 column-wise
    const Eigen::MatrixXd lb =
        state.vp.chol_sigma[static_cast<std::size_t>(j)].transpose() * b;
    dist.variances.col(j) =
        (base_var + lb.colwise().squaredNorm().transpose()).cwiseMax(state.hyper.jitter);
  }
  return dist;
}

Eigen::VectorXi decide(const PredictiveDistribution& dist) {
  Eigen::VectorXi labels(dist.n_points());
  for (Eigen::Index i = 0; i < dist.n_points(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (Eigen::Index j = 0; j < dist.n_classes(); ++j) {
      if (dist.means(i, j) > best) {
        best = dist.means(i, j);
        best_j = static_cast<int>(j);
      }
    }
    labels(i) = best_j + 1;
  }
  return labels;
}

Eigen::VectorXd variation_ratio(const PredictiveDistribution& dist, int samples,
                                std::uint64_t seed) {
  if (samples < 1) throw ConfigError("variation_ratio: need at least one sample");
  const Eigen::Index t_count = dist.n_points();
  const Eigen::Index c = dist.n_classes();
  Eigen::VectorXd vr(t_count);
  std::vector<int> votes(static_cast<std::size_t>(c));

  for (Eigen::Index i = 0; i < t_count; ++i) {
    auto rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::fill(votes.begin(), votes.end(), 0);
    for (int s = 0; s < samples; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      Eigen::Index best_j = 0;
      for (Eigen::Index j = 0; j < c; ++j) {
        const double draw = dist.means(i, j) + std::sqrt(dist.variances(i, j)) * gauss(rng);
        if (draw > best) {
          best = draw;
          best_j = j;
        }
      }
      ++votes[static_cast<std::size_t>(best_j)];
    }
    const int modal = *std::max_element(votes.begin(), votes.end());
    vr(i) = 1.0 - static_cast<double>(modal) / static_cast<double>(samples);
  }
  return vr;
}

Eigen::MatrixXd mean_softmax(const PredictiveDistribution& dist) {
  Eigen::MatrixXd probs(dist.n_points(), dist.n_classes());
  for (Eigen::Index i = 0; i < dist.n_points(); ++i) {
    const double m = dist.means.row(i).maxCoeff();
    const Eigen::ArrayXd ex = (dist.means.row(i).array() - m).exp();
    probs.row(i) = (ex / ex.sum()).matrix();
  }
  return probs;
}

}  // namespace bsvm
