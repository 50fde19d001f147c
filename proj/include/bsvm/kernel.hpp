#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace bsvm {

/// Squared-exponential kernel hyperparameters. `lengthscale` holds either a
/// single shared value (size 1) or one value per input dimension (ARD).
struct KernelHyperparams {
  Eigen::VectorXd lengthscale = Eigen::VectorXd::Ones(1);
  double signal_variance = 1.0;
  double jitter = 1e-6;

  void validate() const;
  double lengthscale_for(Eigen::Index dim) const {
    return lengthscale.size() == 1 ? lengthscale(0) : lengthscale(dim);
  }
};

/// Inducing input locations, one row per inducing point.
struct InducingInputs {
  Eigen::MatrixXd Z;

  Eigen::Index count() const { return Z.rows(); }
  void validate() const;
};

/// Matrices shared by every class process: the inducing-point Gram matrix
/// and its Cholesky factor, cross covariances to the training inputs, the
/// projection kappa = K_NP * K_PP^{-1}, and the diagonal of the residual
/// covariance K_tilde = K_NN - K_NP * kappa^T.
struct KernelCache {
  Eigen::MatrixXd kpp;           // P x P, includes the jitter actually used
  Eigen::MatrixXd chol_kpp;      // lower triangular, chol_kpp * chol_kpp^T = kpp
  Eigen::MatrixXd knp;           // N x P
  Eigen::MatrixXd kappa;         // N x P
  Eigen::VectorXd ktilde_diag;   // length N, nonnegative
  double jitter_used = 0.0;

  Eigen::Index inducing_count() const { return kpp.rows(); }
  Eigen::Index data_count() const { return knp.rows(); }

  /// x = K_PP^{-1} b through the two triangular solves.
  Eigen::MatrixXd solve_kpp(const Eigen::MatrixXd& b) const;
};

/// RBF kernel value k(x1, x2) = signal_variance * exp(-0.5 * sum_d (x1_d - x2_d)^2 / l_d^2).
double eval_kernel(const Eigen::Ref<const Eigen::VectorXd>& x1,
                   const Eigen::Ref<const Eigen::VectorXd>& x2,
                   const KernelHyperparams& h);

/// Dense cross-kernel matrix k(A_i, B_j), rows of A against rows of B.
Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a,
                              const Eigen::Ref<const Eigen::MatrixXd>& b,
                              const KernelHyperparams& h);

/// Symmetric Gram matrix with exact signal_variance on the diagonal.
Eigen::MatrixXd kernel_gram(const Eigen::Ref<const Eigen::MatrixXd>& a, const KernelHyperparams& h);

/// Builds the full cache for training inputs X. kappa is obtained with two
/// triangular solves against the Cholesky factor, never an explicit inverse.
/// On Cholesky failure the jitter is doubled up to 1e-2; if factorization
/// still fails, throws NumericError naming near-duplicate inducing rows.
KernelCache build_cache(const Eigen::Ref<const Eigen::MatrixXd>& x, const InducingInputs& z,
                        const KernelHyperparams& h);

/// Cache with only the inducing-point block populated (N = 0); enough for
/// prediction from a deserialized model.
KernelCache build_prior_cache(const InducingInputs& z, const KernelHyperparams& h);

/// Median pairwise distance of a seeded subsample of at most 256 rows;
/// falls back to 1.0 when the median degenerates to zero.
double median_heuristic_lengthscale(const Eigen::Ref<const Eigen::MatrixXd>& x, std::uint64_t seed);

/// k-means centroids (fixed Lloyd iteration count, seeded initialization).
/// When k >= number of rows the rows themselves are returned. Exact
/// duplicate rows in the result are perturbed by a deterministic 1e-6 shift
/// so the InducingInputs invariant holds.
Eigen::MatrixXd kmeans_centroids(const Eigen::Ref<const Eigen::MatrixXd>& x, Eigen::Index k,
                                 std::uint64_t seed, int lloyd_iters = 25);

}  // namespace bsvm
