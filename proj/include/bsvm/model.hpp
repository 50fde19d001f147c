#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "bsvm/kernel.hpp"

namespace bsvm {

/// Gaussian variational factors q(u_j) = N(mu_j, Sigma_j) stored through
/// Cholesky factors, plus the per-observation scale parameters alpha_n.
struct VariationalParams {
  Eigen::MatrixXd mu;                        // C x P, row j = mu_j
  std::vector<Eigen::MatrixXd> chol_sigma;   // C lower-triangular P x P factors
  Eigen::VectorXd alpha;                     // length N, >= kAlphaFloor

  Eigen::Index n_classes() const { return mu.rows(); }
  Eigen::Index inducing_count() const { return mu.cols(); }
  Eigen::MatrixXd sigma(Eigen::Index j) const {
    return chol_sigma[static_cast<std::size_t>(j)] *
           chol_sigma[static_cast<std::size_t>(j)].transpose();
  }
  void validate() const;
};

/// Exponential-family coordinates eta1_j = Sigma_j^{-1} mu_j and
/// eta2_j = -0.5 * Sigma_j^{-1}.
struct NaturalParams {
  Eigen::MatrixXd eta1;                      // C x P, row j
  std::vector<Eigen::MatrixXd> eta2;         // C symmetric negative-definite P x P
};

NaturalParams to_natural(const VariationalParams& vp);
/// Recovers (mu, Sigma) from natural coordinates; Sigma is symmetrized and
/// refactorized. alpha is passed through unchanged.
void set_from_natural(VariationalParams& vp, const NaturalParams& np);

/// Full model state. The cache must be rebuilt (cache_stale) after any
/// change to the kernel hyperparameters or inducing inputs.
struct ModelState {
  KernelHyperparams hyper;
  InducingInputs Z;
  VariationalParams vp;
  KernelCache cache;
  int n_classes = 0;
  bool cache_stale = true;
};

/// Fresh state: Z from k-means, lengthscale from the median heuristic,
/// mu = 0, Sigma = I, alpha = 1, cache built. Requires n_classes >= 2.
ModelState init_model(const Eigen::Ref<const Eigen::MatrixXd>& x, int n_classes,
                      Eigen::Index inducing_count, std::uint64_t seed,
                      double jitter = 1e-6);

void set_hyperparams(ModelState& state, const KernelHyperparams& h);
void set_inducing_inputs(ModelState& state, const InducingInputs& z);
void rebuild_cache(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x);

/// Competitor class t_n = argmax_{t != y_n} kappa_n . mu_t, ties resolved
/// toward the smallest class index. Labels are 1-based.
int competitor_class(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                     Eigen::Index n);
Eigen::VectorXi competitor_classes(const ModelState& state,
                                   const Eigen::Ref<const Eigen::VectorXi>& y);

/// Variational training objective. `t` holds the competitor class per
/// observation (kept fixed across one epoch's gradient evaluations).
double elbo(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
            const Eigen::Ref<const Eigen::VectorXi>& t);
double elbo(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y);

/// d objective / d mu, accumulated over all observations plus the prior
/// term -K_PP^{-1} mu_j.
Eigen::MatrixXd grad_mu(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                        const Eigen::Ref<const Eigen::VectorXi>& t);

/// d objective / d Sigma_j (symmetric), one matrix per class.
std::vector<Eigen::MatrixXd> grad_sigma(const ModelState& state,
                                        const Eigen::Ref<const Eigen::VectorXi>& y,
                                        const Eigen::Ref<const Eigen::VectorXi>& t);

/// Chain rule of grad_sigma to the Cholesky factor: lower-triangular part of
/// (G_j + G_j^T) L_j.
std::vector<Eigen::MatrixXd> grad_chol_sigma(const ModelState& state,
                                             const Eigen::Ref<const Eigen::VectorXi>& y,
                                             const Eigen::Ref<const Eigen::VectorXi>& t);

/// d objective / d alpha_n = Q_n / (4 alpha_n^{3/2}) - 1 / (4 sqrt(alpha_n)).
Eigen::VectorXd grad_alpha(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                           const Eigen::Ref<const Eigen::VectorXi>& t);

/// Exact per-observation maximizer Q_n = 2*Ktilde_nn
/// + (1 + kappa_n (mu_{t_n} - mu_{y_n}))^2 + kappa_n Sigma_{t_n} kappa_n^T
/// + kappa_n Sigma_{y_n} kappa_n^T, floored at kAlphaFloor.
Eigen::VectorXd alpha_closed_form(const ModelState& state,
                                  const Eigen::Ref<const Eigen::VectorXi>& y,
                                  const Eigen::Ref<const Eigen::VectorXi>& t);

/// Minibatch variants: the data sum runs over `batch` (0-based observation
/// indices) scaled by N/|batch|; the prior term stays whole.
double elbo_batch(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                  const Eigen::Ref<const Eigen::VectorXi>& t, const std::vector<int>& batch);
Eigen::MatrixXd grad_mu_batch(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                              const Eigen::Ref<const Eigen::VectorXi>& t,
                              const std::vector<int>& batch);
std::vector<Eigen::MatrixXd> grad_chol_sigma_batch(const ModelState& state,
                                                   const Eigen::Ref<const Eigen::VectorXi>& y,
                                                   const Eigen::Ref<const Eigen::VectorXi>& t,
                                                   const std::vector<int>& batch);

}  // namespace bsvm
