#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "bsvm/model.hpp"

namespace bsvm {

enum class TrainMethod { kAdam, kCoordAscent };

TrainMethod parse_train_method(const std::string& name);
std::string train_method_name(TrainMethod m);

struct TrainConfig {
  TrainMethod method = TrainMethod::kAdam;
  int epochs = 1000;
  double learning_rate = 5e-4;       // Adam
  double rho = 0.5;                  // coordinate-ascent step, in (0, 1]
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int hyperopt_every = 0;            // 0 = kernel hyperparameters and Z frozen
  int batch_size = 0;                // 0 = full batch
  bool alpha_gradient_updates = false;  // ablation: Adam-update alpha instead
                                        // of the closed-form assignment

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double elbo = 0.0;
  double seconds = 0.0;
};

using TrainTrace = std::vector<EpochRecord>;

/// One epoch: refresh t_n, assign alpha in closed form (unless the ablation
/// flag asks for gradient updates), one Adam ascent step on (mu, L) with the
/// diagonal of L handled through a softplus reparameterization, then record
/// the objective. Deterministic given the seed.
TrainTrace train_adam(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const Eigen::Ref<const Eigen::VectorXi>& y, const TrainConfig& cfg);

/// One outer iteration: refresh t_n, assign alpha, compute the target
/// natural parameters for every class from the current state, interpolate
/// eta <- (1 - rho) eta + rho eta_hat, and recover (Sigma_j, mu_j). A step
/// that loses positive definiteness of -2 eta2 is retried with halved rho
/// (at most 10 halvings).
TrainTrace train_coord_ascent(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXi>& y, const TrainConfig& cfg);

TrainTrace fit(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x,
               const Eigen::Ref<const Eigen::VectorXi>& y, const TrainConfig& cfg);

/// Full-batch target natural parameters (the zero-gradient solution for one
/// class given the others): eta2_hat_j = -0.5 K_PP^{-1}
/// - 0.5 sum_{n: j in {t_n, y_n}} kappa_n^T kappa_n / sqrt(alpha_n), and the
/// matching eta1_hat_j built from the current means of the partner classes.
NaturalParams natural_targets(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                              const Eigen::Ref<const Eigen::VectorXi>& t);

/// Natural gradients (nabla_eta1, nabla_eta2) assembled from the Euclidean
/// gradients; vanishes entrywise at the coordinate-ascent fixed point.
struct NaturalGradients {
  Eigen::MatrixXd eta1;
  std::vector<Eigen::MatrixXd> eta2;
};
NaturalGradients natural_gradients(const ModelState& state,
                                   const Eigen::Ref<const Eigen::VectorXi>& y,
                                   const Eigen::Ref<const Eigen::VectorXi>& t);

void write_trace_csv(const TrainTrace& trace, const std::string& path);

}  // namespace bsvm
