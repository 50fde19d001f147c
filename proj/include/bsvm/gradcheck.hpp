#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "bsvm/model.hpp"

namespace bsvm {

/// Seeded random model instance for diagnostics: Gaussian features, uniform
/// labels, randomized variational parameters.
struct RandomInstance {
  ModelState state;
  Eigen::MatrixXd x;
  Eigen::VectorXi y;
};

RandomInstance make_random_instance(Eigen::Index n, int classes, Eigen::Index inducing,
                                    Eigen::Index dims, std::uint64_t seed);

/// Central-difference verification of the analytic gradients, step
/// 1e-6 * (1 + |theta|), relative error |a - f| / max(|a|, |f|, 1).
/// `perturb_analytic` adds a constant to every analytic entry first
/// (fault-injection hook for exercising the failure path).
struct GradCheckBlock {
  double max_rel_error = 0.0;
  std::string worst_coordinate;
};

struct GradCheckReport {
  GradCheckBlock mu;
  GradCheckBlock chol;
  GradCheckBlock alpha;

  double max_rel_error() const;
  bool passes(double tolerance) const { return max_rel_error() <= tolerance; }
};

GradCheckReport gradient_check(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                               const Eigen::Ref<const Eigen::VectorXi>& t,
                               double perturb_analytic = 0.0);

}  // namespace bsvm
