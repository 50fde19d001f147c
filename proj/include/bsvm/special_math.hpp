#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace bsvm {

/// Parameters of the generalized inverse Gaussian family GIG(1/2, 1, alpha)
/// used for the per-observation scale variables.
template <class Scalar>
struct GigParamsT {
  Scalar alpha;

  explicit GigParamsT(Scalar alpha_in) : alpha(alpha_in) {
    if (!(alpha > Scalar(0)) || !std::isfinite(static_cast<double>(alpha))) {
      throw std::domain_error("GigParams: alpha must be strictly positive and finite, got " +
                              std::to_string(static_cast<double>(alpha)));
    }
  }
};

using GigParams = GigParamsT<double>;

namespace detail {
template <class Scalar>
inline void check_positive_finite(Scalar x, const char* fn) {
  if (!(x > Scalar(0)) || !std::isfinite(static_cast<double>(x))) {
    throw std::domain_error(std::string(fn) + ": argument must be strictly positive and finite, got " +
                            std::to_string(static_cast<double>(x)));
  }
}
}  // namespace detail

/// Modified Bessel function of the second kind at order 1/2,
/// B_{1/2}(x) = sqrt(pi / (2x)) * exp(-x). Underflows to 0 for large x;
/// use log_bessel_k_half where the logarithm is what enters an objective.
template <class Scalar>
Scalar bessel_k_half(Scalar x) {
  detail::check_positive_finite(x, "bessel_k_half");
  const Scalar pi = Scalar(3.141592653589793238462643383279502884L);
  return std::sqrt(pi / (Scalar(2) * x)) * std::exp(-x);
}

/// log B_{1/2}(x) = 0.5*log(pi/(2x)) - x, finite for any positive x
/// representable in double.
template <class Scalar>
Scalar log_bessel_k_half(Scalar x) {
  detail::check_positive_finite(x, "log_bessel_k_half");
  const Scalar pi = Scalar(3.141592653589793238462643383279502884L);
  return Scalar(0.5) * (std::log(pi / Scalar(2)) - std::log(x)) - x;
}

/// E[lambda] under GIG(1/2, 1, alpha) = sqrt(alpha) + 1.
template <class Scalar>
Scalar gig_mean(const GigParamsT<Scalar>& p) {
  return std::sqrt(p.alpha) + Scalar(1);
}

/// E[1/lambda] under GIG(1/2, 1, alpha) = alpha^{-1/2}.
template <class Scalar>
Scalar gig_inv_mean(const GigParamsT<Scalar>& p) {
  return Scalar(1) / std::sqrt(p.alpha);
}

/// Variational parameters below this floor are clamped before any
/// 1/sqrt(alpha) or log(alpha) evaluation.
inline constexpr double kAlphaFloor = 1e-8;

}  // namespace bsvm
