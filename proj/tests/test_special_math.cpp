#include <doctest.h>

#include <cmath>

#include "bsvm/special_math.hpp"
#include "oracles.hpp"

using bsvm::GigParams;

TEST_CASE("bessel_k_half at x=1 matches the quadrature value") {
  // frozen from the integral representation before the closed form was wired up
  const double expected = 0.46106850444789456;
  CHECK(oracles::bessel_k_half_quadrature(1.0) == doctest::Approx(expected).epsilon(1e-10));
  CHECK(bsvm::bessel_k_half(1.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_bessel_k_half satisfies the closed-form identity") {
  const double pi = 3.14159265358979323846;
  for (double x : {1e-6, 1e-3, 0.1, 1.0, 7.5, 100.0, 1e6}) {
    const double residual =
        bsvm::log_bessel_k_half(x) + x - 0.5 * std::log(pi / (2.0 * x));
    CHECK(std::abs(residual) <= 1e-12 * std::max(1.0, x));
  }
}

TEST_CASE("log_bessel_k_half stays finite where the value underflows") {
  const double v = bsvm::log_bessel_k_half(100.0);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-102.07679374034932).epsilon(1e-12));
  for (double x = 1e-6; x <= 1e6; x *= 10.0) {
    CHECK(std::isfinite(bsvm::log_bessel_k_half(x)));
  }
}

TEST_CASE("bessel_k_half matches quadrature over a log-spaced grid") {
  for (int i = 0; i <= 24; ++i) {
    const double x = std::pow(10.0, -3.0 + 6.0 * i / 24.0);
    const double log_impl = bsvm::log_bessel_k_half(x);
    const double log_oracle = oracles::bessel_k_half_log_quadrature(x);
    CHECK(std::abs(std::expm1(log_impl - log_oracle)) <= 1e-8);
  }
}

TEST_CASE("bessel domain errors") {
  CHECK_THROWS_AS(bsvm::bessel_k_half(0.0), std::domain_error);
  CHECK_THROWS_AS(bsvm::bessel_k_half(-1.0), std::domain_error);
  CHECK_THROWS_AS(bsvm::bessel_k_half(std::nan("")), std::domain_error);
  CHECK_THROWS_AS(bsvm::log_bessel_k_half(0.0), std::domain_error);
}

TEST_CASE("gig moments match the quadrature oracle at the worked examples") {
  CHECK(oracles::gig_mean_quadrature(4.0) == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(oracles::gig_mean_quadrature(1.0) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(oracles::gig_inv_mean_quadrature(4.0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(oracles::gig_inv_mean_quadrature(1.0) == doctest::Approx(1.0).epsilon(1e-8));

  CHECK(bsvm::gig_mean(GigParams(4.0)) == doctest::Approx(3.0));
  CHECK(bsvm::gig_mean(GigParams(1.0)) == doctest::Approx(2.0));
  CHECK(bsvm::gig_inv_mean(GigParams(4.0)) == doctest::Approx(0.5));
  CHECK(bsvm::gig_inv_mean(GigParams(1.0)) == doctest::Approx(1.0));
}

TEST_CASE("gig moments match quadrature across the alpha range") {
  for (int i = 0; i <= 16; ++i) {
    const double alpha = std::pow(10.0, -4.0 + 8.0 * i / 16.0);
    const double mean = bsvm::gig_mean(GigParams(alpha));
    const double inv_mean = bsvm::gig_inv_mean(GigParams(alpha));
    CHECK(std::abs(mean / oracles::gig_mean_quadrature(alpha) - 1.0) <= 1e-6);
    CHECK(std::abs(inv_mean / oracles::gig_inv_mean_quadrature(alpha) - 1.0) <= 1e-6);
  }
}

TEST_CASE("gig limits and floor behavior") {
  CHECK(bsvm::gig_mean(GigParams(1e-12)) == doctest::Approx(1.0).epsilon(1e-5));
  const double v = bsvm::gig_inv_mean(GigParams(1e-8));
  CHECK(v == doctest::Approx(1e4));
  CHECK(std::isfinite(v));
}

TEST_CASE("gig parameter validation") {
  CHECK_THROWS_AS(GigParams(0.0), std::domain_error);
  CHECK_THROWS_AS(GigParams(-2.0), std::domain_error);
  CHECK_THROWS_AS(GigParams(std::numeric_limits<double>::infinity()), std::domain_error);
}
