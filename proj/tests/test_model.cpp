#include <doctest.h>

#include <cmath>
#include <random>

#include "bsvm/errors.hpp"
#include "bsvm/gradcheck.hpp"
#include "bsvm/model.hpp"
#include "oracles.hpp"

using namespace bsvm;

TEST_CASE("competitor class") {
  RandomInstance inst = make_random_instance(15, 4, 4, 2, 3);
  const Eigen::VectorXi t = competitor_classes(inst.state, inst.y);

  SUBCASE("matches an exhaustive scan") {
    const Eigen::MatrixXd means = inst.state.cache.kappa * inst.state.vp.mu.transpose();
    for (Eigen::Index n = 0; n < inst.y.size(); ++n) {
      int best = -1;
      double best_val = -1e300;
      for (int j = 1; j <= 4; ++j) {
        if (j == inst.y(n)) continue;
        if (means(n, j - 1) > best_val) {
          best_val = means(n, j - 1);
          best = j;
        }
      }
      CHECK(t(n) == best);
      CHECK(t(n) != inst.y(n));
    }
  }

  SUBCASE("two classes always pick the other one") {
    RandomInstance two = make_random_instance(10, 2, 3, 2, 5);
    const Eigen::VectorXi tt = competitor_classes(two.state, two.y);
    for (Eigen::Index n = 0; n < two.y.size(); ++n) CHECK(tt(n) == 3 - two.y(n));
  }

  SUBCASE("all-zero means tie toward the smallest index") {
    inst.state.vp.mu.setZero();
    const Eigen::VectorXi tz = competitor_classes(inst.state, inst.y);
    for (Eigen::Index n = 0; n < inst.y.size(); ++n) {
      CHECK(tz(n) == (inst.y(n) == 1 ? 2 : 1));
    }
  }
}

TEST_CASE("elbo equals the dense-inverse oracle on random instances") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    RandomInstance inst = make_random_instance(20, 3, 5, 3, seed);
    const Eigen::VectorXi t = competitor_classes(inst.state, inst.y);
    const double fast = elbo(inst.state, inst.y, t);
    const double dense = oracles::elbo_dense(inst.state, inst.y, t, inst.x);
    CHECK(std::abs(fast - dense) / std::abs(dense) <= 1e-10);
  }
}

TEST_CASE("elbo with no data reduces to the prior part") {
  RandomInstance inst = make_random_instance(6, 3, 4, 2, 9);
  ModelState empty = inst.state;
  empty.cache = build_cache(Eigen::MatrixXd(0, 2), empty.Z, empty.hyper);
  empty.vp.alpha.resize(0);
  const Eigen::VectorXi none(0);
  const double value = elbo(empty, none, none);

  const Eigen::Index p = empty.Z.count();
  double expected = 0.0;
  for (int j = 0; j < 3; ++j) {
    const auto& l = empty.vp.chol_sigma[static_cast<std::size_t>(j)];
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    const Eigen::MatrixXd a = empty.cache.chol_kpp.triangularView<Eigen::Lower>().solve(l);
    const Eigen::VectorXd b = empty.cache.chol_kpp.triangularView<Eigen::Lower>().solve(
        empty.vp.mu.row(j).transpose());
    expected += -0.5 * (-logdet + a.squaredNorm() + b.squaredNorm());
  }
  CHECK(value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(p >= 1);
}

TEST_CASE("elbo prior term at mu=0, Sigma=K_PP") {
  RandomInstance inst = make_random_instance(5, 3, 4, 2, 13);
  ModelState state = inst.state;
  state.cache = build_cache(Eigen::MatrixXd(0, 2), state.Z, state.hyper);
  state.vp.alpha.resize(0);
  state.vp.mu.setZero();
  for (auto& l : state.vp.chol_sigma) l = state.cache.chol_kpp;

  const Eigen::VectorXi none(0);
  const double value = elbo(state, none, none);
  const double logdet_k =
      2.0 * state.cache.chol_kpp.diagonal().array().log().sum();
  const double p = static_cast<double>(state.Z.count());
  CHECK(value == doctest::Approx(-0.5 * 3.0 * (-logdet_k + p)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    RandomInstance inst = make_random_instance(12, 3, 4, 2, seed);
    const Eigen::VectorXi t = competitor_classes(inst.state, inst.y);
    const GradCheckReport report = gradient_check(inst.state, inst.y, t);
    CHECK(report.mu.max_rel_error <= 1e-5);
    CHECK(report.chol.max_rel_error <= 1e-5);
    CHECK(report.alpha.max_rel_error <= 1e-5);
  }
}

TEST_CASE("gradient structure in special cases") {
  RandomInstance inst = make_random_instance(10, 4, 4, 2, 21);

  SUBCASE("no data leaves only the prior gradient") {
    ModelState state = inst.state;
    state.cache = build_cache(Eigen::MatrixXd(0, 2), state.Z, state.hyper);
    state.vp.alpha.resize(0);
    const Eigen::VectorXi none(0);
    const Eigen::MatrixXd g = grad_mu(state, none, none);
    const Eigen::MatrixXd expected =
        -state.cache.solve_kpp(state.vp.mu.transpose()).transpose();
    CHECK((g - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("classes absent from labels and competitors get the prior-only Sigma gradient") {
    // labels and competitors crafted so class 4 never appears
    Eigen::VectorXi y(10), t(10);
    for (Eigen::Index n = 0; n < y.size(); ++n) {
      y(n) = 1 + static_cast<int>(n % 2);
      t(n) = y(n) == 1 ? 2 : 3;
    }
    const auto gs = grad_sigma(inst.state, y, t);
    const Eigen::Index p = inst.state.vp.inducing_count();
    const Eigen::MatrixXd kpp_inv =
        inst.state.cache.solve_kpp(Eigen::MatrixXd::Identity(p, p));
    const auto& l = inst.state.vp.chol_sigma[3];
    const Eigen::MatrixXd linv =
        l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd sigma_inv = linv.transpose() * linv;
    const Eigen::MatrixXd expected = -0.5 * (kpp_inv - sigma_inv);
    CHECK((gs[3] - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SUBCASE("Sigma_j = K_PP for an untouched class zeroes its gradient") {
    Eigen::VectorXi y(10), t(10);
    for (Eigen::Index n = 0; n < y.size(); ++n) {
      y(n) = 1 + static_cast<int>(n % 2);
      t(n) = y(n) == 1 ? 2 : 3;
    }
    inst.state.vp.chol_sigma[3] = inst.state.cache.chol_kpp;
    const auto gs = grad_sigma(inst.state, y, t);
    CHECK(gs[3].cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("alpha closed form") {
  RandomInstance inst = make_random_instance(14, 3, 5, 2, 33);
  const Eigen::VectorXi t = competitor_classes(inst.state, inst.y);

  SUBCASE("gradient vanishes after the assignment") {
    inst.state.vp.alpha = alpha_closed_form(inst.state, inst.y, t);
    const Eigen::VectorXd g = grad_alpha(inst.state, inst.y, t);
    CHECK(g.cwiseAbs().maxCoeff() <= 1e-10);
  }

  SUBCASE("targets are nonnegative and floored") {
    const Eigen::VectorXd q = alpha_closed_form(inst.state, inst.y, t);
    CHECK(q.minCoeff() >= kAlphaFloor);
  }

  SUBCASE("gradient sign pushes alpha toward the target") {
    const Eigen::VectorXd q = alpha_closed_form(inst.state, inst.y, t);
    inst.state.vp.alpha = 0.5 * q.cwiseMax(2.0 * kAlphaFloor);
    const Eigen::VectorXd g = grad_alpha(inst.state, inst.y, t);
    for (Eigen::Index n = 0; n < g.size(); ++n) CHECK(g(n) > 0.0);
  }
}

TEST_CASE("objective is invariant to permuting the training rows") {
  RandomInstance inst = make_random_instance(12, 3, 4, 2, 41);
  const Eigen::VectorXi t = competitor_classes(inst.state, inst.y);
  const double base = elbo(inst.state, inst.y, t);

  std::mt19937_64 rng(7);
  std::vector<Eigen::Index> perm(12);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  Eigen::MatrixXd xp(12, 2);
  Eigen::VectorXi yp(12), tp(12);
  Eigen::VectorXd ap(12);
  for (Eigen::Index i = 0; i < 12; ++i) {
    xp.row(i) = inst.x.row(perm[static_cast<std::size_t>(i)]);
    yp(i) = inst.y(perm[static_cast<std::size_t>(i)]);
    tp(i) = t(perm[static_cast<std::size_t>(i)]);
    ap(i) = inst.state.vp.alpha(perm[static_cast<std::size_t>(i)]);
  }
  ModelState state = inst.state;
  rebuild_cache(state, xp);
  state.vp.alpha = ap;
  CHECK(std::abs(elbo(state, yp, tp) - base) <= 1e-12 * std::abs(base));
}

TEST_CASE("objective is equivariant under class relabeling") {
  RandomInstance inst = make_random_instance(10, 3, 4, 2, 55);
  const Eigen::VectorXi t = competitor_classes(inst.state, inst.y);
  const double base = elbo(inst.state, inst.y, t);

  const int perm[4] = {0, 3, 1, 2};  // 1->3, 2->1, 3->2
  ModelState relabeled = inst.state;
  Eigen::VectorXi yr(10), tr(10);
  for (Eigen::Index n = 0; n < 10; ++n) {
    yr(n) = perm[inst.y(n)];
    tr(n) = perm[t(n)];
  }
  for (int j = 1; j <= 3; ++j) {
    relabeled.vp.mu.row(perm[j] - 1) = inst.state.vp.mu.row(j - 1);
    relabeled.vp.chol_sigma[static_cast<std::size_t>(perm[j] - 1)] =
        inst.state.vp.chol_sigma[static_cast<std::size_t>(j - 1)];
  }
  CHECK(elbo(relabeled, yr, tr) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("natural parameter round trip") {
  RandomInstance inst = make_random_instance(8, 3, 5, 2, 61);
  const NaturalParams np = to_natural(inst.state.vp);

  for (int j = 0; j < 3; ++j) {
    const Eigen::MatrixXd prec = -2.0 * np.eta2[static_cast<std::size_t>(j)];
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    CHECK(llt.info() == Eigen::Success);
  }

  VariationalParams vp = inst.state.vp;
  set_from_natural(vp, np);
  for (int j = 0; j < 3; ++j) {
    const Eigen::MatrixXd s0 = inst.state.vp.sigma(j);
    const Eigen::MatrixXd s1 = vp.sigma(j);
    CHECK((s0 - s1).norm() / s0.norm() <= 1e-9);
    CHECK((s1 - s1.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK((vp.mu - inst.state.vp.mu).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("objective stays finite across the admissible parameter range") {
  RandomInstance inst = make_random_instance(10, 3, 4, 2, 77);
  const Eigen::VectorXi t = competitor_classes(inst.state, inst.y);
  for (double alpha : {kAlphaFloor, 1e-4, 1.0, 1e4, 1e8}) {
    inst.state.vp.alpha.setConstant(alpha);
    CHECK(std::isfinite(elbo(inst.state, inst.y, t)));
  }
  inst.state.vp.alpha.setOnes();
  inst.state.vp.mu.setConstant(50.0);
  CHECK(std::isfinite(elbo(inst.state, inst.y, competitor_classes(inst.state, inst.y))));
}

TEST_CASE("minibatch terms rescale the data sum and keep the prior whole") {
  RandomInstance inst = make_random_instance(12, 3, 4, 2, 83);
  const Eigen::VectorXi t = competitor_classes(inst.state, inst.y);
  const double n = 12.0;

  std::vector<int> all(12);
  std::iota(all.begin(), all.end(), 0);
  CHECK(elbo_batch(inst.state, inst.y, t, all) ==
        doctest::Approx(elbo(inst.state, inst.y, t)).epsilon(1e-12));

  const double prior_only = elbo_batch(inst.state, inst.y, t, {});
  const std::vector<int> batch{1, 4, 7};
  double sum_terms = 0.0;
  for (int i : batch) {
    sum_terms += (elbo_batch(inst.state, inst.y, t, {i}) - prior_only) / n;
  }
  CHECK(elbo_batch(inst.state, inst.y, t, batch) ==
        doctest::Approx(prior_only + n / 3.0 * sum_terms).epsilon(1e-10));

  const Eigen::MatrixXd g_full = grad_mu_batch(inst.state, inst.y, t, all);
  CHECK((g_full - grad_mu(inst.state, inst.y, t)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("configuration errors") {
  RandomInstance inst = make_random_instance(6, 2, 3, 2, 71);
  CHECK_THROWS_AS(init_model(inst.x, 1, 3, 0), ConfigError);

  ModelState stale = inst.state;
  stale.cache_stale = true;
  CHECK_THROWS_AS(elbo(stale, inst.y), ConfigError);

  // non-finite objective reports the bad observation
  ModelState broken = inst.state;
  broken.vp.mu.setConstant(1e308);
  CHECK_THROWS_AS(elbo(broken, inst.y, competitor_classes(broken, inst.y)), NumericError);
}
