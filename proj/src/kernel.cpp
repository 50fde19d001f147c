#include "bsvm/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "bsvm/errors.hpp"
#include "bsvm/rng.hpp"

namespace bsvm {

namespace {

constexpr double kMaxJitter = 1e-2;
constexpr double kDuplicateTol = 1e-12;

Eigen::MatrixXd scale_columns(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const KernelHyperparams& h) {
  Eigen::MatrixXd s = x;
  for (Eigen::Index d = 0; d < x.cols(); ++d) s.col(d) /= h.lengthscale_for(d);
  return s;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> near_duplicate_rows(
    const Eigen::Ref<const Eigen::MatrixXd>& z) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> dups;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index k = i + 1; k < z.rows(); ++k) {
      if ((z.row(i) - z.row(k)).cwiseAbs().maxCoeff() <= kDuplicateTol) {
        dups.emplace_back(i, k);
      }
    }
  }
  return dups;
}

}  // namespace

void KernelHyperparams::validate() const {
  if (lengthscale.size() < 1 || (lengthscale.array() <= 0.0).any() ||
      !lengthscale.allFinite()) {
    throw ConfigError("kernel: lengthscale entries must be strictly positive and finite");
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw ConfigError("kernel: signal_variance must be strictly positive");
  }
  if (!(jitter > 0.0) || !std::isfinite(jitter)) {
    throw ConfigError("kernel: jitter must be strictly positive");
  }
}

void InducingInputs::validate() const {
  if (Z.rows() < 1) throw ConfigError("inducing inputs: need at least one row");
  if (!Z.allFinite()) throw ConfigError("inducing inputs: rows must be finite");
  const auto dups = near_duplicate_rows(Z);
  if (!dups.empty()) {
    std::ostringstream os;
    os << "inducing inputs: rows " << dups.front().first << " and " << dups.front().second
       << " coincide";
    throw ConfigError(os.str());
  }
}

Eigen::MatrixXd KernelCache::solve_kpp(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd v = chol_kpp.triangularView<Eigen::Lower>().solve(b);
  return chol_kpp.transpose().triangularView<Eigen::Upper>().solve(v);
}

double eval_kernel(const Eigen::Ref<const Eigen::VectorXd>& x1,
                   const Eigen::Ref<const Eigen::VectorXd>& x2, const KernelHyperparams& h) {
  if (x1.size() != x2.size()) throw ConfigError("eval_kernel: dimension mismatch");
  if (h.lengthscale.size() != 1 && h.lengthscale.size() != x1.size()) {
    throw ConfigError("eval_kernel: lengthscale dimension mismatch");
  }
  if (!x1.allFinite() || !x2.allFinite()) {
    throw std::domain_error("eval_kernel: non-finite input");
  }
  double d2 = 0.0;
  for (Eigen::Index d = 0; d < x1.size(); ++d) {
    const double delta = (x1(d) - x2(d)) / h.lengthscale_for(d);
    d2 += delta * delta;
  }
  return h.signal_variance * std::exp(-0.5 * d2);
}

Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a,
                              const Eigen::Ref<const Eigen::MatrixXd>& b,
                              const KernelHyperparams& h) {
  h.validate();
  if (a.cols() != b.cols()) throw ConfigError("kernel_matrix: column counts differ");
  if (!a.allFinite() || !b.allFinite()) {
    throw std::domain_error("kernel_matrix: non-finite input");
  }
  const Eigen::MatrixXd as = scale_columns(a, h);
  const Eigen::MatrixXd bs = scale_columns(b, h);
  const Eigen::VectorXd an = as.rowwise().squaredNorm();
  const Eigen::VectorXd bn = bs.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = an.replicate(1, b.rows()) + bn.transpose().replicate(a.rows(), 1) -
                       2.0 * (as * bs.transpose());
  d2 = d2.cwiseMax(0.0);
  return h.signal_variance * (-0.5 * d2.array()).exp().matrix();
}

Eigen::MatrixXd kernel_gram(const Eigen::Ref<const Eigen::MatrixXd>& a,
                            const KernelHyperparams& h) {
  Eigen::MatrixXd k = kernel_matrix(a, a, h);
  k = 0.5 * (k + k.transpose());
  k.diagonal().setConstant(h.signal_variance);
  return k;
}

KernelCache build_cache(const Eigen::Ref<const Eigen::MatrixXd>& x, const InducingInputs& z,
                        const KernelHyperparams& h) {
  h.validate();
  if (x.rows() > 0 && x.cols() != z.Z.cols()) {
    throw ConfigError("build_cache: X and Z column counts differ");
  }

  KernelCache cache;
  const Eigen::MatrixXd kpp_raw = kernel_gram(z.Z, h);
  const Eigen::Index p = kpp_raw.rows();
  const Eigen::MatrixXd knp =
      x.rows() > 0 ? kernel_matrix(x, z.Z, h) : Eigen::MatrixXd(0, p);

  // A bare factorization keeps the Z = X degeneracy exact; jitter enters
  // only when the factorization fails or the residual variances come out
  // below tolerance, and is then doubled up to the cap.
  double jitter = 0.0;
  while (true) {
    cache.kpp = kpp_raw + jitter * Eigen::MatrixXd::Identity(p, p);
    Eigen::LLT<Eigen::MatrixXd> llt(cache.kpp);
    bool usable = llt.info() == Eigen::Success;
    if (usable) {
      cache.jitter_used = jitter;
      cache.chol_kpp = llt.matrixL();
      if (x.rows() > 0) {
        cache.knp = knp;
        // kappa^T = K_PP^{-1} K_PN via two triangular solves
        cache.kappa = cache.solve_kpp(knp.transpose()).transpose();
        cache.ktilde_diag =
            Eigen::VectorXd::Constant(x.rows(), h.signal_variance) -
            (knp.array() * cache.kappa.array()).rowwise().sum().matrix();
        if (cache.ktilde_diag.minCoeff() < -1e-8 || !cache.ktilde_diag.allFinite()) {
          usable = false;  // factorization too poorly conditioned at this jitter
        } else {
          cache.ktilde_diag = cache.ktilde_diag.cwiseMax(0.0);
        }
      } else {
        cache.knp.resize(0, p);
        cache.kappa.resize(0, p);
        cache.ktilde_diag.resize(0);
      }
    }
    if (usable) return cache;

    jitter = jitter == 0.0 ? h.jitter : 2.0 * jitter;
    if (jitter > kMaxJitter) {
      std::ostringstream os;
      os << "build_cache: K_PP not positive definite after jitter escalation to " << jitter;
      const auto dups = near_duplicate_rows(z.Z);
      if (!dups.empty()) {
        os << "; near-duplicate inducing rows:";
        for (const auto& [i, k] : dups) os << " (" << i << "," << k << ")";
      }
      throw NumericError(os.str());
    }
  }
}

KernelCache build_prior_cache(const InducingInputs& z, const KernelHyperparams& h) {
  return build_cache(Eigen::MatrixXd(0, z.Z.cols()), z, h);
}

double median_heuristic_lengthscale(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                    std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  if (n < 2) return 1.0;

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const Eigen::Index m = std::min<Eigen::Index>(n, 256);
  auto rng = make_rng(derive_seed(seed, 0xB10B5));
  for (Eigen::Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }

  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index k = i + 1; k < m; ++k) {
      dists.push_back((x.row(idx[static_cast<std::size_t>(i)]) -
                       x.row(idx[static_cast<std::size_t>(k)]))
                          .norm());
    }
  }
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t sz = dists.size();
  const double median =
      (sz % 2 == 1) ? dists[sz / 2] : 0.5 * (dists[sz / 2 - 1] + dists[sz / 2]);
  return median > 0.0 ? median : 1.0;
}

Eigen::MatrixXd kmeans_centroids(const Eigen::Ref<const Eigen::MatrixXd>& x, Eigen::Index k,
                                 std::uint64_t seed, int lloyd_iters) {
  const Eigen::Index n = x.rows();
  if (n < 1) throw ConfigError("kmeans_centroids: empty input");
  if (k < 1) throw ConfigError("kmeans_centroids: k must be >= 1");

  Eigen::MatrixXd centers;
  if (k >= n) {
    centers = x;
  } else {
    auto rng = make_rng(derive_seed(seed, 0x6B6D));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < k; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    centers.resize(k, x.cols());
    for (Eigen::Index i = 0; i < k; ++i) centers.row(i) = x.row(idx[static_cast<std::size_t>(i)]);

    std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), 0);
    for (int it = 0; it < lloyd_iters; ++it) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index best_c = 0;
        for (Eigen::Index c = 0; c < k; ++c) {
          const double d = (x.row(i) - centers.row(c)).squaredNorm();
          if (d < best) {
            best = d;
            best_c = c;
          }
        }
        assign[static_cast<std::size_t>(i)] = best_c;
      }
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
        counts(assign[static_cast<std::size_t>(i)]) += 1.0;
      }
      for (Eigen::Index c = 0; c < k; ++c) {
        if (counts(c) > 0.0) centers.row(c) = sums.row(c) / counts(c);
        // empty cluster keeps its previous center
      }
    }
  }

  // perturb exact duplicates so the Gram matrix stays factorizable
  for (Eigen::Index i = 0; i < centers.rows(); ++i) {
    int dup_rank = 0;
    for (Eigen::Index j = 0; j < i; ++j) {
      if ((centers.row(i) - centers.row(j)).cwiseAbs().maxCoeff() <= kDuplicateTol) {
        ++dup_rank;
      }
    }
    if (dup_rank > 0) centers.row(i).array() += 1e-6 * static_cast<double>(dup_rank);
  }
  return centers;
}

}  // namespace bsvm
