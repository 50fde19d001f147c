#include "bsvm/model.hpp"

#include <cmath>
#include <sstream>

#include "bsvm/errors.hpp"
#include "bsvm/special_math.hpp"

namespace bsvm {

namespace {

void check_labels(const Eigen::Ref<const Eigen::VectorXi>& y, int n_classes, const char* what) {
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    if (y(n) < 1 || y(n) > n_classes) {
      std::ostringstream os;
      os << what << ": label " << y(n) << " at row " << n << " outside 1.." << n_classes;
      throw ConfigError(os.str());
    }
  }
}

void check_ready(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                 const Eigen::Ref<const Eigen::VectorXi>& t) {
  if (state.cache_stale) throw ConfigError("model: kernel cache is stale, rebuild it first");
  if (state.n_classes < 2) throw ConfigError("model: need at least two classes");
  const Eigen::Index n = state.cache.data_count();
  if (y.size() != n || t.size() != n || state.vp.alpha.size() != n) {
    throw ConfigError("model: observation count mismatch between cache, labels, and alpha");
  }
  check_labels(y, state.n_classes, "model");
  check_labels(t, state.n_classes, "model (competitor)");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t(i) == y(i)) {
      std::ostringstream os;
      os << "model: competitor class equals label at row " << i;
      throw ConfigError(os.str());
    }
  }
}

struct PerObservation {
  Eigen::VectorXd s;        // 1 / sqrt(alpha_n)
  Eigen::VectorXd e;        // 1 + kappa_n (mu_{t_n} - mu_{y_n})
  Eigen::VectorXd q;        // closed-form alpha target
  Eigen::MatrixXd mean_at;  // N x C posterior means kappa * mu^T
};

PerObservation per_observation_terms(const ModelState& state,
                                     const Eigen::Ref<const Eigen::VectorXi>& y,
                                     const Eigen::Ref<const Eigen::VectorXi>& t) {
  const Eigen::Index n = state.cache.data_count();
  const int c = state.n_classes;

  PerObservation po;
  po.mean_at = state.cache.kappa * state.vp.mu.transpose();
  po.s.resize(n);
  po.e.resize(n);
  po.q.resize(n);

  std::vector<Eigen::VectorXd> rowsq(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) {
    rowsq[static_cast<std::size_t>(j)] =
        (state.cache.kappa * state.vp.chol_sigma[static_cast<std::size_t>(j)])
            .rowwise()
            .squaredNorm();
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const int yj = y(i) - 1;
    const int tj = t(i) - 1;
    const double alpha = std::max(state.vp.alpha(i), kAlphaFloor);
    po.s(i) = 1.0 / std::sqrt(alpha);
    po.e(i) = 1.0 + po.mean_at(i, tj) - po.mean_at(i, yj);
    po.q(i) = 2.0 * state.cache.ktilde_diag(i) + po.e(i) * po.e(i) +
              rowsq[static_cast<std::size_t>(tj)](i) + rowsq[static_cast<std::size_t>(yj)](i);
  }
  return po;
}

double prior_term(const ModelState& state) {
  const auto& chol_k = state.cache.chol_kpp;
  double total = 0.0;
  for (int j = 0; j < state.n_classes; ++j) {
    const auto& l = state.vp.chol_sigma[static_cast<std::size_t>(j)];
    const double logdet_sigma = 2.0 * l.diagonal().array().log().sum();
    const Eigen::MatrixXd a = chol_k.triangularView<Eigen::Lower>().solve(l);
    const double trace_term = a.squaredNorm();
    const Eigen::VectorXd b =
        chol_k.triangularView<Eigen::Lower>().solve(state.vp.mu.row(j).transpose());
    const double quad = b.squaredNorm();
    const double term = -0.5 * (-logdet_sigma + trace_term + quad);
    if (!std::isfinite(term)) {
      std::ostringstream os;
      os << "elbo: non-finite prior term for class " << (j + 1);
      throw NumericError(os.str());
    }
    total += term;
  }
  return total;
}

double data_term_at(const PerObservation& po, const ModelState& state, Eigen::Index i) {
  const double alpha = std::max(state.vp.alpha(i), kAlphaFloor);
  const double term = -0.5 * po.s(i) * (po.q(i) - alpha) - (po.e(i) - 1.0) +
                      0.25 * std::log(alpha) + log_bessel_k_half(std::sqrt(alpha));
  return term;
}

}  // namespace

void VariationalParams::validate() const {
  const Eigen::Index c = mu.rows();
  if (static_cast<Eigen::Index>(chol_sigma.size()) != c) {
    throw ConfigError("variational params: class count mismatch");
  }
  for (Eigen::Index j = 0; j < c; ++j) {
    const auto& l = chol_sigma[static_cast<std::size_t>(j)];
    if (l.rows() != mu.cols() || l.cols() != mu.cols()) {
      throw ConfigError("variational params: Cholesky factor size mismatch");
    }
    if ((l.diagonal().array() <= 0.0).any()) {
      throw ConfigError("variational params: Cholesky diagonal must be positive");
    }
  }
  if ((alpha.array() < kAlphaFloor).any()) {
    throw ConfigError("variational params: alpha below floor");
  }
}

NaturalParams to_natural(const VariationalParams& vp) {
  const Eigen::Index c = vp.n_classes();
  const Eigen::Index p = vp.inducing_count();
  NaturalParams np;
  np.eta1.resize(c, p);
  np.eta2.resize(static_cast<std::size_t>(c));
  for (Eigen::Index j = 0; j < c; ++j) {
    const auto& l = vp.chol_sigma[static_cast<std::size_t>(j)];
    // Sigma^{-1} = L^{-T} L^{-1}
    const Eigen::MatrixXd linv =
        l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd sigma_inv = linv.transpose() * linv;
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.transpose());
    np.eta2[static_cast<std::size_t>(j)] = -0.5 * sigma_inv;
    np.eta1.row(j) = (sigma_inv * vp.mu.row(j).transpose()).transpose();
  }
  return np;
}

void set_from_natural(VariationalParams& vp, const NaturalParams& np) {
  const Eigen::Index c = np.eta1.rows();
  const Eigen::Index p = np.eta1.cols();
  for (Eigen::Index j = 0; j < c; ++j) {
    Eigen::MatrixXd precision = -2.0 * np.eta2[static_cast<std::size_t>(j)];
    precision = 0.5 * (precision + precision.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "natural params: -2*eta2 not positive definite for class " << (j + 1);
      throw NumericError(os.str());
    }
    Eigen::MatrixXd sigma = llt.solve(Eigen::MatrixXd::Identity(p, p));
    sigma = 0.5 * (sigma + sigma.transpose());
    Eigen::LLT<Eigen::MatrixXd> sigma_llt(sigma);
    if (sigma_llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "natural params: recovered Sigma not positive definite for class " << (j + 1);
      throw NumericError(os.str());
    }
    vp.chol_sigma[static_cast<std::size_t>(j)] = sigma_llt.matrixL();
    vp.mu.row(j) = (sigma * np.eta1.row(j).transpose()).transpose();
  }
}

ModelState init_model(const Eigen::Ref<const Eigen::MatrixXd>& x, int n_classes,
                      Eigen::Index inducing_count, std::uint64_t seed, double jitter) {
  if (n_classes < 2) throw ConfigError("init_model: need at least two classes");
  if (inducing_count < 1) throw ConfigError("init_model: need at least one inducing point");
  if (x.rows() < 1) throw ConfigError("init_model: empty training matrix");

  ModelState state;
  state.n_classes = n_classes;
  state.Z.Z = kmeans_centroids(x, std::min<Eigen::Index>(inducing_count, x.rows()), seed);
  state.hyper.lengthscale = Eigen::VectorXd::Constant(1, median_heuristic_lengthscale(x, seed));
  state.hyper.signal_variance = 1.0;
  state.hyper.jitter = jitter;

  const Eigen::Index p = state.Z.count();
  state.vp.mu = Eigen::MatrixXd::Zero(n_classes, p);
  state.vp.chol_sigma.assign(static_cast<std::size_t>(n_classes),
                             Eigen::MatrixXd::Identity(p, p));
  state.vp.alpha = Eigen::VectorXd::Ones(x.rows());

  rebuild_cache(state, x);
  return state;
}

void set_hyperparams(ModelState& state, const KernelHyperparams& h) {
  h.validate();
  state.hyper = h;
  state.cache_stale = true;
}

void set_inducing_inputs(ModelState& state, const InducingInputs& z) {
  z.validate();
  state.Z = z;
  state.cache_stale = true;
}

void rebuild_cache(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  state.Z.validate();
  state.cache = build_cache(x, state.Z, state.hyper);
  state.cache_stale = false;
}

int competitor_class(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                     Eigen::Index n) {
  const Eigen::VectorXi t = competitor_classes(state, y);
  return t(n);
}

Eigen::VectorXi competitor_classes(const ModelState& state,
                                   const Eigen::Ref<const Eigen::VectorXi>& y) {
  if (state.cache_stale) throw ConfigError("model: kernel cache is stale, rebuild it first");
  if (state.n_classes < 2) throw ConfigError("competitor_class: need at least two classes");
  check_labels(y, state.n_classes, "competitor_class");

  const Eigen::MatrixXd means = state.cache.kappa * state.vp.mu.transpose();
  Eigen::VectorXi t(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int best_j = -1;
    for (int j = 0; j < state.n_classes; ++j) {
      if (j + 1 == y(i)) continue;
      if (means(i, j) > best) {
        best = means(i, j);
        best_j = j;
      }
    }
    t(i) = best_j + 1;
  }
  return t;
}

double elbo(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
            const Eigen::Ref<const Eigen::VectorXi>& t) {
  check_ready(state, y, t);
  const PerObservation po = per_observation_terms(state, y, t);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double term = data_term_at(po, state, i);
    if (!std::isfinite(term)) {
      std::ostringstream os;
      os << "elbo: non-finite data term at observation " << i;
      throw NumericError(os.str());
    }
    total += term;
  }
  return total + prior_term(state);
}

double elbo(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y) {
  return elbo(state, y, competitor_classes(state, y));
}

double elbo_batch(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                  const Eigen::Ref<const Eigen::VectorXi>& t, const std::vector<int>& batch) {
  check_ready(state, y, t);
  if (batch.empty()) return prior_term(state);
  const PerObservation po = per_observation_terms(state, y, t);
  const double scale = static_cast<double>(y.size()) / static_cast<double>(batch.size());
  double total = 0.0;
  for (int i : batch) total += data_term_at(po, state, i);
  return scale * total + prior_term(state);
}

namespace {

Eigen::MatrixXd grad_mu_impl(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                             const Eigen::Ref<const Eigen::VectorXi>& t,
                             const std::vector<int>& batch, double scale) {
  const PerObservation po = per_observation_terms(state, y, t);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(state.n_classes, state.vp.inducing_count());
  for (int i : batch) {
    const double coeff = scale * (po.s(i) * po.e(i) + 1.0);
    g.row(t(i) - 1) -= coeff * state.cache.kappa.row(i);
    g.row(y(i) - 1) += coeff * state.cache.kappa.row(i);
  }
  g -= state.cache.solve_kpp(state.vp.mu.transpose()).transpose();
  return g;
}

std::vector<Eigen::MatrixXd> grad_sigma_impl(const ModelState& state,
                                             const Eigen::Ref<const Eigen::VectorXi>& y,
                                             const Eigen::Ref<const Eigen::VectorXi>& t,
                                             const std::vector<int>& batch, double scale) {
  const PerObservation po = per_observation_terms(state, y, t);
  const Eigen::Index p = state.vp.inducing_count();
  const Eigen::MatrixXd kpp_inv = state.cache.solve_kpp(Eigen::MatrixXd::Identity(p, p));

  std::vector<Eigen::MatrixXd> grads(static_cast<std::size_t>(state.n_classes));
  for (int j = 0; j < state.n_classes; ++j) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(y.size());
    for (int i : batch) {
      if (t(i) - 1 == j || y(i) - 1 == j) w(i) = scale * 0.5 * po.s(i);
    }
    const auto& l = state.vp.chol_sigma[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd linv =
        l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd sigma_inv = linv.transpose() * linv;
    Eigen::MatrixXd g = -(state.cache.kappa.transpose() * w.asDiagonal() * state.cache.kappa) -
                        0.5 * (kpp_inv - sigma_inv);
    g = 0.5 * (g + g.transpose());
    grads[static_cast<std::size_t>(j)] = std::move(g);
  }
  return grads;
}

std::vector<int> all_indices(Eigen::Index n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(i);
  return idx;
}

}  // namespace

Eigen::MatrixXd grad_mu(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                        const Eigen::Ref<const Eigen::VectorXi>& t) {
  check_ready(state, y, t);
  return grad_mu_impl(state, y, t, all_indices(y.size()), 1.0);
}

Eigen::MatrixXd grad_mu_batch(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                              const Eigen::Ref<const Eigen::VectorXi>& t,
                              const std::vector<int>& batch) {
  check_ready(state, y, t);
  const double scale =
      batch.empty() ? 1.0 : static_cast<double>(y.size()) / static_cast<double>(batch.size());
  return grad_mu_impl(state, y, t, batch, scale);
}

std::vector<Eigen::MatrixXd> grad_sigma(const ModelState& state,
                                        const Eigen::Ref<const Eigen::VectorXi>& y,
                                        const Eigen::Ref<const Eigen::VectorXi>& t) {
  check_ready(state, y, t);
  return grad_sigma_impl(state, y, t, all_indices(y.size()), 1.0);
}

std::vector<Eigen::MatrixXd> grad_chol_sigma(const ModelState& state,
                                             const Eigen::Ref<const Eigen::VectorXi>& y,
                                             const Eigen::Ref<const Eigen::VectorXi>& t) {
  const auto gs = grad_sigma(state, y, t);
  std::vector<Eigen::MatrixXd> out(gs.size());
  for (std::size_t j = 0; j < gs.size(); ++j) {
    const Eigen::MatrixXd full = (gs[j] + gs[j].transpose()) * state.vp.chol_sigma[j];
    out[j] = full.triangularView<Eigen::Lower>();
  }
  return out;
}

std::vector<Eigen::MatrixXd> grad_chol_sigma_batch(const ModelState& state,
                                                   const Eigen::Ref<const Eigen::VectorXi>& y,
                                                   const Eigen::Ref<const Eigen::VectorXi>& t,
                                                   const std::vector<int>& batch) {
  check_ready(state, y, t);
  const double scale =
      batch.empty() ? 1.0 : static_cast<double>(y.size()) / static_cast<double>(batch.size());
  const auto gs = grad_sigma_impl(state, y, t, batch, scale);
  std::vector<Eigen::MatrixXd> out(gs.size());
  for (std::size_t j = 0; j < gs.size(); ++j) {
    const Eigen::MatrixXd full = (gs[j] + gs[j].transpose()) * state.vp.chol_sigma[j];
    out[j] = full.triangularView<Eigen::Lower>();
  }
  return out;
}

Eigen::VectorXd grad_alpha(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                           const Eigen::Ref<const Eigen::VectorXi>& t) {
  check_ready(state, y, t);
  const PerObservation po = per_observation_terms(state, y, t);
  Eigen::VectorXd g(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double s = po.s(i);
    g(i) = 0.25 * s * s * s * po.q(i) - 0.25 * s;
  }
  return g;
}

Eigen::VectorXd alpha_closed_form(const ModelState& state,
                                  const Eigen::Ref<const Eigen::VectorXi>& y,
                                  const Eigen::Ref<const Eigen::VectorXi>& t) {
  check_ready(state, y, t);
  const PerObservation po = per_observation_terms(state, y, t);
  return po.q.cwiseMax(kAlphaFloor);
}

}  // namespace bsvm
