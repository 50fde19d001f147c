#include "bsvm/optim.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "bsvm/data.hpp"
#include "bsvm/errors.hpp"
#include "bsvm/rng.hpp"
#include "bsvm/special_math.hpp"

namespace bsvm {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double inv_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct AdamMoments {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;

  explicit AdamMoments(Eigen::Index rows, Eigen::Index cols)
      : m(Eigen::MatrixXd::Zero(rows, cols)), v(Eigen::MatrixXd::Zero(rows, cols)) {}

  void step(Eigen::MatrixXd& theta, const Eigen::MatrixXd& grad, int t,
            const TrainConfig& cfg) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    // ascent on the objective
    theta.array() += cfg.learning_rate * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + cfg.adam_eps);
  }
};

std::vector<int> sample_batch(Eigen::Index n, int batch_size, std::mt19937_64& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (batch_size <= 0 || batch_size >= n) return idx;
  for (int i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(n) - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(batch_size));
  return idx;
}

/// Central finite-difference refinement of the kernel hyperparameters and
/// inducing inputs (Type II step). Reverts when the objective decreases.
void refine_hyperparams(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x,
                        const Eigen::Ref<const Eigen::VectorXi>& y, const TrainConfig& cfg) {
  const Eigen::VectorXi t = competitor_classes(state, y);
  const KernelHyperparams hyper0 = state.hyper;
  const InducingInputs z0 = state.Z;
  const double obj0 = elbo(state, y, t);

  auto eval_at = [&](const KernelHyperparams& h, const InducingInputs& z) {
    ModelState tmp = state;
    tmp.hyper = h;
    tmp.Z = z;
    rebuild_cache(tmp, x);
    return elbo(tmp, y, t);
  };
  auto central = [&](double theta, auto apply) {
    const double h = 1e-4 * (1.0 + std::abs(theta));
    return (apply(theta + h) - apply(theta - h)) / (2.0 * h);
  };

  KernelHyperparams hyper = hyper0;
  InducingInputs z = z0;
  for (Eigen::Index d = 0; d < hyper.lengthscale.size(); ++d) {
    const double log_ls = std::log(hyper0.lengthscale(d));
    const double g = central(log_ls, [&](double v) {
      KernelHyperparams h = hyper0;
      h.lengthscale(d) = std::exp(v);
      return eval_at(h, z0);
    });
    hyper.lengthscale(d) = std::exp(log_ls + cfg.learning_rate * g);
  }
  {
    const double log_sv = std::log(hyper0.signal_variance);
    const double g = central(log_sv, [&](double v) {
      KernelHyperparams h = hyper0;
      h.signal_variance = std::exp(v);
      return eval_at(h, z0);
    });
    hyper.signal_variance = std::exp(log_sv + cfg.learning_rate * g);
  }
  for (Eigen::Index r = 0; r < z.Z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.Z.cols(); ++c) {
      const double g = central(z0.Z(r, c), [&](double v) {
        InducingInputs zz = z0;
        zz.Z(r, c) = v;
        return eval_at(hyper0, zz);
      });
      z.Z(r, c) = z0.Z(r, c) + cfg.learning_rate * g;
    }
  }

  // backtracking on the joint proposal; keep the old point if nothing helps
  for (double scale : {1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0}) {
    KernelHyperparams trial = hyper0;
    for (Eigen::Index d = 0; d < trial.lengthscale.size(); ++d) {
      trial.lengthscale(d) = hyper0.lengthscale(d) *
                             std::pow(hyper.lengthscale(d) / hyper0.lengthscale(d), scale);
    }
    trial.signal_variance =
        hyper0.signal_variance * std::pow(hyper.signal_variance / hyper0.signal_variance, scale);
    InducingInputs trial_z{z0.Z + scale * (z.Z - z0.Z)};
    ModelState probe = state;
    probe.hyper = trial;
    probe.Z = trial_z;
    try {
      rebuild_cache(probe, x);
      if (elbo(probe, y, t) > obj0) {
        state = std::move(probe);
        return;
      }
    } catch (const std::exception&) {
      // unusable proposal (lost definiteness, duplicate rows); shrink further
    }
  }
}

std::string state_snapshot(const ModelState& state) {
  std::ostringstream os;
  os << "|mu|_max=" << state.vp.mu.cwiseAbs().maxCoeff()
     << " alpha_max=" << state.vp.alpha.maxCoeff() << " alpha_min=" << state.vp.alpha.minCoeff();
  return os.str();
}

}  // namespace

TrainMethod parse_train_method(const std::string& name) {
  if (name == "adam") return TrainMethod::kAdam;
  if (name == "coord_ascent") return TrainMethod::kCoordAscent;
  throw ConfigError("unknown training method: " + name);
}

std::string train_method_name(TrainMethod m) {
  return m == TrainMethod::kAdam ? "adam" : "coord_ascent";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train config: epochs must be nonnegative");
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning rate must be positive");
  if (!(rho > 0.0) || rho > 1.0) throw ConfigError("train config: rho must lie in (0, 1]");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train config: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train config: Adam epsilon must be positive");
  if (batch_size < 0) throw ConfigError("train config: batch size must be nonnegative");
  if (hyperopt_every < 0) throw ConfigError("train config: hyperopt_every must be nonnegative");
}

TrainTrace train_adam(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const Eigen::Ref<const Eigen::VectorXi>& y, const TrainConfig& cfg) {
  cfg.validate();
  if (state.cache_stale) rebuild_cache(state, x);
  const Eigen::Index n = y.size();
  const Eigen::Index c = state.n_classes;
  const Eigen::Index p = state.vp.inducing_count();

  // raw parameterization of the Cholesky factors: strict lower entries as
  // stored, diagonal through softplus
  std::vector<Eigen::MatrixXd> raw_l(static_cast<std::size_t>(c));
  for (Eigen::Index j = 0; j < c; ++j) {
    raw_l[static_cast<std::size_t>(j)] = state.vp.chol_sigma[static_cast<std::size_t>(j)];
    for (Eigen::Index d = 0; d < p; ++d) {
      raw_l[static_cast<std::size_t>(j)](d, d) =
          inv_softplus(state.vp.chol_sigma[static_cast<std::size_t>(j)](d, d));
    }
  }

  AdamMoments mom_mu(c, p);
  std::vector<AdamMoments> mom_l(static_cast<std::size_t>(c), AdamMoments(p, p));
  AdamMoments mom_alpha(n, 1);

  auto rng = make_rng(derive_seed(cfg.seed, 0xADA4));
  TrainTrace trace;
  trace.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto tic = std::chrono::steady_clock::now();
    if (cfg.hyperopt_every > 0 && epoch % cfg.hyperopt_every == 0) {
      refine_hyperparams(state, x, y, cfg);
    }

    const Eigen::VectorXi t = competitor_classes(state, y);
    const std::vector<int> batch = sample_batch(n, cfg.batch_size, rng);
    const bool full_batch = static_cast<Eigen::Index>(batch.size()) == n;

    if (!cfg.alpha_gradient_updates) {
      const Eigen::VectorXd q = alpha_closed_form(state, y, t);
      if (full_batch) {
        state.vp.alpha = q;
      } else {
        for (int i : batch) state.vp.alpha(i) = q(i);
      }
    } else {
      const Eigen::VectorXd ga = grad_alpha(state, y, t);
      Eigen::MatrixXd alpha_col = state.vp.alpha;
      Eigen::MatrixXd ga_col = ga;
      if (!full_batch) {
        Eigen::MatrixXd masked = Eigen::MatrixXd::Zero(n, 1);
        const double scale = static_cast<double>(n) / static_cast<double>(batch.size());
        for (int i : batch) masked(i, 0) = scale * ga(i);
        ga_col = masked;
      }
      mom_alpha.step(alpha_col, ga_col, epoch, cfg);
      state.vp.alpha = alpha_col.col(0).cwiseMax(kAlphaFloor);
    }

    const Eigen::MatrixXd g_mu =
        full_batch ? grad_mu(state, y, t) : grad_mu_batch(state, y, t, batch);
    const std::vector<Eigen::MatrixXd> g_l =
        full_batch ? grad_chol_sigma(state, y, t) : grad_chol_sigma_batch(state, y, t, batch);

    mom_mu.step(state.vp.mu, g_mu, epoch, cfg);
    for (Eigen::Index j = 0; j < c; ++j) {
      Eigen::MatrixXd g_raw = g_l[static_cast<std::size_t>(j)];
      for (Eigen::Index d = 0; d < p; ++d) {
        g_raw(d, d) *= sigmoid(raw_l[static_cast<std::size_t>(j)](d, d));
      }
      mom_l[static_cast<std::size_t>(j)].step(raw_l[static_cast<std::size_t>(j)], g_raw, epoch,
                                              cfg);
      Eigen::MatrixXd l = raw_l[static_cast<std::size_t>(j)]
                              .triangularView<Eigen::StrictlyLower>()
                              .toDenseMatrix();
      for (Eigen::Index d = 0; d < p; ++d) {
        l(d, d) = softplus(raw_l[static_cast<std::size_t>(j)](d, d));
      }
      state.vp.chol_sigma[static_cast<std::size_t>(j)] = l;
    }

    double obj = 0.0;
    try {
      obj = elbo(state, y, t);
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << "train_adam: aborted at epoch " << epoch << ": " << e.what() << " ("
         << state_snapshot(state) << ")";
      throw NumericError(os.str());
    }
    if (!std::isfinite(obj)) {
      std::ostringstream os;
      os << "train_adam: non-finite objective at epoch " << epoch << " (" << state_snapshot(state)
         << ")";
      throw NumericError(os.str());
    }
    trace.push_back({epoch, obj, seconds_since(tic)});
  }
  return trace;
}

NaturalParams natural_targets(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                              const Eigen::Ref<const Eigen::VectorXi>& t) {
  if (state.cache_stale) throw ConfigError("natural_targets: kernel cache is stale");
  const Eigen::Index n = y.size();
  const Eigen::Index c = state.n_classes;
  const Eigen::Index p = state.vp.inducing_count();
  const Eigen::MatrixXd& kappa = state.cache.kappa;
  const Eigen::MatrixXd kpp_inv = state.cache.solve_kpp(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd mean_at = kappa * state.vp.mu.transpose();

  NaturalParams targets;
  targets.eta1 = Eigen::MatrixXd::Zero(c, p);
  targets.eta2.assign(static_cast<std::size_t>(c), Eigen::MatrixXd());

  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i) = 1.0 / std::sqrt(std::max(state.vp.alpha(i), kAlphaFloor));
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const int tj = t(i) - 1;
    const int yj = y(i) - 1;
    const double coeff_t = -(s(i) * (1.0 - mean_at(i, yj)) + 1.0);
    const double coeff_y = s(i) * (1.0 + mean_at(i, tj)) + 1.0;
    targets.eta1.row(tj) += coeff_t * kappa.row(i);
    targets.eta1.row(yj) += coeff_y * kappa.row(i);
  }

  for (Eigen::Index j = 0; j < c; ++j) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (t(i) - 1 == j || y(i) - 1 == j) w(i) = 0.5 * s(i);
    }
    Eigen::MatrixXd e2 = -0.5 * kpp_inv - kappa.transpose() * w.asDiagonal() * kappa;
    e2 = 0.5 * (e2 + e2.transpose());
    targets.eta2[static_cast<std::size_t>(j)] = std::move(e2);
  }
  return targets;
}

NaturalGradients natural_gradients(const ModelState& state,
                                   const Eigen::Ref<const Eigen::VectorXi>& y,
                                   const Eigen::Ref<const Eigen::VectorXi>& t) {
  NaturalGradients ng;
  const Eigen::MatrixXd gm = grad_mu(state, y, t);
  ng.eta2 = grad_sigma(state, y, t);
  ng.eta1.resize(gm.rows(), gm.cols());
  for (Eigen::Index j = 0; j < gm.rows(); ++j) {
    ng.eta1.row(j) =
        gm.row(j) - 2.0 * (ng.eta2[static_cast<std::size_t>(j)] *
                           state.vp.mu.row(j).transpose())
                              .transpose();
  }
  return ng;
}

TrainTrace train_coord_ascent(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXi>& y,
                              const TrainConfig& cfg) {
  cfg.validate();
  if (state.cache_stale) rebuild_cache(state, x);

  NaturalParams np = to_natural(state.vp);
  TrainTrace trace;
  trace.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int iter = 1; iter <= cfg.epochs; ++iter) {
    const auto tic = std::chrono::steady_clock::now();
    if (cfg.hyperopt_every > 0 && iter % cfg.hyperopt_every == 0) {
      refine_hyperparams(state, x, y, cfg);
    }

    const Eigen::VectorXi t = competitor_classes(state, y);
    state.vp.alpha = alpha_closed_form(state, y, t);
    const NaturalParams targets = natural_targets(state, y, t);

    double rho = cfg.rho;
    bool stepped = false;
    for (int attempt = 0; attempt <= 10 && !stepped; ++attempt) {
      NaturalParams candidate;
      candidate.eta1 = (1.0 - rho) * np.eta1 + rho * targets.eta1;
      candidate.eta2.resize(np.eta2.size());
      for (std::size_t j = 0; j < np.eta2.size(); ++j) {
        candidate.eta2[j] = (1.0 - rho) * np.eta2[j] + rho * targets.eta2[j];
      }
      try {
        set_from_natural(state.vp, candidate);
        np = std::move(candidate);
        stepped = true;
      } catch (const NumericError&) {
        rho *= 0.5;
      }
    }
    if (!stepped) {
      std::ostringstream os;
      os << "train_coord_ascent: positive definiteness lost at iteration " << iter
         << " even after 10 step halvings";
      throw NumericError(os.str());
    }

    double obj = 0.0;
    try {
      obj = elbo(state, y, t);
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << "train_coord_ascent: aborted at iteration " << iter << ": " << e.what() << " ("
         << state_snapshot(state) << ")";
      throw NumericError(os.str());
    }
    if (!std::isfinite(obj)) {
      std::ostringstream os;
      os << "train_coord_ascent: non-finite objective at iteration " << iter << " ("
         << state_snapshot(state) << ")";
      throw NumericError(os.str());
    }
    trace.push_back({iter, obj, seconds_since(tic)});
  }
  return trace;
}

TrainTrace fit(ModelState& state, const Eigen::Ref<const Eigen::MatrixXd>& x,
               const Eigen::Ref<const Eigen::VectorXi>& y, const TrainConfig& cfg) {
  return cfg.method == TrainMethod::kAdam ? train_adam(state, x, y, cfg)
                                          : train_coord_ascent(state, x, y, cfg);
}

void write_trace_csv(const TrainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open trace file for writing: " + path);
  out << "epoch,elbo,seconds\n";
  for (const auto& rec : trace) {
    out << rec.epoch << ',' << format_double(rec.elbo) << ',' << format_double(rec.seconds)
        << '\n';
  }
}

}  // namespace bsvm
