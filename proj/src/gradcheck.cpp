#include "bsvm/gradcheck.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "bsvm/errors.hpp"
#include "bsvm/rng.hpp"

namespace bsvm {

namespace {

double rel_error(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1.0});
}

void track(GradCheckBlock& block, double analytic, double fd, const std::string& coord) {
  const double err = rel_error(analytic, fd);
  if (err > block.max_rel_error) {
    block.max_rel_error = err;
    block.worst_coordinate = coord;
  }
}

}  // namespace

RandomInstance make_random_instance(Eigen::Index n, int classes, Eigen::Index inducing,
                                    Eigen::Index dims, std::uint64_t seed) {
  if (classes < 2) throw ConfigError("make_random_instance: need at least two classes");
  auto rng = make_rng(derive_seed(seed, 0x1257A27));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  RandomInstance inst;
  inst.x.resize(n, dims);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < dims; ++c) inst.x(r, c) = gauss(rng);
  }
  inst.y.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    inst.y(r) = 1 + static_cast<int>(unif(rng) * classes) % classes;
  }

  inst.state = init_model(inst.x, classes, inducing, seed);
  const Eigen::Index p = inst.state.vp.inducing_count();
  for (int j = 0; j < classes; ++j) {
    for (Eigen::Index c = 0; c < p; ++c) inst.state.vp.mu(j, c) = 0.7 * gauss(rng);
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index r = 0; r < p; ++r) {
      for (Eigen::Index c = 0; c < r; ++c) l(r, c) = 0.15 * gauss(rng);
      l(r, r) = 0.5 + unif(rng);
    }
    inst.state.vp.chol_sigma[static_cast<std::size_t>(j)] = l;
  }
  for (Eigen::Index r = 0; r < n; ++r) inst.state.vp.alpha(r) = 0.5 + 2.0 * unif(rng);
  return inst;
}

double GradCheckReport::max_rel_error() const {
  return std::max({mu.max_rel_error, chol.max_rel_error, alpha.max_rel_error});
}

GradCheckReport gradient_check(const ModelState& state, const Eigen::Ref<const Eigen::VectorXi>& y,
                               const Eigen::Ref<const Eigen::VectorXi>& t,
                               double perturb_analytic) {
  GradCheckReport report;
  ModelState work = state;

  auto fd_elbo = [&](double& slot, double step) {
    const double saved = slot;
    slot = saved + step;
    const double up = elbo(work, y, t);
    slot = saved - step;
    const double down = elbo(work, y, t);
    slot = saved;
    return (up - down) / (2.0 * step);
  };

  const Eigen::MatrixXd g_mu = grad_mu(state, y, t);
  for (Eigen::Index j = 0; j < g_mu.rows(); ++j) {
    for (Eigen::Index p = 0; p < g_mu.cols(); ++p) {
      const double step = 1e-6 * (1.0 + std::abs(work.vp.mu(j, p)));
      const double fd = fd_elbo(work.vp.mu(j, p), step);
      std::ostringstream coord;
      coord << "mu[" << j << "," << p << "]";
      track(report.mu, g_mu(j, p) + perturb_analytic, fd, coord.str());
    }
  }

  const auto g_chol = grad_chol_sigma(state, y, t);
  for (std::size_t j = 0; j < g_chol.size(); ++j) {
    auto& l = work.vp.chol_sigma[j];
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      for (Eigen::Index c = 0; c <= r; ++c) {
        const double step = 1e-6 * (1.0 + std::abs(l(r, c)));
        const double fd = fd_elbo(l(r, c), step);
        std::ostringstream coord;
        coord << "L[" << j << "][" << r << "," << c << "]";
        track(report.chol, g_chol[j](r, c) + perturb_analytic, fd, coord.str());
      }
    }
  }

  const Eigen::VectorXd g_alpha = grad_alpha(state, y, t);
  for (Eigen::Index i = 0; i < g_alpha.size(); ++i) {
    const double step = 1e-6 * (1.0 + std::abs(work.vp.alpha(i)));
    const double fd = fd_elbo(work.vp.alpha(i), step);
    std::ostringstream coord;
    coord << "alpha[" << i << "]";
    track(report.alpha, g_alpha(i) + perturb_analytic, fd, coord.str());
  }

  return report;
}

}  // namespace bsvm
