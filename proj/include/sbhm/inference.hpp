#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sbhm/matern.hpp"
#include "sbhm/quadrature.hpp"
#include "sbhm/rng.hpp"
#include "sbhm/sparse.hpp"

namespace sbhm {

struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Hyperparameters of the latent field: Matern decay/variance of the
/// structured effect and the precision of the unstructured effect.
struct Hyperparams {
  double kappa = 1.0;
  double sigma2_m = 1.0;
  double tau_iid = 10.0;
};

struct LogGammaPrior {
  double a = 1.0;
  double b = 5e-5;
  /// log density of X where exp(X) ~ Gamma(a, b) (rate parameterization).
  double log_density(double x) const {
    return a * std::log(b) - std::lgamma(a) + a * x - b * std::exp(x);
  }
};

/// Hyperpriors on transformed scales plus the weak Gaussian intercept prior
/// standing in for a flat prior.
struct PriorSpec {
  LogGammaPrior log_tau_iid{1.0, 5e-5};     // on log(tau_iid)
  LogGammaPrior log_inv_sigma2{1.0, 5e-5};  // on log(1/sigma2_m)
  LogGammaPrior log_range{1.0, 1e-2};       // on log(sqrt(8*nu)/kappa), nu = 1
  double mu_precision = 1e-6;

  double log_density(const Hyperparams& t) const {
    return log_tau_iid.log_density(std::log(t.tau_iid)) +
           log_inv_sigma2.log_density(std::log(1.0 / t.sigma2_m)) +
           log_range.log_density(std::log(std::sqrt(8.0) / t.kappa));
  }
};

/// Joint latent configuration: logits eta, structured effect m, intercept mu.
/// The unstructured effect is implicit as eta - mu - m.
struct LatentState {
  Eigen::VectorXd eta;
  Eigen::VectorXd m;
  double mu = 0.0;

  static LatentState zeros(int n) {
    LatentState s;
    s.eta = Eigen::VectorXd::Zero(n);
    s.m = Eigen::VectorXd::Zero(n);
    s.mu = 0.0;
    return s;
  }
};

struct PosteriorP {
  std::vector<double> p_mean;
  std::vector<double> p_var;
};

struct FitDiagnostics {
  int newton_iters = 0;
  double grad_norm = 0.0;
  bool boundary_degenerate = false;
  std::string theta_provenance = "fixed";
  int nm_evals = 0;
  std::uint64_t marginal_seed = 0;
};

struct LaplaceFit {
  Hyperparams theta_hat;
  LatentState mode;
  std::vector<double> eta_mean;
  std::vector<double> eta_var;
  double log_marginal = 0.0;
  FitDiagnostics diagnostics;
};

struct NewtonResult {
  LatentState mode;
  int iters = 0;
  double grad_norm = 0.0;
  bool converged = false;
  std::vector<double> objective_trace;  // accepted objective values
};

/// Bernoulli observations tied to a latent Gaussian (eta, m, mu) joint at a
/// fixed hyperparameter configuration. The 2N+1 Hessian has a diagonal
/// eta-block, so Newton steps, the log-determinant and exact posterior
/// sampling all run on the (m, mu) Schur complement of dimension N+1.
class JointModel {
 public:
  JointModel(std::vector<std::uint8_t> o, const SparseSymMatrix& q, double log_det_q,
             const Hyperparams& theta, double mu_precision)
      : o_(std::move(o)),
        q_(q.eigen()),
        log_det_q_(log_det_q),
        theta_(theta),
        mu_precision_(mu_precision) {
    n_ = static_cast<int>(o_.size());
    if (q.n() != n_) throw InputError("JointModel: Q dimension disagrees with o");
  }

  /// Builds Q from the Matern-SPDE stencil (nu = 1) on an n1 x n2 lattice.
  static JointModel on_lattice(std::vector<std::uint8_t> o, int n1, int n2,
                               const Hyperparams& theta, double mu_precision = 1e-6) {
    if (static_cast<long long>(n1) * n2 != static_cast<long long>(o.size()))
      throw InputError("JointModel: o length disagrees with lattice dimensions");
    SparseSymMatrix q = build_precision(MaternParams(1, theta.kappa, theta.sigma2_m), n1, n2);
    CholFactor f(q);
    return JointModel(std::move(o), q, f.log_det(), theta, mu_precision);
  }

  int n() const { return n_; }
  const std::vector<std::uint8_t>& obs() const { return o_; }
  const Hyperparams& theta() const { return theta_; }
  double log_det_q() const { return log_det_q_; }
  double mu_precision() const { return mu_precision_; }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& q() const { return q_; }

  bool boundary_degenerate() const {
    long long s = 0;
    for (auto v : o_) s += v;
    return s == 0 || s == n_;
  }

  /// Full negative log joint density -log p(o, eta, m, mu | theta),
  /// normalizing constants included.
  double neg_log_joint(const LatentState& s) const {
    const double tau = theta_.tau_iid;
    double f = 0.0;
    for (int i = 0; i < n_; ++i) f += softplus(s.eta[i]) - (o_[i] ? s.eta[i] : 0.0);
    double rss = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double r = s.eta[i] - s.mu - s.m[i];
      rss += r * r;
    }
    f += 0.5 * tau * rss - 0.5 * n_ * std::log(tau) + 0.5 * n_ * kLog2Pi;
    f += 0.5 * s.m.dot(q_ * s.m) - 0.5 * log_det_q_ + 0.5 * n_ * kLog2Pi;
    f += 0.5 * mu_precision_ * s.mu * s.mu - 0.5 * std::log(mu_precision_) + 0.5 * kLog2Pi;
    return f;
  }

  /// Gradient of neg_log_joint, packed as [eta block, m block, mu].
  Eigen::VectorXd gradient(const LatentState& s) const {
    const double tau = theta_.tau_iid;
    Eigen::VectorXd g(2 * n_ + 1);
    Eigen::VectorXd qm = q_ * s.m;
    double rsum = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double r = s.eta[i] - s.mu - s.m[i];
      rsum += r;
      g[i] = sigmoid(s.eta[i]) - (o_[i] ? 1.0 : 0.0) + tau * r;
      g[n_ + i] = qm[i] - tau * r;
    }
    g[2 * n_] = -tau * rsum + mu_precision_ * s.mu;
    return g;
  }

  /// Assembles the full (2N+1)-dimensional Hessian; testing/diagnostics only
  /// (the solver itself works on the Schur complement).
  SparseSymMatrix full_hessian(const LatentState& s) const {
    const double tau = theta_.tau_iid;
    std::vector<SparseSymMatrix::Triplet> t;
    t.reserve(static_cast<std::size_t>(q_.nonZeros()) + 7 * n_ + 1);
    for (int i = 0; i < n_; ++i) {
      const double p = sigmoid(s.eta[i]);
      t.emplace_back(i, i, p * (1.0 - p) + tau);
      t.emplace_back(i, n_ + i, -tau);
      t.emplace_back(n_ + i, i, -tau);
      t.emplace_back(i, 2 * n_, -tau);
      t.emplace_back(2 * n_, i, -tau);
      t.emplace_back(n_ + i, 2 * n_, tau);
      t.emplace_back(2 * n_, n_ + i, tau);
    }
    for (int k = 0; k < q_.outerSize(); ++k)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(q_, k); it; ++it)
        t.emplace_back(n_ + static_cast<int>(it.row()), n_ + static_cast<int>(it.col()),
                       it.value() + (it.row() == it.col() ? tau : 0.0));
    t.emplace_back(2 * n_, 2 * n_, tau * n_ + mu_precision_);
    return SparseSymMatrix::from_triplets(2 * n_ + 1, t);
  }

 private:
  static constexpr double kLog2Pi = 1.8378770664093454836;

  int n_ = 0;
  std::vector<std::uint8_t> o_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> q_;
  double log_det_q_ = 0.0;
  Hyperparams theta_;
  double mu_precision_ = 0.0;
};

/// Newton solver on the joint posterior mode with a persistent Schur-
/// complement factorization (the sparsity pattern is analyzed once and then
/// reused across iterations and hyperparameter evaluations).
class NewtonSolver {
 public:
  NewtonSolver() = default;

  NewtonResult minimize(const JointModel& model, const LatentState& init, double tol = 1e-8,
                        int max_iter = 50) {
    const int n = model.n();
    const double tau = model.theta().tau_iid;
    LatentState x = init;
    NewtonResult res;
    double f = model.neg_log_joint(x);
    res.objective_trace.push_back(f);

    for (int iter = 0; iter < max_iter; ++iter) {
      Eigen::VectorXd g = model.gradient(x);
      res.grad_norm = g.lpNorm<Eigen::Infinity>();
      if (res.grad_norm <= tol) {
        res.converged = true;
        break;
      }
      factorize_schur(model, x);

      // Reduced right-hand side on (m, mu).
      Eigen::VectorXd rhs(n + 1);
      double gmu = g[2 * n];
      for (int i = 0; i < n; ++i) {
        rhs[i] = -(g[n + i] + tau * g[i] / d_[i]);
        gmu += tau * g[i] / d_[i];
      }
      rhs[n] = -gmu;
      Eigen::VectorXd dv = schur_.solve(rhs);
      const double dmu = dv[n];

      // Back-substituted eta step.
      Eigen::VectorXd deta(n);
      for (int i = 0; i < n; ++i) deta[i] = (-g[i] + tau * dv[i] + tau * dmu) / d_[i];

      // Damped step: halve until the objective decreases.
      double alpha = 1.0;
      bool accepted = false;
      for (int h = 0; h < 40; ++h) {
        LatentState trial;
        trial.eta = x.eta + alpha * deta;
        trial.m = x.m + alpha * dv.head(n);
        trial.mu = x.mu + alpha * dmu;
        const double ft = model.neg_log_joint(trial);
        if (ft < f) {
          x = std::move(trial);
          f = ft;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      res.iters = iter + 1;
      if (!accepted) break;  // stationary to rounding; the gradient check decides
      res.objective_trace.push_back(f);
    }
    {
      Eigen::VectorXd g = model.gradient(x);
      res.grad_norm = g.lpNorm<Eigen::Infinity>();
      res.converged = res.grad_norm <= tol;
    }
    res.mode = std::move(x);
    return res;
  }

  /// log det of the full joint Hessian at the given state.
  double log_det_hessian(const JointModel& model, const LatentState& at) {
    factorize_schur(model, at);
    double ld = schur_.vectorD().array().log().sum();
    for (int i = 0; i < model.n(); ++i) ld += std::log(d_[i]);
    return ld;
  }

  /// Per-coordinate sample variances of the eta block across n_samples
  /// exact draws from N(mode, H^{-1}) through the Hessian's Cholesky factor.
  std::vector<double> sample_eta_variances(const JointModel& model, const LatentState& mode,
                                           int n_samples, std::uint64_t seed) {
    const int n = model.n();
    const double tau = model.theta().tau_iid;
    factorize_schur(model, mode);
    Rng rng(seed);
    std::vector<double> mean(n, 0.0), m2(n, 0.0);
    Eigen::VectorXd zv(n + 1), dv(n + 1);
    for (int k = 0; k < n_samples; ++k) {
      for (int i = 0; i < n + 1; ++i) zv[i] = rng.normal();
      // (m, mu) deviation drawn from N(0, S^{-1})
      Eigen::VectorXd y = zv.array() / schur_.vectorD().array().sqrt();
      y = schur_.matrixU().solve(y);
      dv = schur_.permutationPinv() * y;
      const double dmu = dv[n];
      // eta | (m, mu): independent Gaussians with precision d_i
      for (int i = 0; i < n; ++i) {
        const double e = tau * (dv[i] + dmu) / d_[i] + rng.normal() / std::sqrt(d_[i]);
        const double delta = e - mean[i];
        mean[i] += delta / (k + 1);
        m2[i] += delta * (e - mean[i]);
      }
    }
    std::vector<double> var(n);
    for (int i = 0; i < n; ++i) var[i] = m2[i] / std::max(1, n_samples - 1);
    return var;
  }

 private:
  void factorize_schur(const JointModel& model, const LatentState& s) {
    const int n = model.n();
    const double tau = model.theta().tau_iid;
    const double delta = model.mu_precision();
    d_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double p = sigmoid(s.eta[i]);
      d_[i] = p * (1.0 - p) + tau;
    }
    std::vector<Eigen::Triplet<double>> t;
    const auto& q = model.q();
    t.reserve(static_cast<std::size_t>(q.nonZeros()) + 3 * n + 1);
    for (int k = 0; k < q.outerSize(); ++k)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(q, k); it; ++it)
        t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    double corner = tau * n + delta;
    for (int i = 0; i < n; ++i) {
      const double diag_adj = tau - tau * tau / d_[i];
      t.emplace_back(i, i, diag_adj);
      const double cross = tau - tau * tau / d_[i];
      t.emplace_back(i, n, cross);
      t.emplace_back(n, i, cross);
      corner -= tau * tau / d_[i];
    }
    t.emplace_back(n, n, corner);
    Eigen::SparseMatrix<double> s_mat(n + 1, n + 1);
    s_mat.setFromTriplets(t.begin(), t.end());
    if (!analyzed_) {
      schur_.analyzePattern(s_mat);
      analyzed_ = true;
    }
    schur_.factorize(s_mat);
    if (schur_.info() != Eigen::Success)
      throw FactorizationError("joint Hessian factorization failed", -1);
    for (int i = 0; i < schur_.vectorD().size(); ++i)
      if (!(schur_.vectorD()[i] > 0.0))
        throw FactorizationError("joint Hessian is not positive definite",
                                 schur_.permutationPinv().indices()[i]);
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> schur_;
  Eigen::VectorXd d_;
  bool analyzed_ = false;
};

/// Free-function surface used by tests and small callers; the fit paths
/// construct a model/solver pair once and reuse them.
inline double neg_log_joint(const std::vector<std::uint8_t>& o, int n1, int n2,
                            const LatentState& state, const Hyperparams& theta,
                            double mu_precision = 1e-6) {
  return JointModel::on_lattice(o, n1, n2, theta, mu_precision).neg_log_joint(state);
}

inline NewtonResult newton_map(const JointModel& model, const LatentState& init, double tol = 1e-8,
                               int max_iter = 50) {
  NewtonSolver solver;
  return solver.minimize(model, init, tol, max_iter);
}

/// Gaussian (Laplace) marginal summaries of the logits: the mode's eta block
/// as the mean, and per-coordinate variances estimated from exact joint
/// posterior samples.
inline void laplace_marginals(const JointModel& model, const LatentState& mode,
                              std::vector<double>& eta_mean, std::vector<double>& eta_var,
                              int n_samples = 200, std::uint64_t seed = 0) {
  NewtonSolver solver;
  eta_var = solver.sample_eta_variances(model, mode, n_samples, seed);
  eta_mean.assign(mode.eta.data(), mode.eta.data() + mode.eta.size());
}

/// E(p_i | o) and Var(p_i | o) by Gauss-Hermite integration of the logistic
/// transform over N(eta_mean_i, eta_var_i).
inline PosteriorP posterior_p_means(const std::vector<double>& eta_mean,
                                    const std::vector<double>& eta_var, int gh_order = 20) {
  const GaussHermite gh = gauss_hermite(gh_order);
  const std::size_t n = eta_mean.size();
  if (eta_var.size() != n) throw InputError("posterior_p_means: dimension mismatch");
  PosteriorP out;
  out.p_mean.resize(n);
  out.p_var.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(eta_var[i] >= 0.0)) throw InputError("posterior_p_means: negative variance");
    const double scale = std::sqrt(2.0 * eta_var[i]);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
      const double p = sigmoid(eta_mean[i] + scale * gh.nodes[k]);
      m1 += gh.weights[k] * p;
      m2 += gh.weights[k] * p * p;
    }
    out.p_mean[i] = m1;
    out.p_var[i] = std::max(0.0, m2 - m1 * m1);
  }
  return out;
}

struct LogMarginalResult {
  double value = 0.0;
  LatentState mode;
  int newton_iters = 0;
  double grad_norm = 0.0;
};

/// Laplace-approximated log p(o | theta) plus the log hyperprior density:
/// -neg_log_joint(mode) + (2N+1)/2 log 2pi - 1/2 log det H(mode) + log prior.
/// Newton runs are warm-started from the previous mode, and the sparse
/// factorization patterns (Q and the Schur complement) are analyzed once.
class LaplaceEngine {
 public:
  LaplaceEngine(std::vector<std::uint8_t> o, int n1, int n2, PriorSpec priors)
      : o_(std::move(o)), n1_(n1), n2_(n2), priors_(priors) {
    if (static_cast<long long>(n1_) * n2_ != static_cast<long long>(o_.size()))
      throw InputError("LaplaceEngine: o length disagrees with lattice dimensions");
    warm_ = LatentState::zeros(static_cast<int>(o_.size()));
  }

  JointModel make_model(const Hyperparams& theta) {
    SparseSymMatrix q = build_precision(MaternParams(1, theta.kappa, theta.sigma2_m), n1_, n2_);
    Eigen::SparseMatrix<double> qc(q.eigen());
    if (!q_analyzed_) {
      ldlt_q_.analyzePattern(qc);
      q_analyzed_ = true;
    }
    ldlt_q_.factorize(qc);
    if (ldlt_q_.info() != Eigen::Success)
      throw FactorizationError("precision factorization failed", -1);
    const double log_det_q = ldlt_q_.vectorD().array().log().sum();
    return JointModel(o_, q, log_det_q, theta, priors_.mu_precision);
  }

  LogMarginalResult log_marginal(const Hyperparams& theta, double newton_tol = 1e-8,
                                 int newton_max_iter = 50) {
    JointModel model = make_model(theta);
    NewtonResult nr = solver_.minimize(model, warm_, newton_tol, newton_max_iter);
    if (!nr.converged)
      throw ConvergenceError("Newton did not converge (final gradient norm " +
                             std::to_string(nr.grad_norm) + ")");
    warm_ = nr.mode;

    const int n = model.n();
    const double log_det_h = solver_.log_det_hessian(model, nr.mode);
    LogMarginalResult res;
    res.value = -model.neg_log_joint(nr.mode) + 0.5 * (2 * n + 1) * kLog2Pi - 0.5 * log_det_h +
                priors_.log_density(theta);
    res.mode = nr.mode;
    res.newton_iters = nr.iters;
    res.grad_norm = nr.grad_norm;
    return res;
  }

  NewtonSolver& solver() { return solver_; }
  const PriorSpec& priors() const { return priors_; }
  const std::vector<std::uint8_t>& obs() const { return o_; }
  int n1() const { return n1_; }
  int n2() const { return n2_; }

 private:
  static constexpr double kLog2Pi = 1.8378770664093454836;
  std::vector<std::uint8_t> o_;
  int n1_, n2_;
  PriorSpec priors_;
  NewtonSolver solver_;
  LatentState warm_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_q_;
  bool q_analyzed_ = false;
};

inline double log_marginal(const std::vector<std::uint8_t>& o, int n1, int n2,
                           const Hyperparams& theta, const PriorSpec& priors = {}) {
  LaplaceEngine engine(o, n1, n2, priors);
  return engine.log_marginal(theta).value;
}

struct SearchBox {
  double kappa_min = 0.02, kappa_max = 5.0;
  double sigma2_min = 1e-3, sigma2_max = 1e3;
  double tau_min = 0.05, tau_max = 1e5;
};

struct FitOptions {
  SearchBox box;
  int max_evals = 100;
  double simplex_tol = 1e-3;
  double simplex_step = 0.5;
  int marginal_samples = 200;
  int gh_order = 20;
  std::uint64_t marginal_seed = 0;
  double newton_tol = 1e-8;
  int newton_max_iter = 50;
  bool has_start = false;
  Hyperparams start;  // otherwise: range = n1/4, sigma2 = 1, tau = 10
};

namespace detail {

inline Hyperparams clamp_theta(const Hyperparams& t, const SearchBox& box, double& penalty) {
  penalty = 0.0;
  auto clamp1 = [&](double v, double lo, double hi) {
    const double c = std::min(hi, std::max(lo, v));
    const double excess = std::log(v) - std::log(c);
    penalty += 10.0 * excess * excess;
    return c;
  };
  Hyperparams out;
  out.kappa = clamp1(t.kappa, box.kappa_min, box.kappa_max);
  out.sigma2_m = clamp1(t.sigma2_m, box.sigma2_min, box.sigma2_max);
  out.tau_iid = clamp1(t.tau_iid, box.tau_min, box.tau_max);
  return out;
}

inline LaplaceFit finish_fit(LaplaceEngine& engine, const Hyperparams& theta,
                             const LogMarginalResult& lm, const FitOptions& opts,
                             const std::string& provenance, int nm_evals) {
  LaplaceFit fit;
  fit.theta_hat = theta;
  fit.mode = lm.mode;
  fit.log_marginal = lm.value;
  JointModel model = engine.make_model(theta);
  fit.eta_var = engine.solver().sample_eta_variances(model, lm.mode, opts.marginal_samples,
                                                     opts.marginal_seed);
  fit.eta_mean.assign(lm.mode.eta.data(), lm.mode.eta.data() + lm.mode.eta.size());
  fit.diagnostics.newton_iters = lm.newton_iters;
  fit.diagnostics.grad_norm = lm.grad_norm;
  fit.diagnostics.boundary_degenerate = model.boundary_degenerate();
  fit.diagnostics.theta_provenance = provenance;
  fit.diagnostics.nm_evals = nm_evals;
  fit.diagnostics.marginal_seed = opts.marginal_seed;
  return fit;
}

}  // namespace detail

/// Fit at a caller-supplied theta (no hyperparameter search).
inline LaplaceFit fit_fixed_theta(const std::vector<std::uint8_t>& o, int n1, int n2,
                                  const Hyperparams& theta, const PriorSpec& priors = {},
                                  const FitOptions& opts = {}) {
  LaplaceEngine engine(o, n1, n2, priors);
  LogMarginalResult lm = engine.log_marginal(theta, opts.newton_tol, opts.newton_max_iter);
  return detail::finish_fit(engine, theta, lm, opts, "fixed", 0);
}

/// Empirical-Bayes fit: Nelder-Mead over (log kappa, log sigma2_m,
/// log tau_iid) maximizing the Laplace log marginal plus hyperpriors.
inline LaplaceFit fit_empirical_bayes(const std::vector<std::uint8_t>& o, int n1, int n2,
                                      const PriorSpec& priors = {}, const FitOptions& opts = {}) {
  LaplaceEngine engine(o, n1, n2, priors);

  Hyperparams start = opts.start;
  if (!opts.has_start) {
    const double range0 = n1 / 4.0;
    start.kappa = std::sqrt(8.0) / range0;
    start.sigma2_m = 1.0;
    start.tau_iid = 10.0;
  }

  int evals = 0;
  auto objective = [&](const Eigen::Vector3d& u) {
    Hyperparams t{std::exp(u[0]), std::exp(u[1]), std::exp(u[2])};
    double penalty = 0.0;
    t = detail::clamp_theta(t, opts.box, penalty);
    ++evals;
    return -engine.log_marginal(t, opts.newton_tol, opts.newton_max_iter).value + penalty;
  };

  std::array<Eigen::Vector3d, 4> xs;
  std::array<double, 4> fs;
  xs[0] = Eigen::Vector3d(std::log(start.kappa), std::log(start.sigma2_m), std::log(start.tau_iid));
  for (int i = 1; i < 4; ++i) {
    xs[i] = xs[0];
    xs[i][i - 1] += opts.simplex_step;
  }
  for (int i = 0; i < 4; ++i) fs[i] = objective(xs[i]);

  auto order = [&]() {
    std::array<int, 4> idx{0, 1, 2, 3};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    const auto xs_old = xs;
    const auto fs_old = fs;
    for (int i = 0; i < 4; ++i) {
      xs[i] = xs_old[idx[i]];
      fs[i] = fs_old[idx[i]];
    }
  };
  order();

  while (evals < opts.max_evals && fs[3] - fs[0] > opts.simplex_tol) {
    const Eigen::Vector3d centroid = (xs[0] + xs[1] + xs[2]) / 3.0;
    const Eigen::Vector3d xr = centroid + (centroid - xs[3]);
    const double fr = objective(xr);
    if (fr < fs[0]) {
      if (evals < opts.max_evals) {
        const Eigen::Vector3d xe = centroid + 2.0 * (centroid - xs[3]);
        const double fe = objective(xe);
        if (fe < fr) {
          xs[3] = xe;
          fs[3] = fe;
        } else {
          xs[3] = xr;
          fs[3] = fr;
        }
      } else {
        xs[3] = xr;
        fs[3] = fr;
      }
    } else if (fr < fs[2]) {
      xs[3] = xr;
      fs[3] = fr;
    } else if (evals < opts.max_evals) {
      const Eigen::Vector3d xc = centroid + 0.5 * (xs[3] - centroid);
      const double fc = objective(xc);
      if (fc < fs[3]) {
        xs[3] = xc;
        fs[3] = fc;
      } else {
        for (int i = 1; i < 4 && evals < opts.max_evals; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = objective(xs[i]);
        }
      }
    }
    order();
  }

  double penalty = 0.0;
  const Hyperparams best = detail::clamp_theta(
      Hyperparams{std::exp(xs[0][0]), std::exp(xs[0][1]), std::exp(xs[0][2])}, opts.box, penalty);
  LogMarginalResult lm = engine.log_marginal(best, opts.newton_tol, opts.newton_max_iter);
  return detail::finish_fit(engine, best, lm, opts, "fitted", evals);
}

}  // namespace sbhm
