#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sbhm/inference.hpp"

namespace sbhm {

struct McmcDiagnostics {
  double accept_eta = 0.0;
  double accept_m = 0.0;
  double accept_mu = 0.0;
  double scale_eta = 0.0;
  double scale_m = 0.0;
  double scale_mu = 0.0;
};

/// Independent validator of the Laplace path: single-site Metropolis-within-
/// Gibbs over (eta, m, mu) with Gaussian random-walk proposals whose scales
/// are tuned to a 30-50% acceptance rate during burn-in. Small lattices only.
inline PosteriorP mcmc_oracle(const std::vector<std::uint8_t>& o, int n1, int n2,
                              const Hyperparams& theta, long long n_iter, long long burn_in,
                              std::uint64_t seed, double mu_precision = 1e-6,
                              McmcDiagnostics* diag_out = nullptr) {
  const int n = n1 * n2;
  if (n > 400) throw InputError("mcmc_oracle: lattice too large (N <= 400)");
  if (static_cast<int>(o.size()) != n) throw InputError("mcmc_oracle: dimension mismatch");
  if (burn_in >= n_iter) throw InputError("mcmc_oracle: burn_in must be < n_iter");

  const SparseSymMatrix q =
      build_precision(MaternParams(1, theta.kappa, theta.sigma2_m), n1, n2);
  const auto& qm = q.eigen();
  const double tau = theta.tau_iid;

  Rng rng(seed);
  std::vector<double> eta(n, 0.0), m(n, 0.0);
  double mu = 0.0;
  double sum_eta_minus_m = 0.0;  // running sum of (eta_i - m_i) for the mu update

  double s_eta = 1.0, s_m = 1.0, s_mu = 0.5;
  long long acc_eta = 0, acc_m = 0, acc_mu = 0;
  long long win_eta = 0, win_m = 0, win_mu = 0;
  const long long tune_window = 500;

  std::vector<double> p_sum(n, 0.0), p_sq(n, 0.0);
  long long kept = 0;

  auto q_row_dot = [&](int i, const std::vector<double>& v) {
    double acc = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(qm, i); it; ++it)
      acc += it.value() * v[it.col()];
    return acc;
  };
  std::vector<double> qdiag(n);
  for (int i = 0; i < n; ++i) qdiag[i] = qm.coeff(i, i);

  for (long long sweep = 0; sweep < n_iter; ++sweep) {
    // eta updates: Bernoulli likelihood + iid Gaussian tie to mu + m
    for (int i = 0; i < n; ++i) {
      const double cur = eta[i];
      const double prop = cur + s_eta * rng.normal();
      const double mean_i = mu + m[i];
      const double d_cur = softplus(cur) - (o[i] ? cur : 0.0) + 0.5 * tau * (cur - mean_i) * (cur - mean_i);
      const double d_prop =
          softplus(prop) - (o[i] ? prop : 0.0) + 0.5 * tau * (prop - mean_i) * (prop - mean_i);
      if (std::log(rng.uniform()) < d_cur - d_prop) {
        sum_eta_minus_m += prop - cur;
        eta[i] = prop;
        ++acc_eta;
      }
      ++win_eta;
    }
    // m updates: GMRF prior + iid Gaussian tie
    for (int i = 0; i < n; ++i) {
      const double cur = m[i];
      const double prop = cur + s_m * rng.normal();
      const double qii = qdiag[i];
      const double cross = q_row_dot(i, m) - qii * cur;  // sum_{j != i} Q_ij m_j
      const double r = eta[i] - mu;
      const double d_cur = 0.5 * qii * cur * cur + cur * cross + 0.5 * tau * (r - cur) * (r - cur);
      const double d_prop =
          0.5 * qii * prop * prop + prop * cross + 0.5 * tau * (r - prop) * (r - prop);
      if (std::log(rng.uniform()) < d_cur - d_prop) {
        sum_eta_minus_m -= prop - cur;
        m[i] = prop;
        ++acc_m;
      }
      ++win_m;
    }
    // mu update
    {
      const double cur = mu;
      const double prop = cur + s_mu * rng.normal();
      auto neg_log = [&](double v) {
        return 0.5 * tau * (n * v * v - 2.0 * v * sum_eta_minus_m) + 0.5 * mu_precision * v * v;
      };
      if (std::log(rng.uniform()) < neg_log(cur) - neg_log(prop)) {
        mu = prop;
        ++acc_mu;
      }
      ++win_mu;
    }

    // burn-in adaptation toward 40% acceptance
    if (sweep < burn_in && (sweep + 1) % tune_window == 0) {
      auto retune = [](double& s, long long acc, long long tries) {
        const double rate = static_cast<double>(acc) / static_cast<double>(tries);
        s *= std::exp(rate - 0.4);
        s = std::min(10.0, std::max(1e-3, s));
      };
      retune(s_eta, acc_eta, win_eta);
      retune(s_m, acc_m, win_m);
      retune(s_mu, acc_mu, win_mu);
      acc_eta = acc_m = acc_mu = 0;
      win_eta = win_m = win_mu = 0;
    }

    if (sweep >= burn_in) {
      for (int i = 0; i < n; ++i) {
        const double p = sigmoid(eta[i]);
        p_sum[i] += p;
        p_sq[i] += p * p;
      }
      ++kept;
    }
  }

  if (diag_out) {
    diag_out->accept_eta = win_eta ? static_cast<double>(acc_eta) / win_eta : 0.0;
    diag_out->accept_m = win_m ? static_cast<double>(acc_m) / win_m : 0.0;
    diag_out->accept_mu = win_mu ? static_cast<double>(acc_mu) / win_mu : 0.0;
    diag_out->scale_eta = s_eta;
    diag_out->scale_m = s_m;
    diag_out->scale_mu = s_mu;
  }

  PosteriorP post;
  post.p_mean.resize(n);
  post.p_var.resize(n);
  for (int i = 0; i < n; ++i) {
    const double mean = p_sum[i] / kept;
    post.p_mean[i] = mean;
    post.p_var[i] = std::max(0.0, p_sq[i] / kept - mean * mean);
  }
  return post;
}

}  // namespace sbhm
