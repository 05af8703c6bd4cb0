#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sbhm/sparse.hpp"

namespace sbhm {

namespace detail {

// Integrand of K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, evaluated
// as a sum of two exponentials so large nu*t cannot overflow the cosh.
inline double bessel_k_integrand(double x, int nu, double t) {
  const double e = -x * std::cosh(t);
  const double a = e + nu * t;
  const double b = e - nu * t;
  double s = 0.0;
  if (a > -745.0) s += std::exp(a);
  if (b > -745.0) s += std::exp(b);
  return 0.5 * s;
}

// Trapezoidal evaluation of the cosh integral at step h. The integrand is
// even in t and decays double-exponentially, so the trapezoid rule
// converges spectrally in h.
inline double bessel_k_trapezoid(double x, int nu, double h) {
  double sum = 0.5 * bessel_k_integrand(x, nu, 0.0);
  for (int k = 1;; ++k) {
    const double f = bessel_k_integrand(x, nu, k * h);
    sum += f;
    if (f < sum * 1e-18 && k * h > 1.0) break;
    if (k > 100000) break;
  }
  return h * sum;
}

}  // namespace detail

/// Modified Bessel function of the second kind, integer order nu >= 0,
/// x > 0. K_0 and K_1 come from an exponentially convergent quadrature of
/// the cosh integral; higher orders by the upward recurrence
/// K_{n+1}(x) = K_{n-1}(x) + (2n/x) K_n(x), which is stable for K.
inline double bessel_k(int nu, double x) {
  if (!(x > 0.0)) throw InputError("bessel_k: x must be > 0");
  if (nu < 0) nu = -nu;  // K_{-nu} = K_nu
  auto base = [&](int order) {
    double h = 0.25;
    double prev = detail::bessel_k_trapezoid(x, order, h);
    for (int r = 0; r < 6; ++r) {
      h *= 0.5;
      const double cur = detail::bessel_k_trapezoid(x, order, h);
      if (std::fabs(cur - prev) <= 1e-14 * std::fabs(cur)) return cur;
      prev = cur;
    }
    return prev;
  };
  if (nu == 0) return base(0);
  if (nu == 1) return base(1);
  double km = base(0), k = base(1);
  for (int n = 1; n < nu; ++n) {
    const double kp = km + (2.0 * n / x) * k;
    km = k;
    k = kp;
  }
  return k;
}

/// Matern field parameters; nu is fixed to 1 by the precision builder.
struct MaternParams {
  int nu = 1;
  double kappa = 1.0;
  double sigma2 = 1.0;

  MaternParams() = default;
  MaternParams(int nu_, double kappa_, double sigma2_) : nu(nu_), kappa(kappa_), sigma2(sigma2_) {
    if (nu < 1) throw InputError("MaternParams: nu must be a positive integer");
    if (!(kappa > 0.0)) throw InputError("MaternParams: kappa must be > 0");
    if (!(sigma2 > 0.0)) throw InputError("MaternParams: sigma2 must be > 0");
  }

  /// Distance at which the correlation has dropped to about 0.14.
  double range() const { return std::sqrt(8.0 * nu) / kappa; }
};

/// Matern covariance sigma^2/(Gamma(nu) 2^{nu-1}) (kappa h)^nu K_nu(kappa h),
/// with the continuous limit sigma^2 at h = 0.
inline double matern_covariance(const MaternParams& p, double h) {
  if (!(h >= 0.0)) throw InputError("matern_covariance: h must be >= 0");
  if (h == 0.0) return p.sigma2;
  const double u = p.kappa * h;
  const double norm = p.sigma2 / (std::tgamma(static_cast<double>(p.nu)) * std::pow(2.0, p.nu - 1));
  return norm * std::pow(u, p.nu) * bessel_k(p.nu, u);
}

/// Matern-SPDE precision on a regular n1 x n2 unit lattice for nu = 1
/// (alpha = 2). The interior 13-point stencil is the self-convolution of
/// the alpha = 1 stencil {kappa^2 + 4, four times -1}; entries falling
/// outside the lattice are dropped. The whole matrix is scaled by
/// tau^2 = 1/(4 pi kappa^2 sigma2) so that interior marginal variances
/// approach sigma2.
inline SparseSymMatrix build_precision(const MaternParams& p, int n1, int n2) {
  if (p.nu != 1) throw InputError("build_precision: only nu = 1 is supported");
  if (n1 < 5 || n2 < 5) throw InputError("build_precision: lattice must be at least 5x5");
  const double a = p.kappa * p.kappa + 4.0;
  const double tau2 = 1.0 / (4.0 * M_PI * p.kappa * p.kappa * p.sigma2);

  struct Off {
    int di, dj;
    double w;
  };
  const Off stencil[] = {
      {0, 0, a * a + 4.0},
      {-1, 0, -2.0 * a}, {1, 0, -2.0 * a}, {0, -1, -2.0 * a}, {0, 1, -2.0 * a},
      {-1, -1, 2.0}, {-1, 1, 2.0}, {1, -1, 2.0}, {1, 1, 2.0},
      {-2, 0, 1.0}, {2, 0, 1.0}, {0, -2, 1.0}, {0, 2, 1.0},
  };

  const int n = n1 * n2;
  std::vector<SparseSymMatrix::Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * 13);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const int row = i * n2 + j;
      for (const auto& o : stencil) {
        const int ii = i + o.di, jj = j + o.dj;
        if (ii < 0 || ii >= n1 || jj < 0 || jj >= n2) continue;
        triplets.emplace_back(row, ii * n2 + jj, tau2 * o.w);
      }
    }
  }
  return SparseSymMatrix::from_triplets(n, triplets);
}

}  // namespace sbhm
