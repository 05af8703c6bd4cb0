#pragma once

// Test-only oracles, deliberately independent of the library's linear
// algebra path: a dense Gaussian-elimination solver/inverter and a brute
// trapezoid integrator for logistic-normal expectations.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

class DenseMatrix {
 public:
  DenseMatrix(int n, int m, double fill = 0.0) : n_(n), m_(m), a_(static_cast<std::size_t>(n) * m, fill) {}

  double& at(int i, int j) { return a_[static_cast<std::size_t>(i) * m_ + j]; }
  double at(int i, int j) const { return a_[static_cast<std::size_t>(i) * m_ + j]; }
  int rows() const { return n_; }
  int cols() const { return m_; }

 private:
  int n_, m_;
  std::vector<double> a_;
};

// Gaussian elimination with partial pivoting.
inline std::vector<double> dense_solve(DenseMatrix a, std::vector<double> b) {
  const int n = a.rows();
  if (a.cols() != n || static_cast<int>(b.size()) != n)
    throw std::runtime_error("dense_solve: dimension mismatch");
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::fabs(a.at(i, k)) > std::fabs(a.at(piv, k))) piv = i;
    if (a.at(piv, k) == 0.0) throw std::runtime_error("dense_solve: singular matrix");
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a.at(k, j), a.at(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (int i = k + 1; i < n; ++i) {
      const double f = a.at(i, k) / a.at(k, k);
      if (f == 0.0) continue;
      for (int j = k; j < n; ++j) a.at(i, j) -= f * a.at(k, j);
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (int i = n - 1; i >= 0; --i) {
    double acc = b[i];
    for (int j = i + 1; j < n; ++j) acc -= a.at(i, j) * x[j];
    x[i] = acc / a.at(i, i);
  }
  return x;
}

inline DenseMatrix dense_inverse(const DenseMatrix& a) {
  const int n = a.rows();
  DenseMatrix inv(n, n);
  for (int c = 0; c < n; ++c) {
    std::vector<double> e(n, 0.0);
    e[c] = 1.0;
    const std::vector<double> col = dense_solve(a, e);
    for (int i = 0; i < n; ++i) inv.at(i, c) = col[i];
  }
  return inv;
}

// E[f(X)] for X ~ N(mean, var) by brute trapezoid over +-12 standard
// deviations.
template <typename F>
inline double gaussian_expect_trapezoid(F f, double mean, double var, long long points = 1000001) {
  if (var == 0.0) return f(mean);
  const double sd = std::sqrt(var);
  const double lo = mean - 12.0 * sd, hi = mean + 12.0 * sd;
  const double h = (hi - lo) / static_cast<double>(points - 1);
  const double inv_norm = 1.0 / (sd * std::sqrt(2.0 * M_PI));
  double acc = 0.0;
  for (long long k = 0; k < points; ++k) {
    const double x = lo + h * static_cast<double>(k);
    const double w = (k == 0 || k == points - 1) ? 0.5 : 1.0;
    const double z = (x - mean) / sd;
    acc += w * f(x) * std::exp(-0.5 * z * z);
  }
  return acc * h * inv_norm;
}

}  // namespace oracle
