#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbhm/image.hpp"
#include "sbhm/rng.hpp"

namespace sbhm {

struct FactorizationError : std::runtime_error {
  int failing_index;
  FactorizationError(const std::string& msg, int idx)
      : std::runtime_error(msg), failing_index(idx) {}
};

/// Symmetric sparse matrix in compressed-row layout (both triangles stored,
/// indices sorted within each row, no explicit zeros). Backed by Eigen.
class SparseSymMatrix {
 public:
  using Triplet = Eigen::Triplet<double>;

  SparseSymMatrix() = default;

  static SparseSymMatrix from_triplets(int n, const std::vector<Triplet>& triplets) {
    SparseSymMatrix m;
    m.mat_.resize(n, n);
    m.mat_.setFromTriplets(triplets.begin(), triplets.end());
    m.mat_.prune(0.0);
    m.mat_.makeCompressed();
    return m;
  }

  static SparseSymMatrix identity(int n, double value = 1.0) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (int i = 0; i < n; ++i) t.emplace_back(i, i, value);
    return from_triplets(n, t);
  }

  int n() const { return static_cast<int>(mat_.rows()); }
  long long nnz() const { return mat_.nonZeros(); }

  const int* row_offsets() const { return mat_.outerIndexPtr(); }
  const int* col_indices() const { return mat_.innerIndexPtr(); }
  const double* values() const { return mat_.valuePtr(); }

  double coeff(int i, int j) const { return mat_.coeff(i, j); }

  bool is_symmetric() const {
    Eigen::SparseMatrix<double, Eigen::RowMajor> d = mat_ - Eigen::SparseMatrix<double, Eigen::RowMajor>(mat_.transpose());
    return d.coeffs().size() == 0 || d.coeffs().cwiseAbs().maxCoeff() == 0.0;
  }

  std::vector<double> matvec(const std::vector<double>& x) const {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), mat_.cols());
    Eigen::VectorXd y = mat_ * xv;
    return {y.data(), y.data() + y.size()};
  }

  const Eigen::SparseMatrix<double, Eigen::RowMajor>& eigen() const { return mat_; }

  /// Coordinate-text serialization ("# n nnz" header, then "i j value"
  /// lines); diagnostics only.
  void save_coord(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "# " << n() << " " << nnz() << "\n";
    char buf[40];
    for (int i = 0; i < n(); ++i) {
      for (int p = row_offsets()[i]; p < row_offsets()[i + 1]; ++p) {
        std::snprintf(buf, sizeof buf, "%.17g", values()[p]);
        out << i << " " << col_indices()[p] << " " << buf << "\n";
      }
    }
  }

  static SparseSymMatrix load_coord(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    char hash;
    int n;
    long long nnz;
    if (!(in >> hash >> n >> nnz) || hash != '#')
      throw InputError("coordinate file: malformed header");
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(nnz));
    int i, j;
    double v;
    while (in >> i >> j >> v) t.emplace_back(i, j, v);
    if (static_cast<long long>(t.size()) != nnz)
      throw InputError("coordinate file: entry count disagrees with header");
    return from_triplets(n, t);
  }

 private:
  Eigen::SparseMatrix<double, Eigen::RowMajor> mat_;
};

/// Sparse Cholesky factorization pi Q pi^T = L D L^T with a fill-reducing
/// (AMD) ordering; exposes the log-determinant and permuted triangular
/// solves for solving and exact Gaussian sampling.
class CholFactor {
 public:
  explicit CholFactor(const SparseSymMatrix& q) : n_(q.n()) {
    Eigen::SparseMatrix<double> qc(q.eigen());
    ldlt_.compute(qc);
    const Eigen::VectorXd& d = ldlt_.vectorD();
    for (int i = 0; i < d.size(); ++i) {
      if (!(d[i] > 0.0) || !std::isfinite(d[i])) {
        const int original = ldlt_.permutationPinv().indices()[i];
        throw FactorizationError(
            "matrix is not positive definite (pivot " + std::to_string(original) + ")", original);
      }
    }
    log_det_ = d.array().log().sum();
  }

  int n() const { return n_; }
  double log_det() const { return log_det_; }

  std::vector<double> solve(const std::vector<double>& b) const {
    if (static_cast<int>(b.size()) != n_) throw InputError("solve: dimension mismatch");
    Eigen::Map<const Eigen::VectorXd> bv(b.data(), n_);
    Eigen::VectorXd x = ldlt_.solve(bv);
    return {x.data(), x.data() + x.size()};
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return ldlt_.solve(b); }

  /// Exact draw from N(0, Q^{-1}):  x = pi^T L^{-T} D^{-1/2} z.
  Eigen::VectorXd sample(Rng& rng) const {
    Eigen::VectorXd z(n_);
    for (int i = 0; i < n_; ++i) z[i] = rng.normal();
    return unwhiten(z);
  }

  /// Maps a standard-normal vector to a N(0, Q^{-1}) draw.
  Eigen::VectorXd unwhiten(const Eigen::VectorXd& z) const {
    Eigen::VectorXd y = z.array() / ldlt_.vectorD().array().sqrt();
    y = ldlt_.matrixU().solve(y);
    return ldlt_.permutationPinv() * y;
  }

  const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& eigen() const { return ldlt_; }

 private:
  int n_ = 0;
  double log_det_ = 0.0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

inline CholFactor chol_factor(const SparseSymMatrix& q) { return CholFactor(q); }

inline std::vector<double> sample_field(const CholFactor& factor, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd x = factor.sample(rng);
  return {x.data(), x.data() + x.size()};
}

}  // namespace sbhm
