#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <utility>
#include <vector>

#include "helpers.hpp"
#include "sbhm/matern.hpp"
#include "sbhm/sparse.hpp"

using namespace sbhm;

namespace {

oracle::DenseMatrix to_dense(const SparseSymMatrix& q) {
  oracle::DenseMatrix d(q.n(), q.n());
  for (int i = 0; i < q.n(); ++i)
    for (int p = q.row_offsets()[i]; p < q.row_offsets()[i + 1]; ++p)
      d.at(i, q.col_indices()[p]) = q.values()[p];
  return d;
}

}  // namespace

TEST_CASE("bessel_k reference values to 10+ digits") {
  CHECK(bessel_k(0, 1.0) == Catch::Approx(0.42102443824070833).epsilon(1e-12));
  CHECK(bessel_k(1, 1.0) == Catch::Approx(0.60190723019723457).epsilon(1e-12));
  CHECK(bessel_k(0, 0.1) == Catch::Approx(2.4270690247020166).epsilon(1e-12));
  CHECK(bessel_k(1, 5.0) == Catch::Approx(0.0040446134454521642).epsilon(1e-12));
  CHECK(bessel_k(0, 20.0) == Catch::Approx(5.7412378153365243e-10).epsilon(1e-12));
  CHECK(bessel_k(1, 20.0) == Catch::Approx(5.8830579695570382e-10).epsilon(1e-12));
  CHECK(bessel_k(2, 3.0) == Catch::Approx(0.061510458471742038).epsilon(1e-11));
  CHECK(bessel_k(5, 2.5) == Catch::Approx(2.7168842907865434).epsilon(1e-11));
  CHECK(bessel_k(0, 50.0) == Catch::Approx(3.4101677497894955e-23).epsilon(1e-12));
  CHECK(bessel_k(1, 0.001) == Catch::Approx(999.99623815608557).epsilon(1e-11));
  CHECK_THROWS_AS(bessel_k(0, 0.0), InputError);
  CHECK_THROWS_AS(bessel_k(1, -2.0), InputError);
}

TEST_CASE("bessel_k is strictly decreasing in x") {
  for (int nu : {0, 1, 2}) {
    double prev = bessel_k(nu, 0.05);
    for (double x = 0.1; x < 30.0; x += 0.35) {
      const double cur = bessel_k(nu, x);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("matern covariance closed forms") {
  const MaternParams p(1, 1.0, 1.0);
  CHECK(matern_covariance(p, 0.0) == 1.0);
  CHECK(matern_covariance(p, 1.0) == Catch::Approx(0.60190723019723457).epsilon(1e-12));

  // correlation at the nominal range is about 0.14 ("about 0.1")
  const double at_range = matern_covariance(p, p.range());
  CHECK(at_range == Catch::Approx(0.13966747401529314).epsilon(1e-10));

  const MaternParams scaled(1, 0.5, 3.0);
  CHECK(matern_covariance(scaled, 0.0) == 3.0);
  CHECK(matern_covariance(scaled, 2.0) ==
        Catch::Approx(3.0 * 1.0 * bessel_k(1, 1.0)).epsilon(1e-12));
}

TEST_CASE("matern covariance is strictly decreasing in distance") {
  const MaternParams p(1, 0.7, 2.0);
  double prev = matern_covariance(p, 0.0);
  for (double h = 0.25; h < 20.0; h += 0.25) {
    const double cur = matern_covariance(p, h);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("precision stencil: interior row values and row sum") {
  // kappa = 1: a = 5; unscaled center 29, axial -10, diagonal +2, axial-2 +1
  const MaternParams p(1, 1.0, 1.0);
  const SparseSymMatrix q = build_precision(p, 9, 9);
  const double tau2 = 1.0 / (4.0 * M_PI * 1.0 * 1.0);
  const int center = 4 * 9 + 4;
  CHECK(q.coeff(center, center) == Catch::Approx(29.0 * tau2).epsilon(1e-14));
  CHECK(q.coeff(center, center + 1) == Catch::Approx(-10.0 * tau2).epsilon(1e-14));
  CHECK(q.coeff(center, center + 9) == Catch::Approx(-10.0 * tau2).epsilon(1e-14));
  CHECK(q.coeff(center, center + 10) == Catch::Approx(2.0 * tau2).epsilon(1e-14));
  CHECK(q.coeff(center, center + 2) == Catch::Approx(1.0 * tau2).epsilon(1e-14));
  CHECK(q.coeff(center, center + 18) == Catch::Approx(1.0 * tau2).epsilon(1e-14));

  // interior row sums to kappa^4 (unscaled)
  for (double kappa : {0.6, 1.0, 1.7}) {
    const SparseSymMatrix qk = build_precision(MaternParams(1, kappa, 1.0), 9, 9);
    const double t2 = 1.0 / (4.0 * M_PI * kappa * kappa);
    double row_sum = 0.0;
    for (int p2 = qk.row_offsets()[center]; p2 < qk.row_offsets()[center + 1]; ++p2)
      row_sum += qk.values()[p2];
    CHECK(row_sum / t2 == Catch::Approx(std::pow(kappa, 4.0)).margin(1e-10));
  }
}

TEST_CASE("precision matrix is symmetric positive definite") {
  const SparseSymMatrix q = build_precision(MaternParams(1, 0.7, 1.0), 16, 16);
  CHECK(q.is_symmetric());
  CHECK_NOTHROW(chol_factor(q));  // factorization is the PD oracle
}

TEST_CASE("build_precision rejects unsupported parameters") {
  CHECK_THROWS_AS(build_precision(MaternParams(2, 1.0, 1.0), 16, 16), InputError);
  CHECK_THROWS_AS(build_precision(MaternParams(1, 1.0, 1.0), 4, 16), InputError);
  CHECK_THROWS_AS(MaternParams(1, -1.0, 1.0), InputError);
  CHECK_THROWS_AS(MaternParams(1, 1.0, 0.0), InputError);
}

TEST_CASE("cholesky: identity and diagonal fixtures") {
  const SparseSymMatrix eye = SparseSymMatrix::identity(5);
  const CholFactor f(eye);
  CHECK(f.log_det() == Catch::Approx(0.0).margin(1e-14));
  const std::vector<double> b{1, 2, 3, 4, 5};
  CHECK(f.solve(b) == b);

  std::vector<SparseSymMatrix::Triplet> t{{0, 0, 4.0}, {1, 1, 9.0}};
  const CholFactor d(SparseSymMatrix::from_triplets(2, t));
  CHECK(d.log_det() == Catch::Approx(std::log(36.0)).epsilon(1e-14));
}

TEST_CASE("cholesky reports a failing pivot for non-PD input") {
  std::vector<SparseSymMatrix::Triplet> t{{0, 0, 1.0}, {1, 1, -2.0}, {2, 2, 3.0}};
  try {
    chol_factor(SparseSymMatrix::from_triplets(3, t));
    FAIL("expected FactorizationError");
  } catch (const FactorizationError& e) {
    CHECK(e.failing_index == 1);
  }
}

TEST_CASE("cholesky reconstruction matches the lattice precision") {
  const SparseSymMatrix q = build_precision(MaternParams(1, 0.8, 1.5), 16, 16);
  const CholFactor f(q);
  const auto& ldlt = f.eigen();
  Eigen::SparseMatrix<double> l = ldlt.matrixL();
  Eigen::VectorXd dvec = ldlt.vectorD();
  Eigen::SparseMatrix<double> recon = l * dvec.asDiagonal() * Eigen::SparseMatrix<double>(l.transpose());
  // pi Q pi^T
  Eigen::SparseMatrix<double> qc(q.eigen());
  Eigen::SparseMatrix<double> pqp = ldlt.permutationP() * qc * ldlt.permutationPinv();
  const double err = (Eigen::MatrixXd(recon) - Eigen::MatrixXd(pqp)).cwiseAbs().maxCoeff();
  CHECK(err <= 1e-8);
}

TEST_CASE("solve: zero rhs, identity, and a dense oracle comparison") {
  const SparseSymMatrix q = build_precision(MaternParams(1, 0.9, 1.0), 10, 10);
  const CholFactor f(q);

  const std::vector<double> zero(q.n(), 0.0);
  CHECK(f.solve(zero) == zero);

  Rng rng(17);
  std::vector<double> b(q.n());
  for (auto& v : b) v = rng.normal();
  const std::vector<double> x = f.solve(b);
  const std::vector<double> x_oracle = oracle::dense_solve(to_dense(q), b);
  double max_diff = 0.0;
  for (int i = 0; i < q.n(); ++i) max_diff = std::max(max_diff, std::fabs(x[i] - x_oracle[i]));
  CHECK(max_diff <= 1e-8);

  // residual contract
  const std::vector<double> qx = q.matvec(x);
  double rmax = 0.0, bmax = 0.0;
  for (int i = 0; i < q.n(); ++i) {
    rmax = std::max(rmax, std::fabs(qx[i] - b[i]));
    bmax = std::max(bmax, std::fabs(b[i]));
  }
  CHECK(rmax / bmax <= 1e-8);

  CHECK_THROWS_AS(f.solve(std::vector<double>(3, 0.0)), InputError);
}

TEST_CASE("sample_field: identity precision returns the raw normal draw") {
  const SparseSymMatrix eye = SparseSymMatrix::identity(8);
  const CholFactor f(eye);
  const auto draw = sample_field(f, 42);
  Rng rng(42);
  for (double v : draw) CHECK(v == Catch::Approx(rng.normal()).epsilon(1e-15));

  CHECK(sample_field(f, 7) == sample_field(f, 7));  // determinism
  CHECK(sample_field(f, 7) != sample_field(f, 8));
}

TEST_CASE("sample_field: empirical covariance matches the dense inverse") {
  const SparseSymMatrix q = build_precision(MaternParams(1, 1.0, 1.0), 7, 7);
  const CholFactor f(q);
  const int n = q.n();
  const int draws = 20000;
  std::vector<double> mean(n, 0.0);
  std::vector<std::vector<double>> samples;
  samples.reserve(draws);
  Rng rng(2024);
  for (int k = 0; k < draws; ++k) {
    Eigen::VectorXd x = f.sample(rng);
    samples.emplace_back(x.data(), x.data() + n);
    for (int i = 0; i < n; ++i) mean[i] += x[i];
  }
  for (auto& v : mean) v /= draws;

  const oracle::DenseMatrix cov_oracle = oracle::dense_inverse(to_dense(q));
  double max_err = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double acc = 0.0;
      for (const auto& s : samples) acc += (s[i] - mean[i]) * (s[j] - mean[j]);
      acc /= (draws - 1);
      max_err = std::max(max_err, std::fabs(acc - cov_oracle.at(i, j)));
    }
  }
  CHECK(max_err <= 0.05);
}

TEST_CASE("SPDE fidelity on a 40x40 lattice (interior correlations and variance)") {
  const MaternParams p(1, 0.7, 1.0);
  const int n1 = 40, n2 = 40;
  const SparseSymMatrix q = build_precision(p, n1, n2);
  const CholFactor f(q);
  const double range = p.range();  // ~4.04

  // columns of Q^{-1} for a few interior anchors
  const int margin = static_cast<int>(std::ceil(range));
  const std::vector<std::pair<int, int>> anchors{{20, 20}, {12, 25}, {27, 14}};
  double max_corr_err = 0.0, max_var_rel_err = 0.0;
  for (auto [ai, aj] : anchors) {
    std::vector<double> e(q.n(), 0.0);
    e[ai * n2 + aj] = 1.0;
    const std::vector<double> col = f.solve(e);
    const double var_a = col[ai * n2 + aj];
    max_var_rel_err = std::max(max_var_rel_err, std::fabs(var_a - p.sigma2) / p.sigma2);
    for (int i = margin; i < n1 - margin; ++i) {
      for (int j = margin; j < n2 - margin; ++j) {
        const double h = std::hypot(i - ai, j - aj);
        if (h > 2.0 * range || h == 0.0) continue;
        std::vector<double> e2(q.n(), 0.0);
        e2[i * n2 + j] = 1.0;
        const std::vector<double> col2 = f.solve(e2);
        const double corr = col[i * n2 + j] / std::sqrt(var_a * col2[i * n2 + j]);
        const double corr_matern = matern_covariance(p, h) / p.sigma2;
        max_corr_err = std::max(max_corr_err, std::fabs(corr - corr_matern));
      }
    }
  }
  CHECK(max_corr_err <= 0.05);
  CHECK(max_var_rel_err <= 0.10);
}

TEST_CASE("coordinate-text serialization round-trips") {
  const SparseSymMatrix q = build_precision(MaternParams(1, 0.9, 2.0), 6, 7);
  const auto path = std::filesystem::temp_directory_path() / "sbhm_coord.txt";
  q.save_coord(path.string());
  const SparseSymMatrix back = SparseSymMatrix::load_coord(path.string());
  REQUIRE(back.n() == q.n());
  REQUIRE(back.nnz() == q.nnz());
  for (int i = 0; i < q.n(); ++i)
    for (int p = q.row_offsets()[i]; p < q.row_offsets()[i + 1]; ++p)
      CHECK(back.coeff(i, q.col_indices()[p]) == q.values()[p]);
}
