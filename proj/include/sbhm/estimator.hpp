#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sbhm/inference.hpp"
#include "sbhm/stats.hpp"

namespace sbhm {

/// Compensated (Kahan) summation.
inline double kahan_sum(const std::vector<double>& xs) {
  double sum = 0.0, c = 0.0;
  for (double x : xs) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

struct SparsityEstimate {
  double value = 0.0;      // sum of E(p_i | o)
  std::size_t n_pixels = 0;
};

/// The expected-sparsity estimator: the sum of the per-pixel posterior
/// means of p.
inline SparsityEstimate estimate_expected_sparsity(const PosteriorP& post) {
  SparsityEstimate est;
  est.n_pixels = post.p_mean.size();
  est.value = kahan_sum(post.p_mean);
  return est;
}

/// |a - b| * 100 / N.
inline double abs_diff_percent(double a, double b, std::size_t n_pixels) {
  if (n_pixels == 0) throw InputError("abs_diff_percent: N must be > 0");
  return std::fabs(a - b) * 100.0 / static_cast<double>(n_pixels);
}

/// Sample-mean reference estimator over simulated sparsities.
inline double sample_mean_sparsity(const std::vector<long long>& s_list) {
  if (s_list.empty()) throw InputError("sample_mean_sparsity: empty input");
  double sum = 0.0, c = 0.0;
  for (long long s : s_list) {
    const double y = static_cast<double>(s) - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum / static_cast<double>(s_list.size());
}

/// Square/border decomposition of the lattice: (2*phi+1)-sided squares tiled
/// with period 2*phi+1+rho_star from the top-left corner, each owning the
/// width-rho_star strip to its right and below plus the corner between them,
/// so interior border regions hold exactly 2(2*phi+1)*rho_star + rho_star^2
/// pixels. Pixels in distinct squares are more than rho_star apart in the
/// L-infinity metric.
struct BlockPartition {
  int phi = 0;
  int rho_star = 0;
  int n1 = 0;
  int n2 = 0;
  int n_sq = 0;
  std::vector<std::vector<int>> squares;            // pixel indices per square
  std::vector<std::vector<int>> borders_per_square;  // pixel indices per border region
  std::vector<bool> clipped;                         // border truncated by the lattice edge
};

inline BlockPartition block_partition(int n1, int n2, int phi, int rho_star) {
  if (rho_star < 1) throw InputError("block_partition: rho_star must be >= 1");
  if (phi <= rho_star) throw InputError("block_partition: phi must exceed rho_star");
  const int w = 2 * phi + 1;
  if (n1 < w || n2 < w) throw InputError("block_partition: lattice too small for square size");
  const int period = w + rho_star;
  const int k1 = (n1 + rho_star) / period;
  const int k2 = (n2 + rho_star) / period;

  BlockPartition part;
  part.phi = phi;
  part.rho_star = rho_star;
  part.n1 = n1;
  part.n2 = n2;
  part.n_sq = k1 * k2;
  part.squares.reserve(part.n_sq);
  part.borders_per_square.reserve(part.n_sq);
  part.clipped.reserve(part.n_sq);

  for (int a = 0; a < k1; ++a) {
    for (int b = 0; b < k2; ++b) {
      const int r0 = a * period, c0 = b * period;
      std::vector<int> sq;
      sq.reserve(static_cast<std::size_t>(w) * w);
      for (int i = r0; i < r0 + w; ++i)
        for (int j = c0; j < c0 + w; ++j) sq.push_back(i * n2 + j);
      std::vector<int> border;
      border.reserve(static_cast<std::size_t>(2 * w * rho_star + rho_star * rho_star));
      const int r1 = std::min(n1, r0 + w + rho_star);
      const int c1 = std::min(n2, c0 + w + rho_star);
      for (int i = r0; i < r1; ++i)
        for (int j = c0; j < c1; ++j)
          if (i >= r0 + w || j >= c0 + w) border.push_back(i * n2 + j);
      part.clipped.push_back(r0 + w + rho_star > n1 || c0 + w + rho_star > n2);
      part.squares.push_back(std::move(sq));
      part.borders_per_square.push_back(std::move(border));
    }
  }
  return part;
}

/// Empirical square/border moments across replicated posterior-mean fields.
/// Sums are taken on fields centered by the per-pixel replicate average, so
/// the statistics describe fluctuations about the mean.
struct BlockStats {
  std::vector<double> sigma2_k;   // variance of the square sum S_k across replicates
  std::vector<double> r3_k;       // E|S_k|^3 across replicates
  std::vector<double> var_sb_k;   // variance of the border sum
  std::vector<bool> degenerate;   // zero-variance squares
  int n_sq_used = 0;              // unclipped squares entering the ratios
  double ratio_b1 = 0.0;          // sum Var(S^B) / (n_sq_used * sum sigma2)
  double ratio_b2 = 0.0;          // (sum r3)^{1/3} / (sum sigma2)^{1/2}
};

inline BlockStats block_stats(const BlockPartition& part,
                              const std::vector<std::vector<double>>& p_fields) {
  const int r_count = static_cast<int>(p_fields.size());
  if (r_count < 2) throw InputError("block_stats: need at least 2 replicates");
  const std::size_t n = static_cast<std::size_t>(part.n1) * part.n2;
  for (const auto& f : p_fields)
    if (f.size() != n) throw InputError("block_stats: field size disagrees with partition");

  std::vector<double> pixel_mean(n, 0.0);
  for (const auto& f : p_fields)
    for (std::size_t i = 0; i < n; ++i) pixel_mean[i] += f[i];
  for (auto& v : pixel_mean) v /= r_count;

  const int k_total = part.n_sq;
  BlockStats stats;
  stats.sigma2_k.resize(k_total);
  stats.r3_k.resize(k_total);
  stats.var_sb_k.resize(k_total);
  stats.degenerate.resize(k_total);

  double sum_sigma2 = 0.0, sum_r3 = 0.0, sum_var_sb = 0.0;
  for (int k = 0; k < k_total; ++k) {
    std::vector<double> sk(r_count, 0.0), sbk(r_count, 0.0);
    for (int r = 0; r < r_count; ++r) {
      const auto& f = p_fields[r];
      double acc = 0.0;
      for (int idx : part.squares[k]) acc += f[idx] - pixel_mean[idx];
      sk[r] = acc;
      acc = 0.0;
      for (int idx : part.borders_per_square[k]) acc += f[idx] - pixel_mean[idx];
      sbk[r] = acc;
    }
    auto var_of = [&](const std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= r_count;
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      return ss / (r_count - 1);
    };
    stats.sigma2_k[k] = var_of(sk);
    stats.var_sb_k[k] = var_of(sbk);
    double r3 = 0.0;
    for (double x : sk) r3 += std::fabs(x * x * x);
    stats.r3_k[k] = r3 / r_count;
    stats.degenerate[k] = stats.sigma2_k[k] == 0.0;
    if (!part.clipped[k]) {
      sum_sigma2 += stats.sigma2_k[k];
      sum_r3 += stats.r3_k[k];
      sum_var_sb += stats.var_sb_k[k];
      ++stats.n_sq_used;
    }
  }
  if (stats.n_sq_used > 0 && sum_sigma2 > 0.0) {
    stats.ratio_b1 = sum_var_sb / (static_cast<double>(stats.n_sq_used) * sum_sigma2);
    stats.ratio_b2 = std::cbrt(sum_r3) / std::sqrt(sum_sigma2);
  }
  return stats;
}

/// Checks the variance identity Var(sum_i X_i) = sum_ij Cov(X_i, X_j) on a
/// replicated ensemble: lhs from the row sums directly, rhs from per-column
/// variances plus the cross-covariance total computed on centered columns.
inline std::pair<double, double> ensemble_variance_identity(
    const std::vector<std::vector<double>>& p_fields) {
  const int r_count = static_cast<int>(p_fields.size());
  if (r_count < 2) throw InputError("ensemble_variance_identity: need at least 2 replicates");
  const std::size_t n = p_fields[0].size();
  for (const auto& f : p_fields)
    if (f.size() != n) throw InputError("ensemble_variance_identity: ragged replicate fields");

  // lhs: sample variance of raw row sums
  std::vector<double> row_sums(r_count);
  for (int r = 0; r < r_count; ++r) row_sums[r] = kahan_sum(p_fields[r]);
  double mean_rs = 0.0;
  for (double v : row_sums) mean_rs += v;
  mean_rs /= r_count;
  double lhs = 0.0;
  for (double v : row_sums) lhs += (v - mean_rs) * (v - mean_rs);
  lhs /= (r_count - 1);

  // rhs: sum of variances plus twice the upper-triangle covariance mass,
  // both from centered columns
  std::vector<double> col_mean(n, 0.0);
  for (const auto& f : p_fields)
    for (std::size_t i = 0; i < n; ++i) col_mean[i] += f[i];
  for (auto& v : col_mean) v /= r_count;

  double sum_var = 0.0;
  std::vector<double> centered_row_sum(r_count, 0.0);
  for (int r = 0; r < r_count; ++r) {
    double acc = 0.0, c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p_fields[r][i] - col_mean[i];
      const double y = d - c;
      const double t = acc + y;
      c = (t - acc) - y;
      acc = t;
    }
    centered_row_sum[r] = acc;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (int r = 0; r < r_count; ++r) {
      const double d = p_fields[r][i] - col_mean[i];
      ss += d * d;
    }
    sum_var += ss / (r_count - 1);
  }
  double total = 0.0;
  for (double v : centered_row_sum) total += v * v;
  total /= (r_count - 1);
  const double twice_cross = total - sum_var;
  const double rhs = sum_var + twice_cross;
  return {lhs, rhs};
}

}  // namespace sbhm
