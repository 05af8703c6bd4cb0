#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "sbhm/image.hpp"

namespace sbhm {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

/// Inverse standard normal CDF (Wichura's PPND16 / AS 241), accurate to
/// about 1e-16 relative over (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("normal_quantile: p must be in (0,1)");
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

/// (x - mean)/sd with the n-1 standard-deviation convention.
inline std::vector<double> standardize(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) throw InputError("standardize: need at least 2 values");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw InputError("standardize: zero sample standard deviation");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

struct NormalityReport {
  double w = 0.0;       // Shapiro-Wilk W statistic
  double p_value = 0.0;
  int n = 0;
  std::vector<double> standardized;  // standardized input sample
};

/// Shapiro-Wilk normality test, Royston's AS R94 approximation,
/// 3 <= n <= 5000.
inline NormalityReport shapiro_wilk(const std::vector<double>& sample) {
  const int n = static_cast<int>(sample.size());
  if (n < 3 || n > 5000) throw InputError("shapiro_wilk: n must be in [3,5000]");
  std::vector<double> x(sample);
  std::sort(x.begin(), x.end());
  if (x.front() == x.back()) throw InputError("shapiro_wilk: constant sample");

  // Normal scores m and coefficients a (Royston's polynomial corrections to
  // the two largest coefficients).
  std::vector<double> m(n);
  double ssumm2 = 0.0;
  for (int i = 0; i < n; ++i) {
    m[i] = normal_quantile((i + 1 - 0.375) / (n + 0.25));
    ssumm2 += m[i] * m[i];
  }
  const double rsn = 1.0 / std::sqrt(static_cast<double>(n));
  auto poly = [](const double* c, int order, double z) {
    double v = c[0];
    double zp = 1.0;
    for (int k = 1; k <= order; ++k) {
      zp *= z;
      v += c[k] * zp;
    }
    return v;
  };
  static const double c1[6] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
  static const double c2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};

  std::vector<double> a(n);
  const double m_last = m[n - 1];
  double an = m_last / std::sqrt(ssumm2) + poly(c1, 5, rsn);
  double an1 = 0.0;
  double phi;
  int adjusted = 1;
  if (n > 5) {
    an1 = m[n - 2] / std::sqrt(ssumm2) + poly(c2, 5, rsn);
    phi = (ssumm2 - 2.0 * m_last * m_last - 2.0 * m[n - 2] * m[n - 2]) /
          (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
    adjusted = 2;
  } else if (n > 3) {
    phi = (ssumm2 - 2.0 * m_last * m_last) / (1.0 - 2.0 * an * an);
  } else {
    an = M_SQRT1_2;  // n = 3: exact coefficient
    phi = 1.0;
  }
  const double rphi = 1.0 / std::sqrt(phi);
  for (int i = 0; i < n; ++i) a[i] = m[i] * rphi;
  a[n - 1] = an;
  a[0] = -an;
  if (adjusted == 2) {
    a[n - 2] = an1;
    a[1] = -an1;
  }

  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += a[i] * x[i];
    den += (x[i] - mean) * (x[i] - mean);
  }
  double w = num * num / den;
  if (w > 1.0) w = 1.0;

  // p-value transformation (Royston 1995).
  double p;
  if (n == 3) {
    const double pi6 = 6.0 / M_PI;
    const double stqr = std::asin(std::sqrt(0.75));
    p = pi6 * (std::asin(std::sqrt(w)) - stqr);
    p = std::min(1.0, std::max(0.0, p));
  } else {
    const double one_minus_w = std::max(1.0 - w, 1e-99);
    double z;
    if (n <= 11) {
      const double g = -2.273 + 0.459 * n;
      const double wx = -std::log(g - std::log(one_minus_w));
      const double mu = 0.5440 - 0.39978 * n + 0.025054 * n * n - 0.0006714 * n * n * n;
      const double sig = std::exp(1.3822 - 0.77857 * n + 0.062767 * n * n - 0.0020322 * n * n * n);
      z = (wx - mu) / sig;
    } else {
      const double lnn = std::log(static_cast<double>(n));
      const double mu = -1.5861 - 0.31082 * lnn - 0.083751 * lnn * lnn + 0.0038915 * lnn * lnn * lnn;
      const double sig = std::exp(-0.4803 - 0.082676 * lnn + 0.0030302 * lnn * lnn);
      z = (std::log(one_minus_w) - mu) / sig;
    }
    p = 1.0 - normal_cdf(z);
  }

  NormalityReport rep;
  rep.w = w;
  rep.p_value = p;
  rep.n = n;
  rep.standardized = standardize(sample);
  return rep;
}

/// D'Agostino K^2 omnibus normality test; secondary cross-check next to
/// Shapiro-Wilk.
inline double dagostino_k2_pvalue(const std::vector<double>& sample) {
  const int n = static_cast<int>(sample.size());
  if (n < 20) throw InputError("dagostino_k2: n must be >= 20");
  const double nn = n;
  const double mean = std::accumulate(sample.begin(), sample.end(), 0.0) / nn;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : sample) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= nn;
  m3 /= nn;
  m4 /= nn;
  const double b1 = m3 / std::pow(m2, 1.5);
  const double b2 = m4 / (m2 * m2);

  // skewness z (D'Agostino 1970)
  const double y = b1 * std::sqrt((nn + 1) * (nn + 3) / (6.0 * (nn - 2)));
  const double beta2 = 3.0 * (nn * nn + 27 * nn - 70) * (nn + 1) * (nn + 3) /
                       ((nn - 2) * (nn + 5) * (nn + 7) * (nn + 9));
  const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
  const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
  const double alpha = std::sqrt(2.0 / (w2 - 1.0));
  const double ya = y / alpha;
  const double zs = delta * std::log(ya + std::sqrt(ya * ya + 1.0));

  // kurtosis z (Anscombe & Glynn 1983)
  const double eb2 = 3.0 * (nn - 1) / (nn + 1);
  const double vb2 = 24.0 * nn * (nn - 2) * (nn - 3) / ((nn + 1) * (nn + 1) * (nn + 3) * (nn + 5));
  const double xk = (b2 - eb2) / std::sqrt(vb2);
  const double sb = 6.0 * (nn * nn - 5 * nn + 2) / ((nn + 7) * (nn + 9)) *
                    std::sqrt(6.0 * (nn + 3) * (nn + 5) / (nn * (nn - 2) * (nn - 3)));
  const double aa = 6.0 + 8.0 / sb * (2.0 / sb + std::sqrt(1.0 + 4.0 / (sb * sb)));
  const double t1 = 1.0 - 2.0 / (9.0 * aa);
  const double t2 = (1.0 - 2.0 / aa) / (1.0 + xk * std::sqrt(2.0 / (aa - 4.0)));
  const double zk = (t1 - std::cbrt(t2)) / std::sqrt(2.0 / (9.0 * aa));

  const double k2 = zs * zs + zk * zk;
  // chi-square(2) survival function
  return std::exp(-0.5 * k2);
}

}  // namespace sbhm
