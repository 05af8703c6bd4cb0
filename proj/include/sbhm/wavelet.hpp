#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sbhm/image.hpp"

namespace sbhm {

/// Which level-1 detail sub-bands feed the MAD noise estimate.
enum class SigmaBand { pooled, dd1 };

inline std::string to_string(SigmaBand b) {
  return b == SigmaBand::pooled ? "pooled" : "dd1";
}
inline SigmaBand sigma_band_from_string(const std::string& s) {
  if (s == "pooled") return SigmaBand::pooled;
  if (s == "dd1") return SigmaBand::dd1;
  throw InputError("unknown sigma_band '" + s + "' (expected pooled|dd1)");
}

/// In-place dyadic layout of a separable orthonormal Haar analysis.
///
/// After `levels` passes the approximation band A sits in the top-left
/// (n1>>levels) x (n2>>levels) corner. At each level the quadrants of the
/// active block are, clockwise from top-left: A, DH (high-pass along
/// columns index, i.e. horizontal filtering), DD, DV. The estimator
/// downstream is invariant to the DH/DV labelling; this one is fixed here
/// and used consistently.
struct WaveletPyramid {
  int n1 = 0;
  int n2 = 0;
  int levels = 3;
  std::vector<double> coeffs;  // row-major, same shape as the source image

  double& at(int i, int j) { return coeffs[static_cast<std::size_t>(i) * n2 + j]; }
  double at(int i, int j) const { return coeffs[static_cast<std::size_t>(i) * n2 + j]; }
  std::size_t size() const { return coeffs.size(); }

  int approx_rows() const { return n1 >> levels; }
  int approx_cols() const { return n2 >> levels; }

  bool in_approx_band(int i, int j) const { return i < approx_rows() && j < approx_cols(); }
};

namespace detail {

const double kInvSqrt2 = 0.70710678118654752440;

// One analysis step along a length-2k strided sequence.
inline void haar_step(double* base, int stride, int len2, std::vector<double>& tmp) {
  const int half = len2 / 2;
  for (int j = 0; j < half; ++j) {
    const double a = base[2 * j * stride];
    const double b = base[(2 * j + 1) * stride];
    tmp[j] = (a + b) * kInvSqrt2;
    tmp[half + j] = (a - b) * kInvSqrt2;
  }
  for (int j = 0; j < len2; ++j) base[j * stride] = tmp[j];
}

inline void haar_step_inv(double* base, int stride, int len2, std::vector<double>& tmp) {
  const int half = len2 / 2;
  for (int j = 0; j < half; ++j) {
    const double s = base[j * stride];
    const double d = base[(half + j) * stride];
    tmp[2 * j] = (s + d) * kInvSqrt2;
    tmp[2 * j + 1] = (s - d) * kInvSqrt2;
  }
  for (int j = 0; j < len2; ++j) base[j * stride] = tmp[j];
}

}  // namespace detail

/// Separable orthonormal Haar analysis, `levels` recursions on the
/// approximation block. Requires both dimensions divisible by 2^levels.
inline WaveletPyramid dwt2(const GrayImage& img, int levels = 3) {
  if (levels < 1) throw InputError("dwt2: levels must be >= 1");
  const int div = 1 << levels;
  if (img.n1 < div || img.n2 < div || img.n1 % div != 0 || img.n2 % div != 0)
    throw InputError("dwt2: dimensions must be divisible by 2^levels");
  WaveletPyramid pyr;
  pyr.n1 = img.n1;
  pyr.n2 = img.n2;
  pyr.levels = levels;
  pyr.coeffs = img.data;
  std::vector<double> tmp(static_cast<std::size_t>(std::max(img.n1, img.n2)));
  int h = img.n1, w = img.n2;
  for (int level = 0; level < levels; ++level) {
    for (int i = 0; i < h; ++i) detail::haar_step(&pyr.at(i, 0), 1, w, tmp);
    for (int j = 0; j < w; ++j) detail::haar_step(&pyr.at(0, j), pyr.n2, h, tmp);
    h /= 2;
    w /= 2;
  }
  return pyr;
}

/// Exact inverse of dwt2.
inline GrayImage idwt2(const WaveletPyramid& pyr) {
  GrayImage img(pyr.n1, pyr.n2);
  img.data = pyr.coeffs;
  std::vector<double> tmp(static_cast<std::size_t>(std::max(pyr.n1, pyr.n2)));
  for (int level = pyr.levels - 1; level >= 0; --level) {
    const int h = pyr.n1 >> level, w = pyr.n2 >> level;
    for (int j = 0; j < w; ++j)
      detail::haar_step_inv(&img.data[static_cast<std::size_t>(j)], pyr.n2, h, tmp);
    for (int i = 0; i < h; ++i)
      detail::haar_step_inv(&img.data[static_cast<std::size_t>(i) * pyr.n2], 1, w, tmp);
  }
  return img;
}

namespace detail {

// Collects |c| over the requested level-1 detail sub-bands.
inline std::vector<double> level1_abs_details(const WaveletPyramid& pyr, SigmaBand band) {
  const int h2 = pyr.n1 / 2, w2 = pyr.n2 / 2;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(pyr.n1) * pyr.n2 * 3 / 4);
  // DD1: bottom-right quadrant.
  for (int i = h2; i < pyr.n1; ++i)
    for (int j = w2; j < pyr.n2; ++j) out.push_back(std::fabs(pyr.at(i, j)));
  if (band == SigmaBand::pooled) {
    for (int i = 0; i < h2; ++i)  // DH1
      for (int j = w2; j < pyr.n2; ++j) out.push_back(std::fabs(pyr.at(i, j)));
    for (int i = h2; i < pyr.n1; ++i)  // DV1
      for (int j = 0; j < w2; ++j) out.push_back(std::fabs(pyr.at(i, j)));
  }
  return out;
}

inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (n % 2 == 0) {
    // mean of the two central order statistics
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    m = 0.5 * (lo + m);
  }
  return m;
}

}  // namespace detail

/// MAD noise estimate: median|level-1 detail coefficients| / 0.6745.
inline double estimate_noise_sigma(const WaveletPyramid& pyr, SigmaBand band = SigmaBand::pooled) {
  auto abs_details = detail::level1_abs_details(pyr, band);
  if (abs_details.empty()) throw InputError("estimate_noise_sigma: empty detail bands");
  return detail::median_inplace(abs_details) / 0.6745;
}

/// Universal hard-threshold level sigma * sqrt(2 ln N), N = pixel count.
inline double universal_threshold(double sigma, std::size_t n_pixels) {
  if (!(sigma >= 0.0)) throw InputError("universal_threshold: sigma must be >= 0");
  if (n_pixels < 2) throw InputError("universal_threshold: N must be >= 2");
  return sigma * std::sqrt(2.0 * std::log(static_cast<double>(n_pixels)));
}

/// Thresholded coefficient lattice with its indicator field.
struct SparseCoeffImage {
  int n1 = 0;
  int n2 = 0;
  int levels = 3;
  std::vector<double> coeffs;         // x
  std::vector<std::uint8_t> indicator;  // o_i = 1 iff x_i != 0
  long long s = 0;                    // number of non-zeros over all N pixels
  double threshold_used = 0.0;

  std::size_t size() const { return coeffs.size(); }
};

/// Keeps detail coefficients with |c| >= T, zeroes the rest; the
/// approximation band passes through untouched. The indicator and s are
/// computed over all N pixels of the coefficient image.
inline SparseCoeffImage hard_threshold(const WaveletPyramid& pyr, double threshold) {
  if (!(threshold >= 0.0)) throw InputError("hard_threshold: T must be >= 0");
  SparseCoeffImage sci;
  sci.n1 = pyr.n1;
  sci.n2 = pyr.n2;
  sci.levels = pyr.levels;
  sci.threshold_used = threshold;
  sci.coeffs.resize(pyr.size());
  sci.indicator.resize(pyr.size());
  for (int i = 0; i < pyr.n1; ++i) {
    for (int j = 0; j < pyr.n2; ++j) {
      const double c = pyr.at(i, j);
      const bool keep = pyr.in_approx_band(i, j) || std::fabs(c) >= threshold;
      const double v = keep ? c : 0.0;
      const std::size_t idx = static_cast<std::size_t>(i) * pyr.n2 + j;
      sci.coeffs[idx] = v;
      sci.indicator[idx] = v != 0.0 ? 1 : 0;
      sci.s += sci.indicator[idx];
    }
  }
  return sci;
}

/// o_i = 1 exactly where the coefficient is non-zero.
inline std::vector<std::uint8_t> indicator_map(const SparseCoeffImage& sci) {
  std::vector<std::uint8_t> o(sci.size());
  for (std::size_t i = 0; i < sci.size(); ++i) o[i] = sci.coeffs[i] != 0.0 ? 1 : 0;
  return o;
}

}  // namespace sbhm
