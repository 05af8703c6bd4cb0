#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbhm {

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Real-valued 2D pixel lattice, row-major.
struct GrayImage {
  int n1 = 0;  // rows
  int n2 = 0;  // cols
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int rows, int cols, double fill = 0.0)
      : n1(rows), n2(cols), data(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 1 || cols < 1) throw InputError("GrayImage: dimensions must be >= 1");
  }

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * n2 + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * n2 + j]; }
  std::size_t size() const { return data.size(); }

  /// 3-level dyadic transforms need both dimensions divisible by 8.
  bool dyadic3() const {
    return n1 >= 8 && n2 >= 8 && n1 % 8 == 0 && n2 % 8 == 0;
  }

  void check_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) throw InputError("GrayImage: non-finite pixel value");
  }
};

struct Ellipse {
  double center_row = 0.0;
  double center_col = 0.0;
  double semi_a = 1.0;      // semi-axis along the (rotated) row direction
  double semi_b = 1.0;      // semi-axis along the (rotated) col direction
  double rotation = 0.0;    // radians
  double intensity = 1.0;
};

/// Synthetic piecewise-smooth test image: overlapping ellipses plus
/// additive Gaussian pixel noise.
struct PhantomSpec {
  int n1 = 64;
  int n2 = 64;
  std::vector<Ellipse> ellipses;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n1 < 1 || n2 < 1) throw InputError("PhantomSpec: dimensions must be >= 1");
    if (!(noise_sigma >= 0.0)) throw InputError("PhantomSpec: noise_sigma must be >= 0");
    for (const auto& e : ellipses) {
      if (!(e.semi_a > 0.0) || !(e.semi_b > 0.0))
        throw InputError("PhantomSpec: semi-axes must be > 0");
      if (!std::isfinite(e.intensity)) throw InputError("PhantomSpec: non-finite intensity");
    }
  }
};

}  // namespace sbhm
