#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "sbhm/rng.hpp"
#include "sbhm/stats.hpp"

using namespace sbhm;

TEST_CASE("normal quantile matches reference values") {
  CHECK(normal_quantile(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-13));
  CHECK(normal_quantile(0.3) == Catch::Approx(-0.524400512708041).epsilon(1e-13));
  CHECK(normal_quantile(1e-10) == Catch::Approx(-6.361340902404056).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-15));
  // inverse relationship
  for (double p : {0.001, 0.025, 0.4, 0.77, 0.999}) {
    CHECK(normal_cdf(normal_quantile(p)) == Catch::Approx(p).epsilon(1e-12));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), InputError);
  CHECK_THROWS_AS(normal_quantile(1.0), InputError);
}

TEST_CASE("standardize: hand fixture, idempotence, affine invariance") {
  const auto z = standardize({0.0, 2.0});
  CHECK(z[0] == Catch::Approx(-0.70710678118654752).epsilon(1e-14));
  CHECK(z[1] == Catch::Approx(0.70710678118654752).epsilon(1e-14));

  const std::vector<double> x{1.2, -0.7, 3.1, 0.4, -2.2, 0.9};
  const auto s1 = standardize(x);
  const auto s2 = standardize(s1);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(s2[i] == Catch::Approx(s1[i]).margin(1e-12));

  std::vector<double> ax(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) ax[i] = 3.5 * x[i] - 11.0;
  const auto s3 = standardize(ax);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(s3[i] == Catch::Approx(s1[i]).margin(1e-12));

  // mean 0, sd 1 exactly (to rounding)
  double mean = std::accumulate(s1.begin(), s1.end(), 0.0) / s1.size();
  double ss = 0.0;
  for (double v : s1) ss += (v - mean) * (v - mean);
  CHECK(mean == Catch::Approx(0.0).margin(1e-14));
  CHECK(std::sqrt(ss / (s1.size() - 1)) == Catch::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(standardize({1.0}), InputError);
  CHECK_THROWS_AS(standardize({2.0, 2.0, 2.0}), InputError);
}

TEST_CASE("shapiro-wilk reproduces reference W and p values") {
  // fixtures frozen from a reference implementation of AS R94
  {
    const std::vector<double> x{148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236, 131};
    const NormalityReport rep = shapiro_wilk(x);
    CHECK(rep.w == Catch::Approx(0.869317259110).margin(1e-4));
    CHECK(rep.p_value == Catch::Approx(0.064060107804).margin(1e-4));
  }
  {
    std::vector<double> x(40);
    for (int i = 0; i < 40; ++i) x[i] = i + 1.0;
    const NormalityReport rep = shapiro_wilk(x);
    CHECK(rep.w == Catch::Approx(0.956211267336).margin(1e-4));
    CHECK(rep.p_value == Catch::Approx(0.124138568799).margin(1e-4));
  }
  {
    std::vector<double> x(25);
    for (int i = 0; i < 25; ++i) x[i] = std::exp((i + 1) / 5.0);
    const NormalityReport rep = shapiro_wilk(x);
    CHECK(rep.w == Catch::Approx(0.766964950653).margin(1e-4));
    CHECK(rep.p_value == Catch::Approx(6.709568190326e-05).margin(1e-5));
  }
  {
    const std::vector<double> x{1.0, 2.0, 4.0};
    const NormalityReport rep = shapiro_wilk(x);
    CHECK(rep.w == Catch::Approx(0.9642857143).margin(1e-4));
    CHECK(rep.p_value == Catch::Approx(0.6368868450).margin(1e-4));
  }
  {
    const std::vector<double> x{6.0, 1.0, -4.0, 8.0, -2.0};
    const NormalityReport rep = shapiro_wilk(x);
    CHECK(rep.w == Catch::Approx(0.9364480575).margin(1e-4));
    CHECK(rep.p_value == Catch::Approx(0.6409477084).margin(1e-4));
  }
}

TEST_CASE("shapiro-wilk accepts normal samples and rejects uniform ones") {
  Rng rng(314159);
  std::vector<double> normal(5000);
  for (auto& v : normal) v = rng.normal();
  CHECK(shapiro_wilk(normal).p_value > 0.01);

  std::vector<double> uniform(500);
  for (auto& v : uniform) v = rng.uniform();
  CHECK(shapiro_wilk(uniform).p_value < 0.001);
}

TEST_CASE("shapiro-wilk input guards") {
  CHECK_THROWS_AS(shapiro_wilk({1.0, 2.0}), InputError);
  CHECK_THROWS_AS(shapiro_wilk(std::vector<double>(5001, 0.5)), InputError);
  CHECK_THROWS_AS(shapiro_wilk({3.0, 3.0, 3.0, 3.0}), InputError);
}

TEST_CASE("dagostino K^2 agrees qualitatively with shapiro-wilk") {
  Rng rng(2718);
  std::vector<double> normal(800);
  for (auto& v : normal) v = rng.normal();
  CHECK(dagostino_k2_pvalue(normal) > 0.01);

  std::vector<double> skewed(800);
  for (auto& v : skewed) v = std::exp(rng.normal());
  CHECK(dagostino_k2_pvalue(skewed) < 1e-6);
}
