#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sbhm/imagio.hpp"
#include "sbhm/rng.hpp"

using namespace sbhm;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("sbhm_imagio_" + name);
}

GrayImage random_image(int n1, int n2, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  GrayImage img(n1, n2);
  Rng rng(seed);
  for (auto& v : img.data) v = lo + (hi - lo) * rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("P2 parsing maps levels to [0,1] by maxval") {
  const auto path = temp_path("p2_tiny.pgm");
  {
    std::ofstream out(path);
    out << "P2\n# comment line\n2 2\n255\n255 0\n0 255\n";
  }
  const GrayImage img = load_image(path.string(), ImageFormat::pgm);
  REQUIRE(img.n1 == 2);
  REQUIRE(img.n2 == 2);
  CHECK(img.at(0, 0) == 1.0);
  CHECK(img.at(0, 1) == 0.0);
  CHECK(img.at(1, 0) == 0.0);
  CHECK(img.at(1, 1) == 1.0);
}

TEST_CASE("CSV parse is the identity on the written values") {
  const auto path = temp_path("csv_tiny.csv");
  {
    std::ofstream out(path);
    out << "1.5,2.5\n3.5,4.5\n";
  }
  const GrayImage img = load_image(path.string(), ImageFormat::csv);
  REQUIRE(img.n1 == 2);
  REQUIRE(img.n2 == 2);
  CHECK(img.data == std::vector<double>{1.5, 2.5, 3.5, 4.5});
}

TEST_CASE("PGM round-trip: dimensions exact, error bounded by quantization") {
  const GrayImage img = random_image(128, 128, 7);
  const auto path = temp_path("roundtrip.pgm");
  save_image(img, path.string(), ImageFormat::pgm);
  const GrayImage back = load_image(path.string(), ImageFormat::pgm);
  REQUIRE(back.n1 == img.n1);
  REQUIRE(back.n2 == img.n2);
  double max_err = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i)
    max_err = std::max(max_err, std::fabs(img.data[i] - back.data[i]));
  CHECK(max_err <= 1.0 / (2.0 * 65535.0));
}

TEST_CASE("P2 writer round-trips through the same loader") {
  const GrayImage img = random_image(16, 24, 11);
  const auto path = temp_path("ascii.pgm");
  save_pgm(img, path.string(), /*ascii=*/true);
  const GrayImage back = load_pgm(path.string());
  REQUIRE(back.n1 == 16);
  REQUIRE(back.n2 == 24);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(std::fabs(img.data[i] - back.data[i]) <= 1.0 / (2.0 * 65535.0));
}

TEST_CASE("CSV round-trip preserves doubles exactly") {
  GrayImage img = random_image(12, 9, 3, -5.0, 5.0);
  img.at(0, 0) = 1.2345678901234567e-7;
  const auto path = temp_path("roundtrip.csv");
  save_image(img, path.string(), ImageFormat::csv);
  const GrayImage back = load_image(path.string(), ImageFormat::csv);
  REQUIRE(back.n1 == img.n1);
  REQUIRE(back.n2 == img.n2);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.data[i] == img.data[i]);
}

TEST_CASE("malformed inputs are rejected") {
  SECTION("bad magic") {
    const auto path = temp_path("bad_magic.pgm");
    std::ofstream(path) << "Q5\n2 2\n255\n";
    CHECK_THROWS_AS(load_pgm(path.string()), InputError);
  }
  SECTION("truncated binary payload") {
    const auto path = temp_path("short.pgm");
    std::ofstream(path, std::ios::binary) << "P5\n4 4\n255\nab";
    CHECK_THROWS_AS(load_pgm(path.string()), InputError);
  }
  SECTION("ragged csv") {
    const auto path = temp_path("ragged.csv");
    std::ofstream(path) << "1,2\n3\n";
    CHECK_THROWS_AS(load_csv(path.string()), InputError);
  }
  SECTION("non-finite csv value") {
    const auto path = temp_path("nonfinite.csv");
    std::ofstream(path) << "1,2\nnan,4\n";
    CHECK_THROWS_AS(load_image(path.string(), ImageFormat::csv), InputError);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(load_pgm("/nonexistent/definitely_missing.pgm"), InputError);
  }
}

TEST_CASE("phantom: zero ellipses and zero noise give the zero image") {
  PhantomSpec spec;
  spec.n1 = 16;
  spec.n2 = 16;
  const GrayImage img = generate_phantom(spec);
  for (double v : img.data) CHECK(v == 0.0);
}

TEST_CASE("phantom: one covering ellipse gives the constant image") {
  PhantomSpec spec;
  spec.n1 = 16;
  spec.n2 = 16;
  spec.ellipses = {{8.0, 8.0, 40.0, 40.0, 0.0, 1.0}};
  const GrayImage img = generate_phantom(spec);
  for (double v : img.data) CHECK(v == 1.0);
}

TEST_CASE("phantom is deterministic in its seed") {
  PhantomSpec spec = default_phantom_spec(32, 32, 99);
  spec.noise_sigma = 0.01;
  const GrayImage a = generate_phantom(spec);
  const GrayImage b = generate_phantom(spec);
  CHECK(a.data == b.data);
  spec.seed = 100;
  const GrayImage c = generate_phantom(spec);
  CHECK(a.data != c.data);
}

TEST_CASE("phantom noise statistics match the configured sigma") {
  PhantomSpec spec;
  spec.n1 = 64;
  spec.n2 = 64;
  spec.noise_sigma = 0.5;
  spec.seed = 1234;
  const GrayImage img = generate_phantom(spec);
  const double n = static_cast<double>(img.size());
  double mean = 0.0;
  for (double v : img.data) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : img.data) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  // sampling error of the sd is about sigma/sqrt(2N)
  CHECK(std::fabs(sd - 0.5) <= 5.0 * 0.5 / std::sqrt(2.0 * n));
}

TEST_CASE("phantom spec validation") {
  PhantomSpec spec;
  spec.noise_sigma = -1.0;
  CHECK_THROWS_AS(generate_phantom(spec), InputError);
  spec.noise_sigma = 0.0;
  spec.ellipses = {{1.0, 1.0, 0.0, 1.0, 0.0, 1.0}};
  CHECK_THROWS_AS(generate_phantom(spec), InputError);
}
