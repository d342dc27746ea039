#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "calad/errors.hpp"
#include "calad/fft.hpp"
#include "calad/spectral.hpp"
#include "oracles.hpp"

using namespace calad;

namespace {

ComplexGrid random_grid(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexGrid g(r, c);
  for (auto& v : g.values) v = Complex(n(rng), n(rng));
  return g;
}

double max_norm(const ComplexGrid& g) {
  double m = 0.0;
  for (const auto& v : g.values) m = std::max(m, std::abs(v));
  return m;
}

double max_diff(const ComplexGrid& a, const ComplexGrid& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) m = std::max(m, std::abs(a.values[k] - b.values[k]));
  return m;
}

}  // namespace

TEST_CASE("dft2 matches the direct definition") {
  for (auto [r, c] : {std::pair{16, 16}, std::pair{7, 12}, std::pair{5, 3}}) {
    const ComplexGrid x = random_grid(r, c, r * 100 + c);
    const ComplexGrid X = dft2(x);
    CHECK(max_diff(X, oracle::direct_dft(x, -1.0)) < 1e-9 * max_norm(X));
    const ComplexGrid back = idft2(X);
    CHECK(max_diff(back, x) < 1e-9 * max_norm(x));
    double e_time = 0.0, e_freq = 0.0;
    for (const auto& v : x.values) e_time += std::norm(v);
    for (const auto& v : X.values) e_freq += std::norm(v);
    CHECK(e_freq / (r * c) == doctest::Approx(e_time).epsilon(1e-9));
  }
}

TEST_CASE("dft2 simple signals") {
  ComplexGrid impulse(8, 8);
  impulse.at(0, 0) = 1.0;
  for (const auto& v : dft2(impulse).values) CHECK(std::abs(v - Complex(1.0, 0.0)) < 1e-12);
  ComplexGrid flat(8, 6);
  for (auto& v : flat.values) v = 2.0;
  const ComplexGrid F = dft2(flat);
  CHECK(std::abs(F.at(0, 0) - Complex(96.0, 0.0)) < 1e-9);
  for (std::size_t k = 1; k < F.values.size(); ++k) CHECK(std::abs(F.values[k]) < 1e-9);
  CHECK_THROWS(dft2(ComplexGrid()));
}

TEST_CASE("frequencies and magnitude") {
  CHECK(centered_frequency(0, 8) == 0);
  CHECK(centered_frequency(4, 8) == 4);
  CHECK(centered_frequency(5, 8) == -3);
  CHECK(centered_frequency(4, 7) == -3);
  const ComplexGrid m = spectral_magnitude(8, 8, {1.5, 2.0});
  CHECK(m.at(0, 0) == Complex(0.0, 0.0));
  // rows index fy, columns index fx
  CHECK(m.at(0, 2).real() == doctest::Approx(1.0 / std::pow(2.0, 1.5)));
  CHECK(m.at(3, 0).real() == doctest::Approx(1.0 / std::pow(3.0, 2.0)));
  CHECK(m.at(7, 6).real() == doctest::Approx(1.0 / (std::pow(2.0, 1.5) + 1.0)));
}

TEST_CASE("synthesize") {
  SpectralConfig cfg;
  cfg.height = 24;
  cfg.width = 20;
  cfg.channels = 3;
  cfg.seed = 77;
  const SpectralImage a = synthesize(cfg);
  CHECK(a.image.channels == 3);
  CHECK(a.image.height == 24);
  CHECK(a.image.width == 20);
  CHECK(a.exponents.size() == 3);
  CHECK(a.imaginary_residue < 1e-9);
  for (double v : a.image.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (int c = 0; c < 3; ++c) {
    const auto first = a.image.data.begin() + c * 24 * 20;
    CHECK(*std::min_element(first, first + 24 * 20) == 0.0);
    CHECK(*std::max_element(first, first + 24 * 20) == 1.0);
    CHECK(a.exponents[c].a >= 0.5);
    CHECK(a.exponents[c].b <= 3.5);
  }
  CHECK(synthesize(cfg).image.data == a.image.data);
  cfg.seed = 78;
  CHECK(synthesize(cfg).image.data != a.image.data);

  SpectralConfig bad;
  bad.height = 1;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = {};
  bad.exponent_lo = 4.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("spectral slope is recovered") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SpectralConfig cfg;
    cfg.height = cfg.width = 64;
    cfg.seed = seed;
    const SpectralImage img = synthesize(cfg);
    const double slope = oracle::spectral_slope(img.image);
    CHECK(std::abs(-slope - img.exponents[0].a) < 0.3);
  }
}

TEST_CASE("exponent draws are uniform") {
  std::mt19937_64 rng(2024);
  std::vector<double> a;
  for (int k = 0; k < 10000; ++k) a.push_back(draw_exponents(rng, 0.5, 3.5).a);
  CHECK(oracle::ks_uniform(a, 0.5, 3.5) < oracle::ks_critical_1pct(a.size()));
}
