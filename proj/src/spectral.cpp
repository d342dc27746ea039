#include "calad/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "calad/errors.hpp"

namespace calad {

void validate(const SpectralConfig& cfg) {
  if (cfg.height < 2 || cfg.width < 2) throw ConfigError("spectral: height and width must be >= 2");
  if (cfg.channels < 1) throw ConfigError("spectral: channels must be >= 1");
  if (!std::isfinite(cfg.exponent_lo) || !std::isfinite(cfg.exponent_hi) || cfg.exponent_lo > cfg.exponent_hi) {
    throw ConfigError("spectral: exponent range must satisfy lo <= hi");
  }
  if (cfg.exponent_lo <= 0.0) throw ConfigError("spectral: exponents must be positive");
}

int centered_frequency(int k, int n) { return k <= n / 2 ? k : k - n; }

ExponentPair draw_exponents(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return {lo, hi};
  std::uniform_real_distribution<double> u(lo, hi);
  ExponentPair e;
  e.a = u(rng);
  e.b = u(rng);
  return e;
}

ComplexGrid spectral_magnitude(int height, int width, ExponentPair e) {
  ComplexGrid m(height, width);
  for (int i = 0; i < height; ++i) {
    const double fy = std::abs(centered_frequency(i, height));
    for (int j = 0; j < width; ++j) {
      const double fx = std::abs(centered_frequency(j, width));
      if (i == 0 && j == 0) continue;
      m.at(i, j) = 1.0 / (std::pow(fx, e.a) + std::pow(fy, e.b));
    }
  }
  return m;
}

namespace {

ComplexGrid hermitian_symmetrize(const ComplexGrid& s) {
  ComplexGrid out(s.rows, s.cols);
  for (int i = 0; i < s.rows; ++i) {
    const int ni = (s.rows - i) % s.rows;
    for (int j = 0; j < s.cols; ++j) {
      const int nj = (s.cols - j) % s.cols;
      out.at(i, j) = 0.5 * (s.at(i, j) + std::conj(s.at(ni, nj)));
    }
  }
  return out;
}

}  // namespace

SpectralImage synthesize(const SpectralConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pixel(0, 255);
  SpectralImage out;
  out.image = ImageTensor(cfg.channels, cfg.height, cfg.width);
  for (int c = 0; c < cfg.channels; ++c) {
    const ExponentPair e = draw_exponents(rng, cfg.exponent_lo, cfg.exponent_hi);
    out.exponents.push_back(e);

    ComplexGrid donor(cfg.height, cfg.width);
    for (Complex& v : donor.values) v = Complex(static_cast<double>(pixel(rng)), 0.0);
    const ComplexGrid donor_spectrum = dft2(donor);

    ComplexGrid spectrum = spectral_magnitude(cfg.height, cfg.width, e);
    for (std::size_t k = 0; k < spectrum.values.size(); ++k) {
      spectrum.values[k] *= std::polar(1.0, std::arg(donor_spectrum.values[k]));
    }
    const ComplexGrid signal = idft2(hermitian_symmetrize(spectrum));

    double max_re = 0.0, max_im = 0.0;
    for (const Complex& v : signal.values) {
      max_re = std::max(max_re, std::abs(v.real()));
      max_im = std::max(max_im, std::abs(v.imag()));
    }
    const double residue = max_re > 0.0 ? max_im / max_re : max_im;
    out.imaginary_residue = std::max(out.imaginary_residue, residue);
    if (!(residue < kMaxImaginaryResidue)) throw NumericalError("spectral: synthesized signal is not real");

    double lo = signal.values[0].real(), hi = lo;
    for (const Complex& v : signal.values) {
      lo = std::min(lo, v.real());
      hi = std::max(hi, v.real());
    }
    const double range = hi - lo;
    for (int i = 0; i < cfg.height; ++i) {
      for (int j = 0; j < cfg.width; ++j) {
        const double v = signal.at(i, j).real();
        out.image.at(c, i, j) = range > 0.0 ? (v - lo) / range : 0.5;
      }
    }
  }
  return out;
}

}  // namespace calad
