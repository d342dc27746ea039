#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "calad/fft.hpp"
#include "calad/tensor.hpp"

namespace calad {

struct SpectralConfig {
  int height = 32;
  int width = 32;
  int channels = 1;
  double exponent_lo = 0.5;
  double exponent_hi = 3.5;
  std::uint64_t seed = 0;
};

void validate(const SpectralConfig& cfg);

struct ExponentPair {
  double a = 0.0;  // along fx
  double b = 0.0;  // along fy
};

struct SpectralImage {
  ImageTensor image;                    // values in [0, 1]
  std::vector<ExponentPair> exponents;  // one pair per channel
  double imaginary_residue = 0.0;       // max |Im| / max |Re| before rescaling, over channels
};

/// Signed integer frequency of DFT bin k on an axis of length n.
int centered_frequency(int k, int n);

ExponentPair draw_exponents(std::mt19937_64& rng, double lo, double hi);

/// Magnitude 1 / (|fx|^a + |fy|^b) on the DFT grid, DC set to 0.
ComplexGrid spectral_magnitude(int height, int width, ExponentPair e);

/// Per channel: draw exponents, take the phase of a uniform [0, 255] donor image,
/// impose the magnitude, symmetrize, invert and min-max rescale.
/// Throws NumericalError if the imaginary residue exceeds 1e-9.
SpectralImage synthesize(const SpectralConfig& cfg);

inline constexpr double kMaxImaginaryResidue = 1e-9;

}  // namespace calad
