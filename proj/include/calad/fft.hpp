#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace calad {

using Complex = std::complex<double>;

struct ComplexGrid {
  int rows = 0;
  int cols = 0;
  std::vector<Complex> values;

  ComplexGrid() = default;
  ComplexGrid(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c) {}

  Complex& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols + j]; }
  const Complex& at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
};

/// Forward 2-D DFT, X(k,l) = sum x(m,n) e^{-2 pi i (km/R + ln/C)}. Any rectangular size.
ComplexGrid dft2(const ComplexGrid& grid);

/// Inverse of dft2, scaled by 1/(R C).
ComplexGrid idft2(const ComplexGrid& grid);

}  // namespace calad
