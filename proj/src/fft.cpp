#include "calad/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <stdexcept>

namespace calad {

namespace {

// FFTW planning is not thread-safe; execution on a private plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

ComplexGrid transform2(const ComplexGrid& grid, int sign) {
  if (grid.rows <= 0 || grid.cols <= 0) throw std::invalid_argument("dft2: empty grid");
  if (grid.values.size() != static_cast<std::size_t>(grid.rows) * grid.cols) {
    throw std::invalid_argument("dft2: value count does not match shape");
  }
  ComplexGrid out(grid.rows, grid.cols);
  ComplexGrid in = grid;
  auto* src = reinterpret_cast<fftw_complex*>(in.values.data());
  auto* dst = reinterpret_cast<fftw_complex*>(out.values.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_2d(grid.rows, grid.cols, src, dst, sign, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw std::runtime_error("dft2: planning failed");
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

}  // namespace

ComplexGrid dft2(const ComplexGrid& grid) { return transform2(grid, FFTW_FORWARD); }

ComplexGrid idft2(const ComplexGrid& grid) {
  ComplexGrid out = transform2(grid, FFTW_BACKWARD);
  const double scale = 1.0 / (static_cast<double>(grid.rows) * grid.cols);
  for (Complex& c : out.values) c *= scale;
  return out;
}

}  // namespace calad
