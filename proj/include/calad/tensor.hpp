#pragma once

#include <cstddef>
#include <vector>

#include "calad/losses.hpp"

namespace calad {

/// Dense row-major real matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
  std::size_t size() const { return values.size(); }
};

/// c x h x w image, row-major per channel.
struct ImageTensor {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  double& at(int c, int i, int j) { return data[(static_cast<std::size_t>(c) * height + i) * width + j]; }
  double at(int c, int i, int j) const { return data[(static_cast<std::size_t>(c) * height + i) * width + j]; }
  std::size_t size() const { return data.size(); }
};

/// Nonnegative per-pixel anomaly scores.
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Heatmap() = default;
  Heatmap(int h, int w, double fill = 0.0) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * width + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * width + j]; }
  std::size_t size() const { return values.size(); }
};

/// Per-pixel ground truth.
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<Label> labels;

  LabelMask() = default;
  LabelMask(int h, int w, Label fill = Label::normal)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  Label& at(int i, int j) { return labels[static_cast<std::size_t>(i) * width + j]; }
  Label at(int i, int j) const { return labels[static_cast<std::size_t>(i) * width + j]; }
  std::size_t size() const { return labels.size(); }
};

}  // namespace calad
