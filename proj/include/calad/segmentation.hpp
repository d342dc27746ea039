#pragma once

#include <span>
#include <vector>

#include "calad/losses.hpp"
#include "calad/tensor.hpp"

namespace calad {

void validate_image(const ImageTensor& image);
void validate_heatmap(const Heatmap& heatmap);

/// Luminance-weighted grayscale (0.299, 0.587, 0.114); single-channel input is copied.
ImageTensor to_grayscale(const ImageTensor& image);

struct SsimConfig {
  int window = 11;
  int pad = 5;
  double pad_value = 0.0;
  double c1 = 1e-4;  // (0.01 L)^2, L = 1
  double c2 = 9e-4;  // (0.03 L)^2
};
/// Throws std::invalid_argument unless window is odd and pad = (window - 1) / 2.
void validate(const SsimConfig& cfg);

double ssim_patch(std::span<const double> p, std::span<const double> q, double c1, double c2);

/// Sliding-window SSIM after constant padding; output is h x w. Single channel only.
Matrix ssim_map(const ImageTensor& P, const ImageTensor& Q, const SsimConfig& cfg);

struct SsimGradient {
  ImageTensor wrt_first;
  ImageTensor wrt_second;
};
/// Vector-Jacobian product of ssim_map: given dL/dS, returns dL/dP and dL/dQ.
SsimGradient ssim_map_backward(const ImageTensor& P, const ImageTensor& Q, const SsimConfig& cfg,
                               const Matrix& upstream);

struct SsimLoss {
  double loss = 0.0;
  Matrix similarity;
  Matrix estimates;  // per-pixel (1 - S) / 2
};
SsimLoss ssim_loss(const ImageTensor& x, const ImageTensor& recon, const SsimConfig& cfg);

/// Element-wise logit of clamped probability estimates.
Matrix pixel_logits(const Matrix& estimates, double eps = kDefaultClamp);

Heatmap fcdd_heatmap(const Matrix& features);
/// v = mean of the heatmap, the input to hsc_loss.
double fcdd_score(const Heatmap& heatmap);

struct UpsampleGeometry {
  int stride_y = 1;
  int stride_x = 1;
  int radius_y = 2;  // kernel extent is 2 * radius + 1 = 4 * stride + 1
  int radius_x = 2;
};
UpsampleGeometry upsample_geometry(int in_h, int in_w, int out_h, int out_w);

/// Transposed convolution with a fixed, normalized, truncated Gaussian kernel.
/// Output extents must be integer multiples of the input extents.
Heatmap gaussian_upsample(const Heatmap& A, int out_h, int out_w, double sigma);
/// Adjoint of gaussian_upsample for the same geometry.
Matrix gaussian_upsample_adjoint(const Matrix& grad_out, int in_h, int in_w, double sigma);

double pixelwise_loss(const LabelMask& masks, const Matrix& estimates, const LossSpec& reference);

}  // namespace calad
