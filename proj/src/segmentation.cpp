#include "calad/segmentation.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace calad {

namespace {

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(what) + ": image shapes differ");
  }
}

void require_single_channel(const ImageTensor& a, const char* what) {
  if (a.channels != 1) throw std::invalid_argument(std::string(what) + ": expected a single channel");
}

// Summed-area table over a padded single-channel plane, (H+1) x (W+1).
struct Integral {
  int H = 0, W = 0;
  std::vector<double> s;
  double box(int i0, int j0, int n) const {
    const auto idx = [&](int i, int j) { return static_cast<std::size_t>(i) * (W + 1) + j; };
    return s[idx(i0 + n, j0 + n)] - s[idx(i0, j0 + n)] - s[idx(i0 + n, j0)] + s[idx(i0, j0)];
  }
};

template <typename F>
Integral integrate(int H, int W, F value) {
  Integral t;
  t.H = H;
  t.W = W;
  t.s.assign(static_cast<std::size_t>(H + 1) * (W + 1), 0.0);
  for (int i = 0; i < H; ++i) {
    double row = 0.0;
    for (int j = 0; j < W; ++j) {
      row += value(i, j);
      t.s[static_cast<std::size_t>(i + 1) * (W + 1) + j + 1] = t.s[static_cast<std::size_t>(i) * (W + 1) + j + 1] + row;
    }
  }
  return t;
}

struct WindowStats {
  double mp, mq, vp, vq, cpq;
};

// Partial derivatives of SSIM with respect to its window statistics.
struct SsimPartials {
  double value, d_mp, d_mq, d_vp, d_vq, d_cpq;
};

SsimPartials ssim_partials(const WindowStats& w, double c1, double c2) {
  const double A = 2.0 * w.mp * w.mq + c1;
  const double B = 2.0 * w.cpq + c2;
  const double C = w.mp * w.mp + w.mq * w.mq + c1;
  const double D = w.vp + w.vq + c2;
  const double S = A * B / (C * D);
  SsimPartials d;
  d.value = S;
  d.d_mp = 2.0 * w.mq * B / (C * D) - S * 2.0 * w.mp / C;
  d.d_mq = 2.0 * w.mp * B / (C * D) - S * 2.0 * w.mq / C;
  d.d_vp = -S / D;
  d.d_vq = -S / D;
  d.d_cpq = 2.0 * A / (C * D);
  return d;
}

double padded(const ImageTensor& img, int i, int j, int pad, double pad_value) {
  const int r = i - pad;
  const int c = j - pad;
  if (r < 0 || c < 0 || r >= img.height || c >= img.width) return pad_value;
  return img.at(0, r, c);
}

std::vector<double> axis_kernel(int radius, double sigma) {
  std::vector<double> k(2 * radius + 1);
  for (int d = -radius; d <= radius; ++d) k[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
  return k;
}

}  // namespace

void validate_image(const ImageTensor& image) {
  if (image.channels <= 0 || image.height <= 0 || image.width <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  if (image.data.size() != static_cast<std::size_t>(image.channels) * image.height * image.width) {
    throw std::invalid_argument("image data length does not match its shape");
  }
  for (double v : image.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("image contains non-finite values");
  }
}

void validate_heatmap(const Heatmap& heatmap) {
  if (heatmap.values.size() != static_cast<std::size_t>(heatmap.height) * heatmap.width) {
    throw std::invalid_argument("heatmap data length does not match its shape");
  }
  for (double v : heatmap.values) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("heatmap values must be finite and >= 0");
  }
}

ImageTensor to_grayscale(const ImageTensor& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw std::invalid_argument("grayscale conversion needs 1 or 3 channels");
  ImageTensor out(1, image.height, image.width);
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      out.at(0, i, j) = 0.299 * image.at(0, i, j) + 0.587 * image.at(1, i, j) + 0.114 * image.at(2, i, j);
    }
  }
  return out;
}

void validate(const SsimConfig& cfg) {
  if (cfg.window <= 0 || cfg.window % 2 == 0) throw std::invalid_argument("SSIM window must be odd and positive");
  if (cfg.pad != (cfg.window - 1) / 2) throw std::invalid_argument("SSIM pad must equal (window - 1) / 2");
  if (!(cfg.c1 > 0.0) || !(cfg.c2 > 0.0)) throw std::invalid_argument("SSIM stabilizers must be positive");
}

double ssim_patch(std::span<const double> p, std::span<const double> q, double c1, double c2) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("ssim_patch: patch shapes differ");
  const double n = static_cast<double>(p.size());
  double mp = 0.0, mq = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    mp += p[k];
    mq += q[k];
  }
  mp /= n;
  mq /= n;
  double vp = 0.0, vq = 0.0, cpq = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    vp += (p[k] - mp) * (p[k] - mp);
    vq += (q[k] - mq) * (q[k] - mq);
    cpq += (p[k] - mp) * (q[k] - mq);
  }
  return ssim_partials({mp, mq, vp / n, vq / n, cpq / n}, c1, c2).value;
}

Matrix ssim_map(const ImageTensor& P, const ImageTensor& Q, const SsimConfig& cfg) {
  validate(cfg);
  require_same_shape(P, Q, "ssim_map");
  require_single_channel(P, "ssim_map");
  const int H = P.height + 2 * cfg.pad;
  const int W = P.width + 2 * cfg.pad;
  const auto p = [&](int i, int j) { return padded(P, i, j, cfg.pad, cfg.pad_value); };
  const auto q = [&](int i, int j) { return padded(Q, i, j, cfg.pad, cfg.pad_value); };
  // Centering by the pad value keeps the sums small and the variances accurate.
  const double c = cfg.pad_value;
  const Integral sp = integrate(H, W, [&](int i, int j) { return p(i, j) - c; });
  const Integral sq = integrate(H, W, [&](int i, int j) { return q(i, j) - c; });
  const Integral spp = integrate(H, W, [&](int i, int j) { return (p(i, j) - c) * (p(i, j) - c); });
  const Integral sqq = integrate(H, W, [&](int i, int j) { return (q(i, j) - c) * (q(i, j) - c); });
  const Integral spq = integrate(H, W, [&](int i, int j) { return (p(i, j) - c) * (q(i, j) - c); });

  const int n = cfg.window;
  const double count = static_cast<double>(n) * n;
  Matrix out(P.height, P.width);
  for (int i = 0; i < P.height; ++i) {
    for (int j = 0; j < P.width; ++j) {
      const double mp = sp.box(i, j, n) / count;
      const double mq = sq.box(i, j, n) / count;
      WindowStats w;
      w.mp = mp + c;
      w.mq = mq + c;
      w.vp = std::max(spp.box(i, j, n) / count - mp * mp, 0.0);
      w.vq = std::max(sqq.box(i, j, n) / count - mq * mq, 0.0);
      w.cpq = spq.box(i, j, n) / count - mp * mq;
      out.at(i, j) = ssim_partials(w, cfg.c1, cfg.c2).value;
    }
  }
  return out;
}

SsimGradient ssim_map_backward(const ImageTensor& P, const ImageTensor& Q, const SsimConfig& cfg,
                               const Matrix& upstream) {
  validate(cfg);
  require_same_shape(P, Q, "ssim_map_backward");
  require_single_channel(P, "ssim_map_backward");
  if (upstream.rows != P.height || upstream.cols != P.width) {
    throw std::invalid_argument("ssim_map_backward: upstream gradient shape differs from image");
  }
  SsimGradient g{ImageTensor(1, P.height, P.width), ImageTensor(1, P.height, P.width)};
  const int n = cfg.window;
  const double count = static_cast<double>(n) * n;
  std::vector<double> pw(static_cast<std::size_t>(n) * n), qw(pw.size());
  for (int i = 0; i < P.height; ++i) {
    for (int j = 0; j < P.width; ++j) {
      const double up = upstream.at(i, j);
      if (up == 0.0) continue;
      WindowStats w{0, 0, 0, 0, 0};
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          const std::size_t k = static_cast<std::size_t>(a) * n + b;
          pw[k] = padded(P, i + a, j + b, cfg.pad, cfg.pad_value);
          qw[k] = padded(Q, i + a, j + b, cfg.pad, cfg.pad_value);
          w.mp += pw[k];
          w.mq += qw[k];
        }
      }
      w.mp /= count;
      w.mq /= count;
      for (std::size_t k = 0; k < pw.size(); ++k) {
        w.vp += (pw[k] - w.mp) * (pw[k] - w.mp);
        w.vq += (qw[k] - w.mq) * (qw[k] - w.mq);
        w.cpq += (pw[k] - w.mp) * (qw[k] - w.mq);
      }
      w.vp /= count;
      w.vq /= count;
      w.cpq /= count;
      const SsimPartials d = ssim_partials(w, cfg.c1, cfg.c2);
      for (int a = 0; a < n; ++a) {
        const int r = i + a - cfg.pad;
        if (r < 0 || r >= P.height) continue;
        for (int b = 0; b < n; ++b) {
          const int c = j + b - cfg.pad;
          if (c < 0 || c >= P.width) continue;
          const std::size_t k = static_cast<std::size_t>(a) * n + b;
          const double dp = d.d_mp + 2.0 * (pw[k] - w.mp) * d.d_vp + (qw[k] - w.mq) * d.d_cpq;
          const double dq = d.d_mq + 2.0 * (qw[k] - w.mq) * d.d_vq + (pw[k] - w.mp) * d.d_cpq;
          g.wrt_first.at(0, r, c) += up * dp / count;
          g.wrt_second.at(0, r, c) += up * dq / count;
        }
      }
    }
  }
  return g;
}

SsimLoss ssim_loss(const ImageTensor& x, const ImageTensor& recon, const SsimConfig& cfg) {
  SsimLoss out;
  out.similarity = ssim_map(x, recon, cfg);
  out.estimates = Matrix(out.similarity.rows, out.similarity.cols);
  double total = 0.0;
  for (std::size_t k = 0; k < out.similarity.size(); ++k) {
    const double s = out.similarity.values[k];
    total += 1.0 - s;
    out.estimates.values[k] = (1.0 - s) / 2.0;
  }
  out.loss = total / static_cast<double>(out.similarity.size());
  return out;
}

Matrix pixel_logits(const Matrix& estimates, double eps) {
  Matrix z(estimates.rows, estimates.cols);
  for (std::size_t k = 0; k < estimates.size(); ++k) z.values[k] = logit(clamp_probability(estimates.values[k], eps));
  return z;
}

Heatmap fcdd_heatmap(const Matrix& features) {
  Heatmap A(features.rows, features.cols);
  for (std::size_t k = 0; k < features.size(); ++k) {
    const double f = features.values[k];
    if (!std::isfinite(f)) throw std::invalid_argument("fcdd_heatmap: non-finite feature");
    A.values[k] = pseudo_huber(f * f);
  }
  return A;
}

double fcdd_score(const Heatmap& heatmap) {
  if (heatmap.values.empty()) throw std::invalid_argument("fcdd_score: empty heatmap");
  double s = 0.0;
  for (double v : heatmap.values) s += v;
  return s / static_cast<double>(heatmap.values.size());
}

UpsampleGeometry upsample_geometry(int in_h, int in_w, int out_h, int out_w) {
  if (in_h <= 0 || in_w <= 0 || out_h < in_h || out_w < in_w || out_h % in_h != 0 || out_w % in_w != 0) {
    throw std::invalid_argument("gaussian_upsample: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                                " must be an integer multiple of input " + std::to_string(in_h) + "x" +
                                std::to_string(in_w));
  }
  UpsampleGeometry g;
  g.stride_y = out_h / in_h;
  g.stride_x = out_w / in_w;
  g.radius_y = 2 * g.stride_y;
  g.radius_x = 2 * g.stride_x;
  return g;
}

namespace {

// Shared kernel for the forward map and its adjoint: calls f(in_i, in_j, out_y, out_x, weight).
template <typename F>
void for_each_tap(int in_h, int in_w, int out_h, int out_w, double sigma, F f) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_upsample: sigma must be positive");
  const UpsampleGeometry g = upsample_geometry(in_h, in_w, out_h, out_w);
  const std::vector<double> ky = axis_kernel(g.radius_y, sigma);
  const std::vector<double> kx = axis_kernel(g.radius_x, sigma);
  double total = 0.0;
  for (double a : ky)
    for (double b : kx) total += a * b;
  for (int i = 0; i < in_h; ++i) {
    const int cy = i * g.stride_y + g.stride_y / 2;
    for (int j = 0; j < in_w; ++j) {
      const int cx = j * g.stride_x + g.stride_x / 2;
      for (int dy = -g.radius_y; dy <= g.radius_y; ++dy) {
        const int y = cy + dy;
        if (y < 0 || y >= out_h) continue;
        for (int dx = -g.radius_x; dx <= g.radius_x; ++dx) {
          const int x = cx + dx;
          if (x < 0 || x >= out_w) continue;
          f(i, j, y, x, ky[dy + g.radius_y] * kx[dx + g.radius_x] / total);
        }
      }
    }
  }
}

}  // namespace

Heatmap gaussian_upsample(const Heatmap& A, int out_h, int out_w, double sigma) {
  Heatmap out(out_h, out_w);
  for_each_tap(A.height, A.width, out_h, out_w, sigma,
               [&](int i, int j, int y, int x, double w) { out.at(y, x) += w * A.at(i, j); });
  return out;
}

Matrix gaussian_upsample_adjoint(const Matrix& grad_out, int in_h, int in_w, double sigma) {
  Matrix out(in_h, in_w);
  for_each_tap(in_h, in_w, grad_out.rows, grad_out.cols, sigma,
               [&](int i, int j, int y, int x, double w) { out.at(i, j) += w * grad_out.at(y, x); });
  return out;
}

double pixelwise_loss(const LabelMask& masks, const Matrix& estimates, const LossSpec& reference) {
  if (masks.height != estimates.rows || masks.width != estimates.cols) {
    throw std::invalid_argument("pixelwise_loss: mask and estimate shapes differ");
  }
  if (masks.labels.empty()) throw std::invalid_argument("pixelwise_loss: empty mask");
  double total = 0.0;
  for (std::size_t k = 0; k < masks.size(); ++k) total += reference(masks.labels[k], estimates.values[k]);
  return total / static_cast<double>(masks.size());
}

}  // namespace calad
