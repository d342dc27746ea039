#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "calad/scorer.hpp"

namespace probe {

struct Architecture {
  std::string name;
  calad::ScorerState state;
  calad::LossPipeline pipeline;
};

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// One entry per head and calibrator combination the harness can build.
inline std::vector<Architecture> architectures() {
  using namespace calad;
  std::vector<Architecture> out;
  std::mt19937_64 rng(99);
  const auto mlp = [](std::vector<int> w, bool bias, Activation a = Activation::tanh) {
    return MlpSpec{std::move(w), a, bias};
  };

  LossPipeline logistic;
  logistic.head = OutputHead::logistic;
  out.push_back({"logistic", init_scorer(mlp({5, 7, 4, 1}, true), 1), logistic});
  out.push_back({"logistic softplus", init_scorer(mlp({5, 6, 1}, true, Activation::softplus), 2), logistic});
  LossPipeline logistic_platt = logistic;
  logistic_platt.calibrator = PlattParams{1.7, -0.3};
  out.push_back({"logistic + platt", init_scorer(mlp({5, 7, 1}, true), 3), logistic_platt});
  LossPipeline logistic_head = logistic;
  logistic_head.calibrator = HeadParams{{0.4, -0.6, 0.2, 0.9}, 0.1};
  out.push_back({"logistic + head", init_scorer(mlp({5, 4, 1}, true), 4), logistic_head});

  LossPipeline svdd;
  svdd.head = OutputHead::svdd;
  svdd.center = {0.3, -0.2, 0.5};
  out.push_back({"svdd", init_scorer(mlp({4, 8, 3}, false), 5), svdd});
  LossPipeline svdd_platt = svdd;
  svdd_platt.calibrator = PlattParams{0.8, -1.2};
  out.push_back({"svdd + platt", init_scorer(mlp({4, 8, 3}, false), 6), svdd_platt});
  LossPipeline svdd_beta = svdd;
  svdd_beta.calibrator = BetaParams{1.3, 0.7, -0.4};
  out.push_back({"svdd + beta", init_scorer(mlp({4, 8, 3}, false), 7), svdd_beta});
  LossPipeline svdd_head = svdd;
  svdd_head.calibrator = HeadParams{{0.5, -0.4, 0.3}, -0.2};
  out.push_back({"svdd + head", init_scorer(mlp({4, 8, 3}, false), 8), svdd_head});

  LossPipeline hsc;
  hsc.head = OutputHead::hsc;
  out.push_back({"hsc", init_scorer(mlp({4, 6, 3}, true), 9), hsc});
  LossPipeline hsc_sq = hsc;
  hsc_sq.pseudo_huber_distance = false;
  out.push_back({"hsc squared", init_scorer(mlp({4, 6, 3}, true), 10), hsc_sq});
  LossPipeline hsc_beta = hsc;
  hsc_beta.calibrator = BetaParams{0.9, 1.4, 0.2};
  out.push_back({"hsc + beta", init_scorer(mlp({4, 6, 3}, true), 11), hsc_beta});

  LossPipeline fcdd;
  fcdd.head = OutputHead::fcdd;
  fcdd.image_height = fcdd.image_width = 8;
  fcdd.map_height = fcdd.map_width = 2;
  fcdd.upsample_sigma = 14.0;
  out.push_back({"fcdd", init_scorer(mlp({64, 10, 4}, true), 12), fcdd});
  LossPipeline fcdd_platt = fcdd;
  fcdd_platt.calibrator = PlattParams{1.5, 0.4};
  out.push_back({"fcdd + platt", init_scorer(mlp({64, 10, 4}, true), 13), fcdd_platt});

  LossPipeline ssim;
  ssim.head = OutputHead::ssim;
  ssim.image_height = ssim.image_width = 6;
  ssim.ssim.window = 5;
  ssim.ssim.pad = 2;
  ssim.ssim.pad_value = 0.1;
  out.push_back({"ssim", init_scorer(mlp({36, 8, 36}, true), 14), ssim});
  LossPipeline ssim_beta = ssim;
  ssim_beta.calibrator = BetaParams{1.2, 0.8, 0.1};
  out.push_back({"ssim + beta", init_scorer(mlp({36, 8, 36}, true), 15), ssim_beta});
  (void)rng;
  return out;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// max |analytic - central difference| relative to max |central difference|.
inline double input_gradient_error(const Architecture& a, const std::vector<double>& x, calad::Label y,
                                   double h = 1e-6) {
  const std::vector<double> g = calad::input_gradient(a.state, a.pipeline, x, y);
  std::vector<double> fd(x.size()), diff(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> up = x, dn = x;
    up[i] += h, dn[i] -= h;
    fd[i] = (calad::evaluate(a.state, a.pipeline, up, y).loss - calad::evaluate(a.state, a.pipeline, dn, y).loss) /
            (2.0 * h);
    diff[i] = g[i] - fd[i];
  }
  return max_abs(diff) / std::max(max_abs(fd), 1e-12);
}

inline double param_gradient_error(const Architecture& a, const calad::LabeledData& batch, double h = 1e-6) {
  const calad::ParamGradient g = calad::param_gradient(a.state, a.pipeline, batch);
  const auto mean_loss = [&](const calad::ScorerState& s) {
    double t = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) t += calad::evaluate(s, a.pipeline, batch.inputs[k], batch.labels[k]).loss;
    return t / static_cast<double>(batch.size());
  };
  std::vector<double> fd(a.state.params.size()), diff(fd.size());
  for (std::size_t i = 0; i < fd.size(); ++i) {
    calad::ScorerState up = a.state, dn = a.state;
    up.params[i] += h, dn.params[i] -= h;
    fd[i] = (mean_loss(up) - mean_loss(dn)) / (2.0 * h);
    diff[i] = g.gradient[i] - fd[i];
  }
  return max_abs(diff) / std::max(max_abs(fd), 1e-12);
}

inline std::vector<double> probe_input(const Architecture& a, std::mt19937_64& rng) {
  const bool image = calad::is_localization(a.pipeline.head);
  std::vector<double> x = random_vector(static_cast<std::size_t>(a.state.input_width()), rng, image ? 0.3 : 1.0);
  if (image)
    for (double& v : x) v += 0.5;
  return x;
}

}  // namespace probe
