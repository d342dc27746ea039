#include "calad/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "calad/errors.hpp"

namespace calad {

std::vector<LayerView> layer_layout(const MlpSpec& spec) {
  std::vector<LayerView> layers;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    LayerView v;
    v.in = spec.widths[l];
    v.out = spec.widths[l + 1];
    v.weight_offset = offset;
    offset += static_cast<std::size_t>(v.in) * v.out;
    v.has_bias = spec.use_bias;
    v.bias_offset = offset;
    if (v.has_bias) offset += static_cast<std::size_t>(v.out);
    layers.push_back(v);
  }
  return layers;
}

std::size_t parameter_count(const MlpSpec& spec) {
  std::size_t n = 0;
  for (const auto& l : layer_layout(spec)) n += static_cast<std::size_t>(l.in) * l.out + (l.has_bias ? l.out : 0);
  return n;
}

void validate(const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw std::invalid_argument("MlpSpec needs at least an input and an output width");
  for (int w : spec.widths) {
    if (w < 1) throw std::invalid_argument("MlpSpec widths must be >= 1");
  }
}

ScorerState init_scorer(const MlpSpec& spec, std::uint64_t seed) {
  validate(spec);
  ScorerState s;
  s.spec = spec;
  s.params.assign(parameter_count(spec), 0.0);
  s.frozen.assign(spec.widths.size() - 1, false);
  std::mt19937_64 rng(seed);
  for (const auto& l : layer_layout(spec)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < static_cast<std::size_t>(l.in) * l.out; ++k) s.params[l.weight_offset + k] = u(rng);
    if (l.has_bias) {
      for (int k = 0; k < l.out; ++k) s.params[l.bias_offset + k] = u(rng);
    }
  }
  return s;
}

bool has_bias_parameters(const ScorerState& s) {
  for (const auto& l : layer_layout(s.spec)) {
    if (l.has_bias) return true;
  }
  return false;
}

void freeze_all_but_last(ScorerState& s) {
  std::fill(s.frozen.begin(), s.frozen.end(), true);
  if (!s.frozen.empty()) s.frozen.back() = false;
}

namespace {

struct Cache {
  std::vector<std::vector<double>> act;  // act[0] = input, act[L] = output
  std::vector<std::vector<double>> pre;  // pre[l] for l >= 1
};

double activate(Activation a, double v) { return a == Activation::tanh ? std::tanh(v) : softplus(v); }

double activate_slope(Activation a, double pre, double post) {
  return a == Activation::tanh ? 1.0 - post * post : sigmoid(pre);
}

Cache run_forward(const ScorerState& s, std::span<const double> x) {
  if (static_cast<int>(x.size()) != s.input_width()) {
    throw std::invalid_argument("forward: input width " + std::to_string(x.size()) + " does not match network input " +
                                std::to_string(s.input_width()));
  }
  const auto layers = layer_layout(s.spec);
  Cache c;
  c.act.resize(layers.size() + 1);
  c.pre.resize(layers.size() + 1);
  c.act[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerView& v = layers[l];
    const bool last = l + 1 == layers.size();
    std::vector<double>& z = c.pre[l + 1];
    z.assign(v.out, 0.0);
    const std::vector<double>& a = c.act[l];
    for (int o = 0; o < v.out; ++o) {
      const double* w = s.params.data() + v.weight_offset + static_cast<std::size_t>(o) * v.in;
      double acc = v.has_bias ? s.params[v.bias_offset + o] : 0.0;
      for (int i = 0; i < v.in; ++i) acc += w[i] * a[i];
      z[o] = acc;
    }
    std::vector<double>& h = c.act[l + 1];
    h.resize(v.out);
    for (int o = 0; o < v.out; ++o) h[o] = last ? z[o] : activate(s.spec.activation, z[o]);
  }
  return c;
}

// Propagates dL/d act[top] down to dL/d act[0]; accumulates scale * parameter
// gradients of layers below `top` into param_grad when it is non-null.
std::vector<double> run_backward(const ScorerState& s, const Cache& c, std::size_t top, std::vector<double> grad,
                                 double* param_grad, double scale) {
  const auto layers = layer_layout(s.spec);
  for (std::size_t l = top; l-- > 0;) {
    const LayerView& v = layers[l];
    const bool last = l + 1 == layers.size();
    std::vector<double> dz(v.out);
    for (int o = 0; o < v.out; ++o) {
      dz[o] = last ? grad[o] : grad[o] * activate_slope(s.spec.activation, c.pre[l + 1][o], c.act[l + 1][o]);
    }
    if (param_grad != nullptr && !s.frozen[l]) {
      for (int o = 0; o < v.out; ++o) {
        double* gw = param_grad + v.weight_offset + static_cast<std::size_t>(o) * v.in;
        for (int i = 0; i < v.in; ++i) gw[i] += scale * dz[o] * c.act[l][i];
        if (v.has_bias) param_grad[v.bias_offset + o] += scale * dz[o];
      }
    }
    std::vector<double> below(v.in, 0.0);
    for (int o = 0; o < v.out; ++o) {
      const double* w = s.params.data() + v.weight_offset + static_cast<std::size_t>(o) * v.in;
      for (int i = 0; i < v.in; ++i) below[i] += w[i] * dz[o];
    }
    grad = std::move(below);
  }
  return grad;
}

// A scalar pre-calibration quantity u with logit z(u) and probability p(u).
struct ScalarBase {
  double z = 0.0, dz = 0.0;  // logit and dz/du
  double p = 0.5, dp = 0.0;  // probability and dp/du
};

ScalarBase base_from_probability(double p, double dp, double eps) {
  ScalarBase b;
  b.p = p;
  b.dp = dp;
  const double pc = clamp_probability(p, eps);
  b.z = logit(pc);
  b.dz = pc == p ? dp / (p * (1.0 - p)) : 0.0;
  return b;
}

struct CalibratedScalar {
  double z = 0.0;
  double dz = 0.0;  // dz/du
};

CalibratedScalar apply_calibrator(const ScalarBase& b, const PipelineCalibrator& cal, double eps) {
  if (const auto* p = std::get_if<PlattParams>(&cal)) {
    validate(*p);
    return {b.z / p->temperature + p->intercept, b.dz / p->temperature};
  }
  const auto& beta = std::get<BetaParams>(cal);
  validate(beta);
  const double pc = clamp_probability(b.p, eps);
  const double z = beta.a * std::log(pc) - beta.b * std::log1p(-pc) + beta.c;
  const double dz = pc == b.p ? (beta.a / pc + beta.b / (1.0 - pc)) * b.dp : 0.0;
  return {z, dz};
}

bool is_affine_calibrator(const PipelineCalibrator& cal) {
  return std::holds_alternative<PlattParams>(cal) || std::holds_alternative<BetaParams>(cal);
}

struct HeadResult {
  PipelineOutput out;
  std::size_t top = 0;               // activation index receiving grad_top
  std::vector<double> grad_top;      // dL / d act[top]
  std::vector<double> grad_input;    // direct dL/dx (ssim only)
};

void require_image_shape(const LossPipeline& p, std::size_t n, const char* who) {
  if (p.image_height <= 0 || p.image_width <= 0 ||
      static_cast<std::size_t>(p.image_height) * p.image_width != n) {
    throw std::invalid_argument(std::string(who) + ": image shape does not match the vector width");
  }
}

HeadResult scalar_head(const ScorerState& s, const LossPipeline& p, const Cache& c, Label y) {
  const std::size_t L = s.layer_count();
  const std::vector<double>& o = c.act[L];
  HeadResult r;
  r.top = L;
  const double yv = as_double(y);

  if (const auto* head = std::get_if<HeadParams>(&p.calibrator)) {
    r.top = p.head == OutputHead::logistic ? L - 1 : L;
    const std::vector<double>& f = c.act[r.top];
    const CalibratedValue cv = head_transform(f, *head);
    r.out.loss = logistic_loss(y, cv.logit);
    r.out.score = cv.logit;
    r.out.logit = cv.logit;
    r.out.probability = cv.probability;
    r.grad_top.resize(f.size());
    const double g = cv.probability - yv;
    for (std::size_t i = 0; i < f.size(); ++i) r.grad_top[i] = g * head->weights[i];
    return r;
  }

  // u is the scalar the network output reduces to; du/do is filled per head.
  ScalarBase base;
  double u = 0.0;
  std::vector<double> du(o.size(), 0.0);
  double dloss_du = 0.0;
  switch (p.head) {
    case OutputHead::logistic: {
      u = o[0];
      du[0] = 1.0;
      base.z = u;
      base.dz = 1.0;
      base.p = sigmoid(u);
      base.dp = base.p * (1.0 - base.p);
      r.out.loss = logistic_loss(y, u);
      dloss_du = base.p - yv;
      break;
    }
    case OutputHead::svdd: {
      u = svdd_score(o, p.center);
      for (std::size_t i = 0; i < o.size(); ++i) du[i] = 2.0 * (o[i] - p.center[i]);
      base.z = u;
      base.dz = 1.0;
      base.p = sigmoid(u);
      base.dp = base.p * (1.0 - base.p);
      r.out.loss = u;
      dloss_du = 1.0;
      break;
    }
    case OutputHead::hsc: {
      double q = 0.0;
      for (double v : o) q += v * v;
      u = p.pseudo_huber_distance ? pseudo_huber(q) : q;
      const double dq = p.pseudo_huber_distance ? 0.5 / std::sqrt(q + 1.0) : 1.0;
      for (std::size_t i = 0; i < o.size(); ++i) du[i] = dq * 2.0 * o[i];
      const double prob = -std::expm1(-u);
      base = base_from_probability(prob, 1.0 - prob, p.clamp);
      const HscEvaluation h = hsc_loss_eval(y, u, p.clamp);
      r.out.loss = h.value;
      dloss_du = y == Label::normal ? 1.0 : (h.clamped ? 0.0 : -std::exp(-u) / prob);
      break;
    }
    default:
      throw std::logic_error("scalar_head called for a localization head");
  }
  r.out.score = u;
  r.out.logit = base.z;
  r.out.probability = base.p;

  if (is_affine_calibrator(p.calibrator)) {
    const CalibratedScalar cs = apply_calibrator(base, p.calibrator, p.clamp);
    r.out.loss = logistic_loss(y, cs.z);
    r.out.score = cs.z;
    r.out.logit = cs.z;
    r.out.probability = sigmoid(cs.z);
    dloss_du = (r.out.probability - yv) * cs.dz;
  }
  r.grad_top.resize(o.size());
  for (std::size_t i = 0; i < o.size(); ++i) r.grad_top[i] = dloss_du * du[i];
  return r;
}

// Per-pixel calibrated loss shared by fcdd and ssim. Fills pixel outputs and
// returns dL/du per pixel.
Matrix calibrated_pixels(const std::vector<ScalarBase>& bases, int rows, int cols, const LossPipeline& p, Label y,
                         PipelineOutput& out) {
  const double n = static_cast<double>(bases.size());
  const double yv = as_double(y);
  Matrix grad(rows, cols);
  out.pixel_scores = Matrix(rows, cols);
  out.pixel_probabilities = Matrix(rows, cols);
  double loss = 0.0, score = 0.0, mean_prob = 0.0;
  for (std::size_t k = 0; k < bases.size(); ++k) {
    const CalibratedScalar cs = apply_calibrator(bases[k], p.calibrator, p.clamp);
    const double prob = sigmoid(cs.z);
    loss += logistic_loss(y, cs.z);
    score += softplus(cs.z);
    mean_prob += prob;
    out.pixel_scores.values[k] = cs.z;
    out.pixel_probabilities.values[k] = prob;
    grad.values[k] = (prob - yv) * cs.dz / n;
  }
  out.loss = loss / n;
  out.score = score / n;
  out.probability = mean_prob / n;
  out.logit = logit(clamp_probability(out.probability, p.clamp));
  return grad;
}

HeadResult fcdd_head(const ScorerState& s, const LossPipeline& p, const Cache& c, Label y) {
  const std::size_t L = s.layer_count();
  const std::vector<double>& o = c.act[L];
  if (p.map_height <= 0 || p.map_width <= 0 || static_cast<std::size_t>(p.map_height) * p.map_width != o.size()) {
    throw std::invalid_argument("fcdd: feature map shape does not match the network output");
  }
  HeadResult r;
  r.top = L;
  Matrix phi(p.map_height, p.map_width);
  phi.values = o;
  const Heatmap A = fcdd_heatmap(phi);
  const double v = fcdd_score(A);
  const Heatmap up = gaussian_upsample(A, p.image_height, p.image_width, p.upsample_sigma);
  const double mn = static_cast<double>(o.size());

  Matrix dA(p.map_height, p.map_width);
  if (is_affine_calibrator(p.calibrator)) {
    std::vector<ScalarBase> bases(up.size());
    for (std::size_t k = 0; k < up.size(); ++k) {
      const double prob = -std::expm1(-up.values[k]);
      bases[k] = base_from_probability(prob, 1.0 - prob, p.clamp);
    }
    const Matrix g = calibrated_pixels(bases, up.height, up.width, p, y, r.out);
    dA = gaussian_upsample_adjoint(g, p.map_height, p.map_width, p.upsample_sigma);
  } else if (std::holds_alternative<std::monostate>(p.calibrator)) {
    const HscEvaluation h = hsc_loss_eval(y, v, p.clamp);
    r.out.loss = h.value;
    r.out.score = v;
    const double prob = -std::expm1(-v);
    r.out.probability = prob;
    r.out.logit = logit(clamp_probability(prob, p.clamp));
    r.out.pixel_scores = Matrix(up.height, up.width);
    r.out.pixel_scores.values = up.values;
    r.out.pixel_probabilities = Matrix(up.height, up.width);
    for (std::size_t k = 0; k < up.size(); ++k) r.out.pixel_probabilities.values[k] = -std::expm1(-up.values[k]);
    const double dv = y == Label::normal ? 1.0 : (h.clamped ? 0.0 : -std::exp(-v) / prob);
    std::fill(dA.values.begin(), dA.values.end(), dv / mn);
  } else {
    throw std::invalid_argument("fcdd: calibration head is not supported for localization");
  }
  r.grad_top.resize(o.size());
  for (std::size_t k = 0; k < o.size(); ++k) r.grad_top[k] = dA.values[k] * o[k] / std::sqrt(o[k] * o[k] + 1.0);
  return r;
}

HeadResult ssim_head(const ScorerState& s, const LossPipeline& p, const Cache& c, Label y) {
  const std::size_t L = s.layer_count();
  const std::vector<double>& o = c.act[L];
  require_image_shape(p, o.size(), "ssim");
  require_image_shape(p, c.act[0].size(), "ssim");
  HeadResult r;
  r.top = L;
  ImageTensor P(1, p.image_height, p.image_width), Q(1, p.image_height, p.image_width);
  P.data = c.act[0];
  Q.data = o;
  const SsimLoss sl = ssim_loss(P, Q, p.ssim);
  const double n = static_cast<double>(o.size());

  Matrix upstream(p.image_height, p.image_width);
  if (is_affine_calibrator(p.calibrator)) {
    std::vector<ScalarBase> bases(o.size());
    for (std::size_t k = 0; k < o.size(); ++k) bases[k] = base_from_probability(sl.estimates.values[k], -0.5, p.clamp);
    upstream = calibrated_pixels(bases, p.image_height, p.image_width, p, y, r.out);
  } else if (std::holds_alternative<std::monostate>(p.calibrator)) {
    r.out.loss = sl.loss;
    r.out.score = sl.loss;
    r.out.probability = sl.loss / 2.0;
    r.out.logit = logit(clamp_probability(r.out.probability, p.clamp));
    r.out.pixel_scores = sl.estimates;
    r.out.pixel_probabilities = sl.estimates;
    std::fill(upstream.values.begin(), upstream.values.end(), -1.0 / n);
  } else {
    throw std::invalid_argument("ssim: calibration head is not supported for localization");
  }
  const SsimGradient g = ssim_map_backward(P, Q, p.ssim, upstream);
  r.grad_top = g.wrt_second.data;
  r.grad_input = g.wrt_first.data;
  return r;
}

HeadResult run_head(const ScorerState& s, const LossPipeline& p, const Cache& c, Label y) {
  switch (p.head) {
    case OutputHead::fcdd: return fcdd_head(s, p, c, y);
    case OutputHead::ssim: return ssim_head(s, p, c, y);
    default: return scalar_head(s, p, c, y);
  }
}

}  // namespace

std::vector<double> forward(const ScorerState& s, std::span<const double> x) {
  return run_forward(s, x).act.back();
}

std::vector<double> penultimate_features(const ScorerState& s, std::span<const double> x) {
  const Cache c = run_forward(s, x);
  return c.act[c.act.size() - 2];
}

SvddCenter init_svdd_center(const ScorerState& s, const std::vector<std::vector<double>>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("init_svdd_center: empty training set");
  SvddCenter c;
  c.center.assign(s.output_width(), 0.0);
  for (const auto& x : inputs) {
    const std::vector<double> e = forward(s, x);
    for (std::size_t i = 0; i < e.size(); ++i) c.center[i] += e[i];
  }
  double norm2 = 0.0;
  for (double& v : c.center) {
    v /= static_cast<double>(inputs.size());
    norm2 += v * v;
  }
  if (std::sqrt(norm2) < 1e-6) {
    throw NumericalError("init_svdd_center: mean embedding is within 1e-6 of the origin; "
                         "re-initialize the network with a different seed");
  }
  return c;
}

OutputHead output_head_for(BaseLoss loss) {
  switch (loss) {
    case BaseLoss::logistic: return OutputHead::logistic;
    case BaseLoss::svdd: return OutputHead::svdd;
    case BaseLoss::hsc: return OutputHead::hsc;
    case BaseLoss::fcdd: return OutputHead::fcdd;
    case BaseLoss::ssim: return OutputHead::ssim;
    case BaseLoss::log: break;
  }
  throw std::invalid_argument("log loss needs a probability output; use 'logistic' for networks");
}

bool is_supervised(OutputHead head) {
  return head == OutputHead::logistic || head == OutputHead::hsc || head == OutputHead::fcdd;
}

bool is_localization(OutputHead head) { return head == OutputHead::fcdd || head == OutputHead::ssim; }

PipelineOutput evaluate(const ScorerState& s, const LossPipeline& pipeline, std::span<const double> x, Label y) {
  const Cache c = run_forward(s, x);
  return run_head(s, pipeline, c, y).out;
}

std::vector<double> input_gradient(const ScorerState& s, const LossPipeline& pipeline, std::span<const double> x,
                                   Label y) {
  const Cache c = run_forward(s, x);
  HeadResult h = run_head(s, pipeline, c, y);
  std::vector<double> g = run_backward(s, c, h.top, std::move(h.grad_top), nullptr, 0.0);
  for (std::size_t i = 0; i < h.grad_input.size(); ++i) g[i] += h.grad_input[i];
  return g;
}

ParamGradient param_gradient(const ScorerState& s, const LossPipeline& pipeline, const LabeledData& batch) {
  if (batch.inputs.empty()) throw std::invalid_argument("param_gradient: empty batch");
  if (batch.labels.size() != batch.inputs.size()) throw std::invalid_argument("param_gradient: label count mismatch");
  ParamGradient out;
  out.gradient.assign(s.params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.inputs.size());
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    const Cache c = run_forward(s, batch.inputs[i]);
    HeadResult h = run_head(s, pipeline, c, batch.labels[i]);
    out.loss += h.out.loss * scale;
    run_backward(s, c, h.top, std::move(h.grad_top), out.gradient.data(), scale);
  }
  return out;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be >= 0");
  if (!(cfg.decay > 0.0)) throw std::invalid_argument("TrainConfig: decay must be positive");
  if (cfg.epochs < 0 || cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: bad epochs or batch size");
  if (!std::is_sorted(cfg.milestones.begin(), cfg.milestones.end())) {
    throw std::invalid_argument("TrainConfig: milestones must be sorted");
  }
}

ScorerState train(ScorerState s, const LossPipeline& pipeline, const LabeledData& data, const TrainConfig& cfg,
                  TrainReport* report) {
  validate(cfg);
  std::vector<std::size_t> normals, anomalies;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (data.labels[i] == Label::anomalous ? anomalies : normals).push_back(i);
  }
  const bool supervised = is_supervised(pipeline.head) || !std::holds_alternative<std::monostate>(pipeline.calibrator);
  if (normals.empty()) throw std::invalid_argument("train: no normal samples");
  if (supervised && anomalies.empty()) throw std::invalid_argument("train: supervised loss needs both classes");

  const auto mean_loss = [&](const std::vector<std::size_t>& idx) {
    double total = 0.0;
    for (std::size_t i : idx) total += evaluate(s, pipeline, data.inputs[i], data.labels[i]).loss;
    return total / static_cast<double>(idx.size());
  };
  std::vector<std::size_t> pool = normals;
  if (supervised) pool.insert(pool.end(), anomalies.begin(), anomalies.end());
  if (report) {
    report->initial_loss = mean_loss(pool);
    report->epoch_losses.clear();
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> m(s.params.size(), 0.0), v(s.params.size(), 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, stabilizer = 1e-8;
  long step = 0;
  const auto layers = layer_layout(s.spec);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double rate = cfg.learning_rate;
    for (int milestone : cfg.milestones) {
      if (epoch >= milestone) rate *= cfg.decay;
    }
    std::vector<std::size_t> order_n = normals;
    std::shuffle(order_n.begin(), order_n.end(), rng);
    std::vector<std::size_t> order_a = anomalies;
    std::shuffle(order_a.begin(), order_a.end(), rng);

    const std::size_t per_class = supervised ? std::max<std::size_t>(1, cfg.batch_size / 2) : cfg.batch_size;
    std::size_t a_cursor = 0;
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t start = 0; start < order_n.size(); start += per_class) {
      LabeledData batch;
      const std::size_t end = std::min(order_n.size(), start + per_class);
      for (std::size_t k = start; k < end; ++k) {
        batch.inputs.push_back(data.inputs[order_n[k]]);
        batch.labels.push_back(Label::normal);
      }
      if (supervised) {
        for (std::size_t k = start; k < end; ++k) {
          if (a_cursor == order_a.size()) {
            std::shuffle(order_a.begin(), order_a.end(), rng);
            a_cursor = 0;
          }
          batch.inputs.push_back(data.inputs[order_a[a_cursor++]]);
          batch.labels.push_back(Label::anomalous);
        }
      }
      const ParamGradient g = param_gradient(s, pipeline, batch);
      epoch_loss += g.loss * static_cast<double>(batch.size());
      epoch_count += batch.size();
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < layers.size(); ++l) {
        if (s.frozen[l]) continue;
        const std::size_t begin = layers[l].weight_offset;
        const std::size_t stop = layers[l].has_bias ? layers[l].bias_offset + layers[l].out
                                                    : begin + static_cast<std::size_t>(layers[l].in) * layers[l].out;
        for (std::size_t k = begin; k < stop; ++k) {
          m[k] = beta1 * m[k] + (1.0 - beta1) * g.gradient[k];
          v[k] = beta2 * v[k] + (1.0 - beta2) * g.gradient[k] * g.gradient[k];
          s.params[k] -= rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + stabilizer);
        }
      }
    }
    if (report) report->epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_count));
  }
  for (double p : s.params) {
    if (!std::isfinite(p)) throw NumericalError("train: parameters became non-finite");
  }
  return s;
}

}  // namespace calad
