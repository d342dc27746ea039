#include "calad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "calad/errors.hpp"

namespace calad {

Label label_from_int(long long v) {
  if (v == 0) return Label::normal;
  if (v == 1) return Label::anomalous;
  throw std::invalid_argument("label must be 0 or 1, got " + std::to_string(v));
}

double clamp_probability(double eta_hat, double eps) {
  return std::clamp(eta_hat, eps, 1.0 - eps);
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double logit(double eta_hat) {
  if (!(eta_hat > 0.0 && eta_hat < 1.0)) {
    throw DomainError("logit requires 0 < eta_hat < 1", eta_hat);
  }
  return std::log(eta_hat) - std::log1p(-eta_hat);
}

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

double link_pair(double value, LinkDirection direction) {
  if (!std::isfinite(value)) throw DomainError("link_pair requires a finite input", value);
  return direction == LinkDirection::to_prob ? sigmoid(value) : logit(value);
}

double log_loss(Label y, double eta_hat, double eps) {
  const double p = clamp_probability(eta_hat, eps);
  return y == Label::anomalous ? -std::log(p) : -std::log1p(-p);
}

double logistic_loss(Label y, double v) {
  return y == Label::anomalous ? softplus(-v) : softplus(v);
}

HscEvaluation hsc_loss_eval(Label y, double v, double eps) {
  if (!(v >= 0.0)) throw DomainError("hsc_loss requires v >= 0", v);
  if (y == Label::normal) return {v, false};
  const double p = -std::expm1(-v);  // 1 - e^{-v}
  if (p < eps) return {-std::log(eps), true};
  return {-std::log(p), false};
}

double hsc_loss(Label y, double v, double eps) { return hsc_loss_eval(y, v, eps).value; }

double pseudo_huber(double sq_norm) {
  if (!(sq_norm >= 0.0)) throw DomainError("pseudo_huber requires sq_norm >= 0", sq_norm);
  // sqrt(s + 1) - 1 rewritten to avoid cancellation near 0
  return sq_norm / (std::sqrt(sq_norm + 1.0) + 1.0);
}

double svdd_score(std::span<const double> embedding, std::span<const double> center) {
  if (embedding.size() != center.size()) {
    throw std::invalid_argument("svdd_score: embedding has dimension " +
                                std::to_string(embedding.size()) + " but center has " +
                                std::to_string(center.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < embedding.size(); ++i) {
    const double d = embedding[i] - center[i];
    s += d * d;
  }
  return s;
}

double LossSpec::partial(Label y, double eta_hat) const {
  const double v = link ? link->to_prediction(eta_hat) : eta_hat;
  return y == Label::anomalous ? partial1(v) : partial0(v);
}

LossSpec make_log_loss(double eps) {
  LossSpec loss;
  loss.name = "log";
  loss.partial0 = [eps](double p) { return -std::log1p(-clamp_probability(p, eps)); };
  loss.partial1 = [eps](double p) { return -std::log(clamp_probability(p, eps)); };
  return loss;
}

LossSpec make_logistic_loss() {
  LossSpec loss;
  loss.name = "logistic";
  loss.partial0 = [](double v) { return softplus(v); };
  loss.partial1 = [](double v) { return softplus(-v); };
  loss.link = Link{[](double p) { return logit(p); }, [](double v) { return sigmoid(v); }};
  return loss;
}

LossSpec make_hsc_loss(double eps) {
  LossSpec loss;
  loss.name = "hsc";
  loss.partial0 = [](double v) { return v; };
  loss.partial1 = [eps](double v) { return hsc_loss(Label::anomalous, std::max(v, 0.0), eps); };
  loss.link = Link{[](double p) { return -std::log1p(-p); }, [](double v) { return -std::expm1(-v); }};
  return loss;
}

std::vector<double> propriety_probe_grid() {
  std::vector<double> grid(99);
  for (int i = 0; i < 99; ++i) grid[i] = (i + 1) / 100.0;
  return grid;
}

void validate_loss_spec(const LossSpec& loss) {
  if (!loss.partial0 || !loss.partial1) {
    throw std::invalid_argument("loss '" + loss.name + "' is missing a partial loss");
  }
  for (double p : propriety_probe_grid()) {
    const double l0 = loss.partial(Label::normal, p);
    const double l1 = loss.partial(Label::anomalous, p);
    if (!std::isfinite(l0) || !std::isfinite(l1)) {
      throw std::invalid_argument("loss '" + loss.name + "' has a non-finite partial at " +
                                  std::to_string(p));
    }
    if (loss.link) {
      const double back = loss.link->to_probability(loss.link->to_prediction(p));
      if (std::abs(back - p) > 1e-10) {
        throw std::invalid_argument("loss '" + loss.name + "' link does not round-trip at " +
                                    std::to_string(p));
      }
    }
  }
}

BaseLoss parse_base_loss(std::string_view name) {
  if (name == "log") return BaseLoss::log;
  if (name == "logistic") return BaseLoss::logistic;
  if (name == "hsc") return BaseLoss::hsc;
  if (name == "svdd") return BaseLoss::svdd;
  if (name == "fcdd") return BaseLoss::fcdd;
  if (name == "ssim") return BaseLoss::ssim;
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

std::string_view to_string(BaseLoss loss) {
  switch (loss) {
    case BaseLoss::log: return "log";
    case BaseLoss::logistic: return "logistic";
    case BaseLoss::hsc: return "hsc";
    case BaseLoss::svdd: return "svdd";
    case BaseLoss::fcdd: return "fcdd";
    case BaseLoss::ssim: return "ssim";
  }
  return "?";
}

LossSpec cpe_loss(BaseLoss loss) {
  switch (loss) {
    case BaseLoss::log: return make_log_loss();
    case BaseLoss::logistic: return make_logistic_loss();
    case BaseLoss::hsc: return make_hsc_loss();
    default:
      throw std::invalid_argument("'" + std::string(to_string(loss)) + "' is not a binary CPE loss");
  }
}

double conditional_risk(double eta, double eta_hat, const LossSpec& loss) {
  return eta * loss.partial(Label::anomalous, eta_hat) +
         (1.0 - eta) * loss.partial(Label::normal, eta_hat);
}

RiskDecomposition risk_decomposition(double eta, double eta_hat, const LossSpec& loss) {
  RiskDecomposition r;
  r.total = conditional_risk(eta, eta_hat, loss);
  r.entropy_term = conditional_risk(eta, eta, loss);
  r.calibration_term = r.total - r.entropy_term;
  return r;
}

std::vector<StationarityProbe> check_stationarity(const LossSpec& loss,
                                                  std::span<const double> eta_grid, double step) {
  std::vector<StationarityProbe> out;
  out.reserve(eta_grid.size());
  for (double eta : eta_grid) {
    const auto derivative = [&](Label y) {
      return (loss.partial(y, eta + step) - loss.partial(y, eta - step)) / (2.0 * step);
    };
    StationarityProbe probe;
    probe.eta = eta;
    probe.residual = (1.0 - eta) * derivative(Label::normal) + eta * derivative(Label::anomalous);
    probe.finite = std::isfinite(probe.residual);
    out.push_back(probe);
  }
  return out;
}

std::vector<CurvatureProbe> check_strict_propriety(const LossSpec& loss,
                                                   std::span<const double> eta_grid, double step) {
  std::vector<CurvatureProbe> out;
  out.reserve(eta_grid.size());
  for (double eta : eta_grid) {
    const double up = conditional_risk(eta, eta + step, loss);
    const double mid = conditional_risk(eta, eta, loss);
    const double down = conditional_risk(eta, eta - step, loss);
    out.push_back({eta, (up - 2.0 * mid + down) / (step * step)});
  }
  return out;
}

}  // namespace calad
