#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace calad {

/// Binary class label: 0 = normal, 1 = anomalous.
enum class Label : std::uint8_t { normal = 0, anomalous = 1 };

inline double as_double(Label y) { return y == Label::anomalous ? 1.0 : 0.0; }
Label label_from_int(long long v);

/// Global default for clamping probability estimates away from {0, 1} before
/// taking logarithms.
inline constexpr double kDefaultClamp = 1e-7;

double clamp_probability(double eta_hat, double eps = kDefaultClamp);

double sigmoid(double v);
/// Inverse of sigmoid; throws DomainError unless 0 < eta_hat < 1.
double logit(double eta_hat);
/// Numerically stable ln(1 + e^v).
double softplus(double v);

enum class LinkDirection { to_prob, to_logit };
double link_pair(double value, LinkDirection direction);

double log_loss(Label y, double eta_hat, double eps = kDefaultClamp);
double logistic_loss(Label y, double v);

struct HscEvaluation {
  double value = 0.0;
  bool clamped = false;  // 1 - e^{-v} fell below the clamp for y = 1
};

/// Hypersphere-classifier loss: log loss composed with eta = 1 - e^{-v}, v >= 0.
HscEvaluation hsc_loss_eval(Label y, double v, double eps = kDefaultClamp);
double hsc_loss(Label y, double v, double eps = kDefaultClamp);

double pseudo_huber(double sq_norm);

/// Squared Euclidean distance; throws std::invalid_argument on size mismatch.
double svdd_score(std::span<const double> embedding, std::span<const double> center);

/// Invertible link psi: [0,1] -> prediction space.
struct Link {
  std::function<double(double)> to_prediction;   // psi
  std::function<double(double)> to_probability;  // psi^{-1}
};

/// A binary CPE loss given by its partial losses. With a link, the partials act on
/// the prediction space and the CPE partials are lambda_y(psi(eta_hat)).
struct LossSpec {
  std::string name;
  std::function<double(double)> partial0;
  std::function<double(double)> partial1;
  std::optional<Link> link;

  /// l_y(eta_hat) in probability space.
  double partial(Label y, double eta_hat) const;
  double operator()(Label y, double eta_hat) const { return partial(y, eta_hat); }
};

LossSpec make_log_loss(double eps = kDefaultClamp);
LossSpec make_logistic_loss();
LossSpec make_hsc_loss(double eps = kDefaultClamp);

/// {0.01, 0.02, ..., 0.99}
std::vector<double> propriety_probe_grid();

/// Checks finiteness of both partials and the link round trip (1e-10) on the
/// probe grid. Throws std::invalid_argument describing the first violation.
void validate_loss_spec(const LossSpec& loss);

/// Names accepted by the loss registry.
enum class BaseLoss { log, logistic, hsc, svdd, fcdd, ssim };
BaseLoss parse_base_loss(std::string_view name);
std::string_view to_string(BaseLoss loss);
/// CPE losses only (log, logistic, hsc); others throw std::invalid_argument.
LossSpec cpe_loss(BaseLoss loss);

double conditional_risk(double eta, double eta_hat, const LossSpec& loss);

struct RiskDecomposition {
  double entropy_term = 0.0;
  double calibration_term = 0.0;
  double total = 0.0;
};
RiskDecomposition risk_decomposition(double eta, double eta_hat, const LossSpec& loss);

inline constexpr double kStationarityStep = 1e-5;
inline constexpr double kStationarityTolerance = 1e-4;

struct StationarityProbe {
  double eta = 0.0;
  double residual = 0.0;  // (1 - eta) l0'(eta) + eta l1'(eta)
  bool finite = true;
};
std::vector<StationarityProbe> check_stationarity(const LossSpec& loss,
                                                  std::span<const double> eta_grid,
                                                  double step = kStationarityStep);

struct CurvatureProbe {
  double eta = 0.0;
  double second_derivative = 0.0;  // d^2 L(eta, eta_hat) / d eta_hat^2 at eta_hat = eta
};
std::vector<CurvatureProbe> check_strict_propriety(const LossSpec& loss,
                                                   std::span<const double> eta_grid,
                                                   double step = kStationarityStep);

}  // namespace calad
