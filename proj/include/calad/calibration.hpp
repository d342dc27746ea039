#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "calad/losses.hpp"
#include "calad/tensor.hpp"

namespace calad {

/// z_P = z / T + c
struct PlattParams {
  double temperature = 1.0;
  double intercept = 0.0;
};

/// z_beta = a ln(eta) - b ln(1 - eta) + c
struct BetaParams {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;
};

/// Affine map over frozen features followed by the sigmoid.
struct HeadParams {
  std::vector<double> weights;
  double bias = 0.0;
};

struct CalibratedValue {
  double logit = 0.0;
  double probability = 0.5;
};

void validate(const PlattParams& p);
void validate(const BetaParams& p);

CalibratedValue platt_transform(double z, const PlattParams& p);
CalibratedValue beta_transform(double eta_hat, const BetaParams& p, double eps = kDefaultClamp);
CalibratedValue head_transform(std::span<const double> features, const HeadParams& p);

struct OptimizerConfig {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
  std::uint64_t seed = 0;  // head weight re-initialization
};

double mean_platt_loss(std::span<const double> logits, std::span<const Label> labels, const PlattParams& p);
double mean_beta_loss(std::span<const double> estimates, std::span<const Label> labels, const BetaParams& p,
                      double eps = kDefaultClamp);
double mean_head_loss(const Matrix& features, std::span<const Label> labels, const HeadParams& p);

/// Minimizes mean logistic loss of z / T + c. T is optimized on a log scale.
PlattParams fit_platt(std::span<const double> logits, std::span<const Label> labels, const OptimizerConfig& opt = {});
/// Minimizes mean logistic loss of the beta map; a, b are exponentials of free parameters.
BetaParams fit_beta(std::span<const double> estimates, std::span<const Label> labels, const OptimizerConfig& opt = {},
                    double eps = kDefaultClamp);
/// Logistic regression over the rows of `features` (n x d), weights re-initialized from opt.seed.
HeadParams fit_head(const Matrix& features, std::span<const Label> labels, const OptimizerConfig& opt = {});

// Reliability measurement.

struct ReliabilityBin {
  double lower = 0.0;  // exclusive, except bin 0 also holds exactly 0
  double upper = 0.0;  // inclusive
  std::size_t count = 0;
  double freq = 0.0;  // empirical frequency of y = 1
  double conf = 0.0;  // mean estimate
};

struct ReliabilityHistogram {
  std::vector<ReliabilityBin> bins;
  std::size_t n = 0;
  int bin_count() const { return static_cast<int>(bins.size()); }
};

inline constexpr int kDefaultBins = 15;

/// Index of the bin (k/K, (k+1)/K] holding p; p = 0 goes to bin 0.
int reliability_bin_index(double p, int K);
ReliabilityHistogram reliability(std::span<const double> preds, std::span<const Label> labels,
                                 int K = kDefaultBins);
double ece(const ReliabilityHistogram& hist);
double mce(const ReliabilityHistogram& hist);

// Fitted-parameter documents.

using CalibratorParams = std::variant<PlattParams, BetaParams, HeadParams>;

struct CalibratorDocument {
  CalibratorParams params;
  std::uint64_t seed = 0;
  std::string fitting_digest;
};

/// FNV-1a 64 digest over the fitting samples, as 16 hex digits.
std::string fitting_digest(std::span<const double> values, std::span<const Label> labels);
std::string_view calibrator_kind(const CalibratorParams& params);
std::string serialize(const CalibratorDocument& doc);
/// Throws DataError on malformed documents.
CalibratorDocument parse_calibrator_document(std::string_view text);

}  // namespace calad
