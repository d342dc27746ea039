#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "calad/calibration.hpp"
#include "calad/scorer.hpp"

namespace calad {

inline constexpr double kDefaultPerturbEpsilon = 1.4e-3;

struct PerturbConfig {
  double epsilon = kDefaultPerturbEpsilon;
  Label target_label = Label::normal;  // label used in the perturbation loss
  bool through_calibrator = true;      // false: gradient of the base loss only
};

/// x - epsilon * sgn(grad), with sgn(0) = 0.
std::vector<double> perturb(std::span<const double> x, std::span<const double> grad, const PerturbConfig& cfg);

/// Perturbs x against the pipeline loss at cfg.target_label.
std::vector<double> perturb_input(const ScorerState& s, const LossPipeline& pipeline, std::span<const double> x,
                                  const PerturbConfig& cfg);

struct MetricSuite {
  double auroc = 0.0;
  double ece = 0.0;
  double mce = 0.0;
};

struct SampleDelta {
  std::size_t id = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double score_before = 0.0;
  double score_after = 0.0;
};

struct PairedEvaluation {
  MetricSuite unperturbed;
  MetricSuite perturbed;
  std::vector<SampleDelta> deltas;
  std::vector<PipelineOutput> before;  // at the true test label
  std::vector<PipelineOutput> after;
};

/// Perturbs every test input once and evaluates both versions. AUROC uses the
/// pipeline score; ECE/MCE use the pipeline probability with `bins` bins.
PairedEvaluation evaluate_pair(const ScorerState& s, const LossPipeline& pipeline, const LabeledData& test_set,
                               const PerturbConfig& cfg, int bins = kDefaultBins);

/// id,loss_before,loss_after,score_before,score_after
void write_delta_csv(std::ostream& os, const std::vector<SampleDelta>& deltas);

}  // namespace calad
