#include "calad/perturbation.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "calad/metrics.hpp"

namespace calad {

std::vector<double> perturb(std::span<const double> x, std::span<const double> grad, const PerturbConfig& cfg) {
  if (x.size() != grad.size()) throw std::invalid_argument("perturb: input and gradient differ in length");
  if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("perturb: epsilon must be >= 0");
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(grad[i])) throw std::invalid_argument("perturb: non-finite gradient");
    if (grad[i] > 0.0) {
      out[i] -= cfg.epsilon;
    } else if (grad[i] < 0.0) {
      out[i] += cfg.epsilon;
    }
  }
  return out;
}

std::vector<double> perturb_input(const ScorerState& s, const LossPipeline& pipeline, std::span<const double> x,
                                  const PerturbConfig& cfg) {
  if (cfg.epsilon == 0.0) return {x.begin(), x.end()};
  LossPipeline gradient_pipeline = pipeline;
  if (!cfg.through_calibrator) gradient_pipeline.calibrator = std::monostate{};
  const std::vector<double> g = input_gradient(s, gradient_pipeline, x, cfg.target_label);
  return perturb(x, g, cfg);
}

namespace {

MetricSuite suite(const std::vector<PipelineOutput>& outs, const std::vector<Label>& labels, int bins) {
  std::vector<double> scores, probs;
  for (const auto& o : outs) {
    scores.push_back(o.score);
    probs.push_back(o.probability);
  }
  MetricSuite m;
  m.auroc = auroc(scores, labels);
  const ReliabilityHistogram h = reliability(probs, labels, bins);
  m.ece = ece(h);
  m.mce = mce(h);
  return m;
}

}  // namespace

PairedEvaluation evaluate_pair(const ScorerState& s, const LossPipeline& pipeline, const LabeledData& test_set,
                               const PerturbConfig& cfg, int bins) {
  PairedEvaluation r;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const std::vector<double>& x = test_set.inputs[i];
    const std::vector<double> xt = perturb_input(s, pipeline, x, cfg);
    PipelineOutput before = evaluate(s, pipeline, x, test_set.labels[i]);
    PipelineOutput after = evaluate(s, pipeline, xt, test_set.labels[i]);
    SampleDelta d;
    d.id = i;
    d.loss_before = evaluate(s, pipeline, x, cfg.target_label).loss;
    d.loss_after = evaluate(s, pipeline, xt, cfg.target_label).loss;
    d.score_before = before.score;
    d.score_after = after.score;
    r.deltas.push_back(d);
    r.before.push_back(std::move(before));
    r.after.push_back(std::move(after));
  }
  r.unperturbed = suite(r.before, test_set.labels, bins);
  r.perturbed = suite(r.after, test_set.labels, bins);
  return r;
}

void write_delta_csv(std::ostream& os, const std::vector<SampleDelta>& deltas) {
  os << "id,loss_before,loss_after,score_before,score_after\n";
  char buf[160];
  for (const auto& d : deltas) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", d.id, d.loss_before, d.loss_after,
                  d.score_before, d.score_after);
    os << buf;
  }
}

}  // namespace calad
