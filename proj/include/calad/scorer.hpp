#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "calad/calibration.hpp"
#include "calad/losses.hpp"
#include "calad/segmentation.hpp"
#include "calad/tensor.hpp"

namespace calad {

enum class Activation { tanh, softplus };

/// Fully connected network; widths[0] is the input width, widths.back() the
/// output width. Hidden layers use `activation`, the last layer is linear.
struct MlpSpec {
  std::vector<int> widths;
  Activation activation = Activation::tanh;
  bool use_bias = true;
};

struct LayerView {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;
  bool has_bias = false;
};

std::vector<LayerView> layer_layout(const MlpSpec& spec);
std::size_t parameter_count(const MlpSpec& spec);
void validate(const MlpSpec& spec);

struct ScorerState {
  MlpSpec spec;
  std::vector<double> params;
  std::vector<bool> frozen;  // one flag per layer

  std::size_t layer_count() const { return spec.widths.size() - 1; }
  int input_width() const { return spec.widths.front(); }
  int output_width() const { return spec.widths.back(); }
};

/// Seeded uniform fan-in initialization, U(-1/sqrt(in), 1/sqrt(in)).
ScorerState init_scorer(const MlpSpec& spec, std::uint64_t seed);
bool has_bias_parameters(const ScorerState& s);
void freeze_all_but_last(ScorerState& s);

std::vector<double> forward(const ScorerState& s, std::span<const double> x);
/// Activations entering the last layer.
std::vector<double> penultimate_features(const ScorerState& s, std::span<const double> x);

struct SvddCenter {
  std::vector<double> center;
};
/// Mean embedding of the training inputs; throws NumericalError when its norm is
/// below 1e-6 (hypersphere collapse).
SvddCenter init_svdd_center(const ScorerState& s, const std::vector<std::vector<double>>& inputs);

/// How the network output becomes a loss, an anomaly score, a logit and a probability.
enum class OutputHead { logistic, svdd, hsc, fcdd, ssim };
OutputHead output_head_for(BaseLoss loss);
bool is_supervised(OutputHead head);
bool is_localization(OutputHead head);

/// Post-composed calibrator. HeadParams act on the frozen features: the network
/// output for vector heads, the penultimate activations for the logistic head.
using PipelineCalibrator = std::variant<std::monostate, PlattParams, BetaParams, HeadParams>;

struct LossPipeline {
  OutputHead head = OutputHead::logistic;
  std::vector<double> center;         // svdd
  bool pseudo_huber_distance = true;  // hsc: v = sqrt(|phi|^2 + 1) - 1, else |phi|^2
  int image_height = 0;               // fcdd / ssim
  int image_width = 0;
  int map_height = 0;                 // fcdd feature map
  int map_width = 0;
  double upsample_sigma = 14.0;
  SsimConfig ssim;
  PipelineCalibrator calibrator;
  double clamp = kDefaultClamp;
};

struct PipelineOutput {
  double loss = 0.0;
  double score = 0.0;  // ranking score, larger = more anomalous
  double logit = 0.0;
  double probability = 0.5;
  Matrix pixel_scores;         // localization heads only
  Matrix pixel_probabilities;  // localization heads only
};

PipelineOutput evaluate(const ScorerState& s, const LossPipeline& pipeline, std::span<const double> x, Label y);

/// Reverse-mode gradient of the pipeline loss with respect to the input.
std::vector<double> input_gradient(const ScorerState& s, const LossPipeline& pipeline, std::span<const double> x,
                                   Label y);

struct LabeledData {
  std::vector<std::vector<double>> inputs;
  std::vector<Label> labels;

  std::size_t size() const { return inputs.size(); }
};

struct ParamGradient {
  double loss = 0.0;  // mean over the batch
  std::vector<double> gradient;
};
/// Mean loss gradient over the batch with respect to the flat parameters;
/// entries of frozen layers are zero.
ParamGradient param_gradient(const ScorerState& s, const LossPipeline& pipeline, const LabeledData& batch);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::vector<int> milestones;  // epochs at which the rate is multiplied by `decay`
  double decay = 0.1;
  int epochs = 10;
  int batch_size = 128;
  std::uint64_t seed = 0;
  std::string loss_name;
};
void validate(const TrainConfig& cfg);

struct TrainReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;
};

/// Adam with milestone decay. Supervised heads draw class-balanced batches
/// (the anomalous stream is reshuffled every epoch); unsupervised heads train on
/// the normal samples only.
ScorerState train(ScorerState s, const LossPipeline& pipeline, const LabeledData& data, const TrainConfig& cfg,
                  TrainReport* report = nullptr);

}  // namespace calad
