#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "calad/calibration.hpp"
#include "calad/datasets.hpp"
#include "calad/perturbation.hpp"
#include "calad/scorer.hpp"

namespace calad {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr const char* kOutputDirEnv = "CALAD_OUTPUT_DIR";

enum class CalibratorKind { none, platt, beta, head };
enum class AnomalySource { oe, spectral };

CalibratorKind parse_calibrator_kind(const std::string& s);
AnomalySource parse_anomaly_source(const std::string& s);
std::string to_string(CalibratorKind k);
std::string to_string(AnomalySource s);

struct ExperimentConfig {
  std::string dataset = "gaussian2d";  // built-in name, or "files" to read `paths`
  DatasetPaths paths;
  std::uint64_t data_seed = 0;
  std::string loss = "svdd";
  std::vector<CalibratorKind> calibrators = {CalibratorKind::platt};
  std::vector<AnomalySource> anomaly_sources = {AnomalySource::spectral};
  AnomalySource training_anomaly_source = AnomalySource::oe;  // supervised losses only
  double split_ratio = 0.75;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  double epsilon = kDefaultPerturbEpsilon;
  int bins = kDefaultBins;
  std::filesystem::path output_dir;

  std::vector<int> hidden = {32, 16};
  int embedding = 8;  // output width of svdd / hsc scorers
  Activation activation = Activation::tanh;
  int epochs = 200;
  double learning_rate = 1e-4;
  int batch_size = 128;
  std::vector<int> milestones = {100, 150};
  int map_side = 4;  // fcdd feature map side
  double upsample_sigma = 14.0;
  int class_id = 0;
  bool parallel_seeds = true;
};

/// Throws ConfigError.
void validate(const ExperimentConfig& cfg);

/// JSON with the field names of ExperimentConfig; unknown keys are an error.
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string to_json(const ExperimentConfig& cfg);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;
};

/// Seeded shuffle; round(n * ratio) items go to train. Throws DataError if a side is empty.
SplitIndices split(std::size_t n, double ratio, std::uint64_t seed);

/// Disjoint OE pools: half for training, a quarter each for calibration and evaluation.
struct OePartition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;
  std::vector<std::size_t> evaluation;
};
OePartition partition_oe(std::size_t n, std::uint64_t seed);

inline constexpr double kStdFloor = 1e-8;

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population, floored at kStdFloor
};
FeatureStats fit_stats(const std::vector<std::vector<double>>& rows);
std::vector<double> normalize(std::span<const double> x, const FeatureStats& stats);
std::vector<std::vector<double>> normalize(const std::vector<std::vector<double>>& rows, const FeatureStats& stats);

/// Synthetic spectral anomalies shaped like the dataset samples, already normalized.
/// Tabular samples take the first d pixels of a square single-channel image of
/// side max(8, ceil(sqrt(d))), mapped from [0, 1] to [-4, 4].
std::vector<std::vector<double>> spectral_anomalies(const Dataset& shape, std::size_t count, std::uint64_t seed,
                                                    const FeatureStats& stats);

struct LocalizationMetrics {
  double aupro = 0.0;
  double aupro_perturbed = 0.0;
  double pixel_auroc = 0.0;
  double pixel_auroc_perturbed = 0.0;
};

struct ResultRow {
  int class_id = 0;
  std::string method;
  double auroc = 0.0;
  double auroc_perturbed = 0.0;
  double mce = 0.0;
  double ece = 0.0;
  std::optional<LocalizationMetrics> localization;
};

/// Fully Trained, CalHead OE, CalHead Spectral, Platt OE, Platt Spectral, β OE, β Spectral.
const std::vector<std::string>& method_vocabulary();
std::string method_label(CalibratorKind kind, AnomalySource source);
std::string method_slug(const std::string& label);

struct CurvePoint {
  double logit = 0.0;
  double probability = 0.0;
};

struct MethodFigure {
  std::string method;
  ReliabilityHistogram histogram;
  double ece = 0.0;
  double mce = 0.0;
  std::vector<CurvePoint> curve;  // empty for uncalibrated and head methods
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<ResultRow> rows;
  std::vector<MethodFigure> figures;
  std::vector<std::pair<std::string, std::vector<SampleDelta>>> deltas;
  std::vector<std::pair<std::string, std::string>> calibrator_documents;
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  std::vector<ResultRow> summary;  // arithmetic mean over seeds, one row per method
};

/// Runs every seed in memory; no files are written.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
SeedResult run_seed(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed);

std::vector<ResultRow> average_rows(const std::vector<SeedResult>& seeds);

std::string summary_csv(const std::vector<ResultRow>& rows);
std::string per_seed_csv(const std::vector<SeedResult>& seeds);
std::string reliability_svg(const MethodFigure& fig);
std::string calibrator_curve_svg(const std::vector<MethodFigure>& figs);
std::string figures_json(const std::vector<MethodFigure>& figs);
std::vector<MethodFigure> parse_figures_json(const std::string& text);

/// Writes summary.csv, per_seed.csv, figures, deltas, calibrator documents and
/// manifest.json into cfg.output_dir. Throws DataError when it is not writable.
void emit_reports(const ExperimentConfig& cfg, const ExperimentResult& result);
/// Re-renders the SVG figures from a stored figures.json.
void render_figures(const std::filesystem::path& dir, const std::vector<MethodFigure>& figs);

}  // namespace calad
