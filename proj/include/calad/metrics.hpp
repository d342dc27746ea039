#pragma once

#include <optional>
#include <span>
#include <vector>

#include "calad/losses.hpp"
#include "calad/tensor.hpp"

namespace calad {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<Label> labels;
};

/// 1-based midranks; tied values share the mean of their positions.
std::vector<double> midranks(std::span<const double> values);

/// Tie-aware rank statistic P(s+ > s-) + P(s+ = s-) / 2. Throws
/// std::invalid_argument unless both classes are present.
double auroc(std::span<const double> scores, std::span<const Label> labels);
inline double auroc(const LabeledScores& ls) { return auroc(ls.scores, ls.labels); }

/// One 4-connected anomalous region of one image.
struct Region {
  int image = 0;
  std::vector<int> pixels;  // row-major indices into that image
};

struct RegionMaskSet {
  std::vector<LabelMask> masks;
  std::vector<Region> regions;
};

RegionMaskSet decompose_regions(std::vector<LabelMask> masks);

inline constexpr double kDefaultFprCap = 0.3;

/// Per-region overlap averaged over regions, swept over every score threshold,
/// integrated against the global false-positive rate on [0, fpr_cap] with the
/// trapezoid rule, divided by fpr_cap.
double aupro(const std::vector<Matrix>& score_maps, const RegionMaskSet& masks, double fpr_cap = kDefaultFprCap);
double aupro(const std::vector<Heatmap>& heatmaps, const RegionMaskSet& masks, double fpr_cap = kDefaultFprCap);

/// AUROC over all pixels of all images.
double pixel_auroc(const std::vector<Matrix>& score_maps, const std::vector<LabelMask>& masks);

/// (auroc_p - auroc_0) / (1 - auroc_0); empty when auroc_0 >= 1.
std::optional<double> kappa_improvement(double auroc_0, double auroc_p);

/// Pearson correlation of midranks; empty when either side has zero rank variance.
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace calad
