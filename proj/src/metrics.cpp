#include "calad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace calad {

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

double auroc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: scores and labels differ in length");
  for (double s : scores) {
    if (std::isnan(s)) throw std::invalid_argument("auroc: NaN score");
  }
  const std::vector<double> ranks = midranks(scores);
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == Label::anomalous) {
      rank_sum += ranks[i];
      n_pos += 1.0;
    }
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw std::invalid_argument("auroc: both classes must be present");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

RegionMaskSet decompose_regions(std::vector<LabelMask> masks) {
  RegionMaskSet set;
  for (int m = 0; m < static_cast<int>(masks.size()); ++m) {
    const LabelMask& mask = masks[m];
    std::vector<char> seen(mask.size(), 0);
    std::vector<int> stack;
    for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
      if (seen[start] || mask.labels[start] != Label::anomalous) continue;
      Region region;
      region.image = m;
      seen[start] = 1;
      stack.push_back(start);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        region.pixels.push_back(p);
        const int i = p / mask.width;
        const int j = p % mask.width;
        const int nbr[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        for (const auto& q : nbr) {
          if (q[0] < 0 || q[1] < 0 || q[0] >= mask.height || q[1] >= mask.width) continue;
          const int idx = q[0] * mask.width + q[1];
          if (!seen[idx] && mask.labels[idx] == Label::anomalous) {
            seen[idx] = 1;
            stack.push_back(idx);
          }
        }
      }
      std::sort(region.pixels.begin(), region.pixels.end());
      set.regions.push_back(std::move(region));
    }
  }
  set.masks = std::move(masks);
  return set;
}

namespace {

struct PixelRef {
  double score;
  int region;  // -1 for normal pixels
};

double aupro_impl(const std::vector<std::span<const double>>& maps, const RegionMaskSet& masks, double fpr_cap) {
  if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) throw std::invalid_argument("aupro: fpr_cap must lie in (0, 1]");
  if (maps.size() != masks.masks.size()) throw std::invalid_argument("aupro: heatmap and mask counts differ");
  if (masks.regions.empty()) throw std::invalid_argument("aupro: no anomalous regions");

  std::vector<std::vector<int>> region_of(masks.masks.size());
  for (std::size_t m = 0; m < masks.masks.size(); ++m) {
    if (maps[m].size() != masks.masks[m].size()) throw std::invalid_argument("aupro: heatmap and mask shapes differ");
    region_of[m].assign(masks.masks[m].size(), -1);
  }
  std::vector<double> region_size(masks.regions.size());
  for (std::size_t r = 0; r < masks.regions.size(); ++r) {
    for (int p : masks.regions[r].pixels) region_of[masks.regions[r].image][p] = static_cast<int>(r);
    region_size[r] = static_cast<double>(masks.regions[r].pixels.size());
  }

  std::vector<PixelRef> pixels;
  double n_normal = 0.0;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    for (std::size_t p = 0; p < maps[m].size(); ++p) {
      const int r = region_of[m][p];
      if (r < 0 && masks.masks[m].labels[p] == Label::anomalous) continue;  // unreachable by construction
      pixels.push_back({maps[m][p], r});
      if (r < 0) n_normal += 1.0;
    }
  }
  if (n_normal == 0.0) throw std::invalid_argument("aupro: no normal pixels to define the false-positive rate");
  std::stable_sort(pixels.begin(), pixels.end(), [](const PixelRef& a, const PixelRef& b) { return a.score > b.score; });

  const double n_regions = static_cast<double>(masks.regions.size());
  double area = 0.0;
  double fpr_prev = 0.0, pro_prev = 0.0;
  double normal_above = 0.0, pro_sum = 0.0;
  std::size_t i = 0;
  while (i < pixels.size()) {
    std::size_t j = i;
    while (j < pixels.size() && pixels[j].score == pixels[i].score) {
      if (pixels[j].region < 0) {
        normal_above += 1.0;
      } else {
        pro_sum += 1.0 / region_size[pixels[j].region];
      }
      ++j;
    }
    i = j;
    const double fpr = normal_above / n_normal;
    const double pro = pro_sum / n_regions;
    if (fpr >= fpr_cap) {
      // Linear interpolation of the last segment at the cap.
      const double t = fpr > fpr_prev ? (fpr_cap - fpr_prev) / (fpr - fpr_prev) : 0.0;
      const double pro_cap = pro_prev + t * (pro - pro_prev);
      area += 0.5 * (fpr_cap - fpr_prev) * (pro_prev + pro_cap);
      return area / fpr_cap;
    }
    area += 0.5 * (fpr - fpr_prev) * (pro_prev + pro);
    fpr_prev = fpr;
    pro_prev = pro;
  }
  return area / fpr_cap;  // not reached: the final threshold has fpr = 1
}

}  // namespace

double aupro(const std::vector<Matrix>& score_maps, const RegionMaskSet& masks, double fpr_cap) {
  std::vector<std::span<const double>> maps;
  for (const auto& m : score_maps) maps.emplace_back(m.values);
  return aupro_impl(maps, masks, fpr_cap);
}

double aupro(const std::vector<Heatmap>& heatmaps, const RegionMaskSet& masks, double fpr_cap) {
  std::vector<std::span<const double>> maps;
  for (const auto& h : heatmaps) maps.emplace_back(h.values);
  return aupro_impl(maps, masks, fpr_cap);
}

double pixel_auroc(const std::vector<Matrix>& score_maps, const std::vector<LabelMask>& masks) {
  if (score_maps.size() != masks.size()) throw std::invalid_argument("pixel_auroc: map and mask counts differ");
  std::vector<double> scores;
  std::vector<Label> labels;
  for (std::size_t m = 0; m < masks.size(); ++m) {
    if (score_maps[m].size() != masks[m].size()) throw std::invalid_argument("pixel_auroc: shapes differ");
    scores.insert(scores.end(), score_maps[m].values.begin(), score_maps[m].values.end());
    labels.insert(labels.end(), masks[m].labels.begin(), masks[m].labels.end());
  }
  return auroc(scores, labels);
}

std::optional<double> kappa_improvement(double auroc_0, double auroc_p) {
  if (!(auroc_0 < 1.0)) return std::nullopt;
  return (auroc_p - auroc_0) / (1.0 - auroc_0);
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("spearman: inputs must have equal length >= 2");
  }
  const std::vector<double> rx = midranks(xs);
  const std::vector<double> ry = midranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace calad
