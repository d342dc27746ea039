#include "calad/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "calad/errors.hpp"
#include "calad/io.hpp"

namespace calad {

std::size_t Dataset::feature_count() const {
  if (is_image()) return static_cast<std::size_t>(channels) * height * width;
  return normal.empty() ? 0 : normal.front().size();
}

namespace {

std::vector<double> gaussian_point(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double a = n(rng);
  const double b = n(rng);
  return {a, b};
}

std::vector<double> ring_point(std::mt19937_64& rng, double r_lo, double r_hi) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> radius(r_lo, r_hi);
  const double t = angle(rng);
  const double r = radius(rng);
  return {r * std::cos(t), r * std::sin(t)};
}

// Annulus with uniform area density.
std::vector<double> annulus_point(std::mt19937_64& rng, double r_lo, double r_hi) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> u(r_lo * r_lo, r_hi * r_hi);
  const double t = angle(rng);
  const double r = std::sqrt(u(rng));
  return {r * std::cos(t), r * std::sin(t)};
}

Dataset ring_dataset(const std::string& name, std::uint64_t seed, const TabularSizes& sz, double r_lo, double r_hi) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.name = name;
  for (int i = 0; i < sz.normal; ++i) d.normal.push_back(gaussian_point(rng));
  for (int i = 0; i < sz.test_normal; ++i) {
    d.test.inputs.push_back(gaussian_point(rng));
    d.test.labels.push_back(Label::normal);
  }
  for (int i = 0; i < sz.test_anomalous; ++i) {
    d.test.inputs.push_back(ring_point(rng, r_lo, r_hi));
    d.test.labels.push_back(Label::anomalous);
  }
  for (int i = 0; i < sz.oe; ++i) d.oe_pool.push_back(annulus_point(rng, 2.5, 6.0));
  return d;
}

struct Stripes {
  double freq, angle, phase, contrast;
};

Stripes draw_stripes(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(0.18, 0.28), angle(-0.3, 0.3), phase(0.0, 2.0 * std::numbers::pi),
      contrast(0.3, 0.4);
  const double f = freq(rng);
  const double a = angle(rng);
  const double p = phase(rng);
  const double c = contrast(rng);
  return {f, a, p, c};
}

std::vector<double> stripe_tile(std::mt19937_64& rng, int side) {
  const Stripes s = draw_stripes(rng);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<double> px(static_cast<std::size_t>(side) * side);
  const double cx = std::cos(s.angle), cy = std::sin(s.angle);
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double t = 2.0 * std::numbers::pi * s.freq * (j * cx + i * cy) + s.phase;
      px[static_cast<std::size_t>(i) * side + j] = std::clamp(0.5 + s.contrast * std::sin(t) + noise(rng), 0.0, 1.0);
    }
  }
  return px;
}

std::vector<double> checker_tile(std::mt19937_64& rng, int side) {
  std::uniform_int_distribution<int> cell(2, 5);
  std::uniform_real_distribution<double> level(0.0, 1.0);
  const int c = cell(rng);
  const double lo = level(rng), hi = level(rng);
  std::vector<double> px(static_cast<std::size_t>(side) * side);
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) px[static_cast<std::size_t>(i) * side + j] = ((i / c + j / c) % 2) ? hi : lo;
  }
  return px;
}

}  // namespace

Dataset gaussian2d(std::uint64_t seed, const TabularSizes& sizes) {
  return ring_dataset("gaussian2d", seed, sizes, 3.0, 5.0);
}

Dataset steep_basin(std::uint64_t seed, const TabularSizes& sizes) {
  return ring_dataset("steep_basin", seed, sizes, 10.0, 14.0);
}

Dataset textured_tiles(std::uint64_t seed, const TileSizes& sz) {
  if (sz.side < 8) throw ConfigError("textured_tiles: side must be >= 8");
  std::mt19937_64 rng(seed);
  Dataset d;
  d.name = "tiles";
  d.channels = 1;
  d.height = d.width = sz.side;
  for (int i = 0; i < sz.normal; ++i) d.normal.push_back(stripe_tile(rng, sz.side));
  for (int i = 0; i < sz.test_normal; ++i) {
    d.test.inputs.push_back(stripe_tile(rng, sz.side));
    d.test.labels.push_back(Label::normal);
    d.test_masks.emplace_back(sz.side, sz.side);
  }
  std::uniform_int_distribution<int> size(3, 5);
  std::uniform_real_distribution<double> level(0.0, 1.0);
  for (int i = 0; i < sz.test_anomalous; ++i) {
    std::vector<double> px = stripe_tile(rng, sz.side);
    const int k = size(rng);
    std::uniform_int_distribution<int> pos(0, sz.side - k);
    const int r0 = pos(rng), c0 = pos(rng);
    const double v = level(rng);
    LabelMask m(sz.side, sz.side);
    for (int r = r0; r < r0 + k; ++r) {
      for (int c = c0; c < c0 + k; ++c) {
        px[static_cast<std::size_t>(r) * sz.side + c] = v;
        m.at(r, c) = Label::anomalous;
      }
    }
    d.test.inputs.push_back(std::move(px));
    d.test.labels.push_back(Label::anomalous);
    d.test_masks.push_back(std::move(m));
  }
  for (int i = 0; i < sz.oe; ++i) d.oe_pool.push_back(checker_tile(rng, sz.side));
  return d;
}

bool is_builtin_dataset(const std::string& name) {
  return name == "gaussian2d" || name == "steep_basin" || name == "tiles";
}

Dataset builtin_dataset(const std::string& name, std::uint64_t seed) {
  if (name == "gaussian2d") return gaussian2d(seed);
  if (name == "steep_basin") return steep_basin(seed);
  if (name == "tiles") return textured_tiles(seed);
  throw ConfigError("unknown built-in dataset '" + name + "'");
}

namespace {

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir, const std::string& ext) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no " + ext + " files in " + dir.string());
  return files;
}

void check_shape(Dataset& d, const ImageTensor& img, const std::filesystem::path& p) {
  if (d.channels == 0) {
    d.channels = img.channels;
    d.height = img.height;
    d.width = img.width;
  } else if (img.channels != d.channels || img.height != d.height || img.width != d.width) {
    throw DataError("image shape differs from the first image: " + p.string());
  }
}

}  // namespace

Dataset load_dataset(const DatasetPaths& paths) {
  Dataset d;
  d.name = paths.normal.stem().string();
  if (std::filesystem::is_directory(paths.normal)) {
    for (const auto& f : sorted_files(paths.normal, ".calt")) {
      const ImageTensor img = image_from_raw(read_raw_tensor(f));
      check_shape(d, img, f);
      d.normal.push_back(img.data);
    }
    // labels.csv: header, then "file,label" rows.
    std::istringstream in(read_text_file(paths.test / "labels.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw DataError("labels.csv: malformed line '" + line + "'");
      const std::string file = line.substr(0, comma);
      const std::string lab = line.substr(comma + 1);
      const std::filesystem::path fp = paths.test / file;
      const ImageTensor img = image_from_raw(read_raw_tensor(fp));
      check_shape(d, img, fp);
      d.test.inputs.push_back(img.data);
      if (lab != "0" && lab != "1") throw DataError("labels.csv: label must be 0 or 1");
      d.test.labels.push_back(lab == "1" ? Label::anomalous : Label::normal);
      if (!paths.masks.empty()) {
        const std::filesystem::path mp = paths.masks / (fp.stem().string() + ".pgm");
        LabelMask m = std::filesystem::exists(mp) ? read_pgm_mask(mp) : LabelMask(d.height, d.width);
        if (m.height != d.height || m.width != d.width) throw DataError("mask shape mismatch: " + mp.string());
        d.test_masks.push_back(std::move(m));
      }
    }
    if (!paths.oe.empty()) {
      for (const auto& f : sorted_files(paths.oe, ".calt")) {
        const ImageTensor img = image_from_raw(read_raw_tensor(f));
        check_shape(d, img, f);
        d.oe_pool.push_back(img.data);
      }
    }
  } else {
    FeatureTable normal = read_feature_csv(paths.normal);
    d.normal = std::move(normal.rows);
    FeatureTable test = read_feature_csv(paths.test);
    if (test.labels.empty()) throw DataError("test csv needs a label column: " + paths.test.string());
    if (test.columns.size() != d.feature_count()) throw DataError("test csv feature count differs from normal csv");
    d.test.inputs = std::move(test.rows);
    d.test.labels = std::move(test.labels);
    if (!paths.oe.empty()) {
      FeatureTable oe = read_feature_csv(paths.oe);
      if (oe.columns.size() != d.feature_count()) throw DataError("OE csv feature count differs from normal csv");
      d.oe_pool = std::move(oe.rows);
    }
  }
  return d;
}

}  // namespace calad
