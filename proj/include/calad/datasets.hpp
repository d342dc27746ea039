#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "calad/scorer.hpp"
#include "calad/tensor.hpp"

namespace calad {

/// Flat samples plus an optional image shape. Test masks are present for
/// localization data, one per test sample.
struct Dataset {
  std::string name;
  int channels = 0;  // 0 for tabular data
  int height = 0;
  int width = 0;
  std::vector<std::vector<double>> normal;   // training pool, all normal
  LabeledData test;                          // normal and real anomalous samples
  std::vector<LabelMask> test_masks;         // empty unless localization
  std::vector<std::vector<double>> oe_pool;  // auxiliary anomalies

  bool is_image() const { return channels > 0; }
  std::size_t feature_count() const;
};

struct TabularSizes {
  int normal = 400;
  int test_normal = 200;
  int test_anomalous = 200;
  int oe = 400;
};

/// N(0, I) in 2-D with anomalies on the ring 3 <= r <= 5 and OE drawn uniformly
/// from the annulus 2.5 <= r <= 6.
Dataset gaussian2d(std::uint64_t seed, const TabularSizes& sizes = {});

/// N(0, I) in 2-D with anomalies far out on the ring 10 <= r <= 14, where a
/// saturating scorer is flat while the normal basin is steep.
Dataset steep_basin(std::uint64_t seed, const TabularSizes& sizes = {});

struct TileSizes {
  int side = 16;
  int normal = 120;
  int test_normal = 30;
  int test_anomalous = 30;
  int oe = 120;
};

/// Single-channel striped textures; anomalous tiles carry a square defect with
/// its pixel mask. OE tiles are checkerboards.
Dataset textured_tiles(std::uint64_t seed, const TileSizes& sizes = {});

Dataset builtin_dataset(const std::string& name, std::uint64_t seed);
bool is_builtin_dataset(const std::string& name);

/// Loads user data. Tabular: CSV files (`test` must carry a label column).
/// Images: directories of CALT files; test labels come from `labels.csv`
/// (file,label) in the test directory, masks from <stem>.pgm in `masks`.
struct DatasetPaths {
  std::filesystem::path normal;
  std::filesystem::path test;
  std::filesystem::path oe;     // optional
  std::filesystem::path masks;  // optional
};
Dataset load_dataset(const DatasetPaths& paths);

}  // namespace calad
