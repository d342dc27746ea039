#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "calad/scorer.hpp"
#include "calad/tensor.hpp"

namespace calad {

inline constexpr char kRawTensorMagic[4] = {'C', 'A', 'L', 'T'};
inline constexpr std::uint16_t kRawTensorVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;

/// "CALT", version u16, dtype u8, rank u8, dims u32 (all little-endian), then
/// row-major float32 data.
struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

void write_raw_tensor(std::ostream& os, const RawTensor& t);
RawTensor read_raw_tensor(std::istream& is);
void write_raw_tensor(const std::filesystem::path& path, const RawTensor& t);
RawTensor read_raw_tensor(const std::filesystem::path& path);

RawTensor to_raw(const ImageTensor& image);
RawTensor to_raw(const Heatmap& heatmap);
RawTensor to_raw(std::span<const double> values);
/// Rank 2 (h, w) or rank 3 (c, h, w).
ImageTensor image_from_raw(const RawTensor& t);
std::vector<double> values_from_raw(const RawTensor& t);

/// Binary PGM (P5, maxval 255): 0 = normal pixel, 255 = anomalous.
void write_pgm_mask(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_pgm_mask(const std::filesystem::path& path);

/// Binary PPM (P6, 8-bit). One channel is written as gray, three as RGB.
void write_ppm(const std::filesystem::path& path, const ImageTensor& image);

/// Numeric CSV with a header row. A column named "label" (0/1) is split off.
struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;  // empty when there is no label column
};
FeatureTable read_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table);

/// Two-column score file: header "score,label".
struct ScoreTable {
  std::vector<double> scores;
  std::vector<Label> labels;
};
ScoreTable read_score_csv(const std::filesystem::path& path);
void write_score_csv(const std::filesystem::path& path, const ScoreTable& table);

struct CheckpointInfo {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string loss_name;
};

/// Writes <stem>.calt (flat parameters) and <stem>.json (spec, frozen flags, info).
void write_checkpoint(const std::filesystem::path& stem, const ScorerState& s, const CheckpointInfo& info);
ScorerState read_checkpoint(const std::filesystem::path& stem, CheckpointInfo* info = nullptr);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace calad
