#include "calad/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "calad/errors.hpp"

namespace calad {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("raw tensor: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

// Reads the next PNM header token, skipping whitespace and comments.
std::string pnm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int pnm_int(std::istream& is, const std::string& what) {
  const std::string tok = pnm_token(is);
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (tok.empty() || *end != '\0' || v <= 0 || v > (1 << 24)) throw DataError("pgm: bad " + what);
  return static_cast<int>(v);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw DataError(where + ": not a finite number: '" + cell + "'");
  }
  return v;
}

Label parse_label(const std::string& cell, const std::string& where) {
  if (cell == "0") return Label::normal;
  if (cell == "1") return Label::anomalous;
  throw DataError(where + ": label must be 0 or 1, got '" + cell + "'");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::size_t RawTensor::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

void write_raw_tensor(std::ostream& os, const RawTensor& t) {
  if (t.dims.size() > 255) throw std::invalid_argument("raw tensor: rank above 255");
  if (t.element_count() != t.data.size()) throw std::invalid_argument("raw tensor: dims do not match data");
  os.write(kRawTensorMagic, 4);
  put_u16(os, kRawTensorVersion);
  os.put(static_cast<char>(kDtypeFloat32));
  os.put(static_cast<char>(t.dims.size()));
  for (std::uint32_t d : t.dims) put_u32(os, d);
  for (float f : t.data) {
    std::uint32_t bits;
    static_assert(sizeof(float) == 4);
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
}

RawTensor read_raw_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kRawTensorMagic)) throw DataError("raw tensor: bad magic");
  unsigned char hdr[4];
  if (!is.read(reinterpret_cast<char*>(hdr), 4)) throw DataError("raw tensor: truncated header");
  const std::uint16_t version = static_cast<std::uint16_t>(hdr[0] | (hdr[1] << 8));
  if (version != kRawTensorVersion) throw DataError("raw tensor: unsupported version " + std::to_string(version));
  if (hdr[2] != kDtypeFloat32) throw DataError("raw tensor: unsupported dtype " + std::to_string(hdr[2]));
  RawTensor t;
  t.dims.resize(hdr[3]);
  for (auto& d : t.dims) d = get_u32(is);
  const std::size_t n = t.element_count();
  if (n > (std::size_t{1} << 32)) throw DataError("raw tensor: implausible size");
  t.data.resize(n);
  for (auto& f : t.data) {
    std::uint32_t bits;
    try {
      bits = get_u32(is);
    } catch (const DataError&) {
      throw DataError("raw tensor: truncated data");
    }
    std::memcpy(&f, &bits, 4);
  }
  return t;
}

void write_raw_tensor(const std::filesystem::path& path, const RawTensor& t) {
  auto out = open_out(path);
  write_raw_tensor(out, t);
  if (!out) throw DataError("write failed: " + path.string());
}

RawTensor read_raw_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_raw_tensor(in);
}

RawTensor to_raw(const ImageTensor& image) {
  RawTensor t;
  t.dims = {static_cast<std::uint32_t>(image.channels), static_cast<std::uint32_t>(image.height),
            static_cast<std::uint32_t>(image.width)};
  t.data.assign(image.data.begin(), image.data.end());
  return t;
}

RawTensor to_raw(const Heatmap& heatmap) {
  RawTensor t;
  t.dims = {static_cast<std::uint32_t>(heatmap.height), static_cast<std::uint32_t>(heatmap.width)};
  t.data.assign(heatmap.values.begin(), heatmap.values.end());
  return t;
}

RawTensor to_raw(std::span<const double> values) {
  RawTensor t;
  t.dims = {static_cast<std::uint32_t>(values.size())};
  t.data.assign(values.begin(), values.end());
  return t;
}

ImageTensor image_from_raw(const RawTensor& t) {
  ImageTensor img;
  if (t.dims.size() == 2) {
    img = ImageTensor(1, static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
  } else if (t.dims.size() == 3) {
    img = ImageTensor(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]));
  } else {
    throw DataError("raw tensor: expected rank 2 or 3 image, got rank " + std::to_string(t.dims.size()));
  }
  if (img.size() == 0) throw DataError("raw tensor: empty image");
  std::copy(t.data.begin(), t.data.end(), img.data.begin());
  return img;
}

std::vector<double> values_from_raw(const RawTensor& t) { return {t.data.begin(), t.data.end()}; }

void write_pgm_mask(const std::filesystem::path& path, const LabelMask& mask) {
  auto out = open_out(path);
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  for (Label l : mask.labels) out.put(l == Label::anomalous ? static_cast<char>(255) : 0);
  if (!out) throw DataError("write failed: " + path.string());
}

LabelMask read_pgm_mask(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (pnm_token(in) != "P5") throw DataError("pgm: expected binary P5 header in " + path.string());
  const int w = pnm_int(in, "width");
  const int h = pnm_int(in, "height");
  if (pnm_int(in, "maxval") != 255) throw DataError("pgm: maxval must be 255");
  LabelMask mask(h, w);
  for (auto& l : mask.labels) {
    const int c = in.get();
    if (c == EOF) throw DataError("pgm: truncated pixel data in " + path.string());
    if (c == 0) {
      l = Label::normal;
    } else if (c == 255) {
      l = Label::anomalous;
    } else {
      throw DataError("pgm: mask pixels must be 0 or 255");
    }
  }
  return mask;
}

void write_ppm(const std::filesystem::path& path, const ImageTensor& image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("ppm: need 1 or 3 channels");
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      for (int c = 0; c < 3; ++c) {
        const double v = image.at(image.channels == 1 ? 0 : c, i, j);
        const double clamped = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
      }
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty file " + path.string());
  const std::vector<std::string> header = split_csv_line(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  const std::ptrdiff_t label_col = label_it == header.end() ? -1 : label_it - header.begin();
  FeatureTable t;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (static_cast<std::ptrdiff_t>(k) != label_col) t.columns.push_back(header[k]);
  }
  if (t.columns.empty()) throw DataError("csv: no feature columns in " + path.string());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw DataError(where + ": wrong column count");
    std::vector<double> row;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (static_cast<std::ptrdiff_t>(k) == label_col) {
        t.labels.push_back(parse_label(cells[k], where));
      } else {
        row.push_back(parse_number(cells[k], where));
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw DataError("csv: no data rows in " + path.string());
  return t;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table) {
  auto out = open_out(path);
  const bool labelled = !table.labels.empty();
  for (std::size_t k = 0; k < table.columns.size(); ++k) out << (k ? "," : "") << table.columns[k];
  if (labelled) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t k = 0; k < table.rows[i].size(); ++k) out << (k ? "," : "") << format_double(table.rows[i][k]);
    if (labelled) out << ',' << static_cast<int>(table.labels[i]);
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

ScoreTable read_score_csv(const std::filesystem::path& path) {
  FeatureTable f = read_feature_csv(path);
  if (f.labels.empty() || f.columns.size() != 1 || f.columns[0] != "score") {
    throw DataError("score csv: expected header 'score,label' in " + path.string());
  }
  ScoreTable s;
  for (const auto& r : f.rows) s.scores.push_back(r[0]);
  s.labels = std::move(f.labels);
  return s;
}

void write_score_csv(const std::filesystem::path& path, const ScoreTable& table) {
  FeatureTable f;
  f.columns = {"score"};
  for (double v : table.scores) f.rows.push_back({v});
  f.labels = table.labels;
  write_feature_csv(path, f);
}

void write_checkpoint(const std::filesystem::path& stem, const ScorerState& s, const CheckpointInfo& info) {
  nlohmann::ordered_json j;
  j["widths"] = s.spec.widths;
  j["activation"] = s.spec.activation == Activation::tanh ? "tanh" : "softplus";
  j["use_bias"] = s.spec.use_bias;
  std::vector<int> frozen(s.frozen.begin(), s.frozen.end());
  j["frozen"] = frozen;
  j["seed"] = info.seed;
  j["epoch"] = info.epoch;
  j["loss"] = info.loss_name;
  j["parameters"] = stem.filename().string() + ".calt";
  write_raw_tensor(std::filesystem::path(stem.string() + ".calt"), to_raw(s.params));
  write_text_file(std::filesystem::path(stem.string() + ".json"), j.dump(2) + "\n");
}

ScorerState read_checkpoint(const std::filesystem::path& stem, CheckpointInfo* info) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(std::filesystem::path(stem.string() + ".json")));
    ScorerState s;
    s.spec.widths = j.at("widths").get<std::vector<int>>();
    const std::string act = j.at("activation").get<std::string>();
    if (act != "tanh" && act != "softplus") throw DataError("checkpoint: unknown activation " + act);
    s.spec.activation = act == "tanh" ? Activation::tanh : Activation::softplus;
    s.spec.use_bias = j.at("use_bias").get<bool>();
    validate(s.spec);
    for (int f : j.at("frozen").get<std::vector<int>>()) s.frozen.push_back(f != 0);
    if (s.frozen.size() != s.layer_count()) throw DataError("checkpoint: frozen flags do not match layers");
    s.params = values_from_raw(read_raw_tensor(std::filesystem::path(stem.string() + ".calt")));
    if (s.params.size() != parameter_count(s.spec)) throw DataError("checkpoint: parameter count mismatch");
    if (info != nullptr) {
      info->seed = j.at("seed").get<std::uint64_t>();
      info->epoch = j.at("epoch").get<int>();
      info->loss_name = j.at("loss").get<std::string>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace calad
