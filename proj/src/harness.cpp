#include "calad/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <future>
#include <json.hpp>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "calad/errors.hpp"
#include "calad/io.hpp"
#include "calad/metrics.hpp"
#include "calad/random.hpp"
#include "calad/spectral.hpp"

namespace calad {

using nlohmann::json;

CalibratorKind parse_calibrator_kind(const std::string& s) {
  if (s == "none") return CalibratorKind::none;
  if (s == "platt") return CalibratorKind::platt;
  if (s == "beta") return CalibratorKind::beta;
  if (s == "head") return CalibratorKind::head;
  throw ConfigError("unknown calibrator kind '" + s + "' (expected none, platt, beta or head)");
}

AnomalySource parse_anomaly_source(const std::string& s) {
  if (s == "oe") return AnomalySource::oe;
  if (s == "spectral") return AnomalySource::spectral;
  throw ConfigError("unknown anomaly source '" + s + "' (expected oe or spectral)");
}

std::string to_string(CalibratorKind k) {
  switch (k) {
    case CalibratorKind::none: return "none";
    case CalibratorKind::platt: return "platt";
    case CalibratorKind::beta: return "beta";
    case CalibratorKind::head: return "head";
  }
  return "none";
}

std::string to_string(AnomalySource s) { return s == AnomalySource::oe ? "oe" : "spectral"; }

namespace {

bool needs_oe(const ExperimentConfig& cfg, OutputHead head) {
  if (is_supervised(head) && cfg.training_anomaly_source == AnomalySource::oe) return true;
  return std::find(cfg.anomaly_sources.begin(), cfg.anomaly_sources.end(), AnomalySource::oe) !=
         cfg.anomaly_sources.end();
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  OutputHead head;
  try {
    head = output_head_for(parse_base_loss(cfg.loss));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0)) throw ConfigError("split_ratio must lie in (0, 1)");
  if (cfg.seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (cfg.anomaly_sources.empty()) throw ConfigError("anomaly_sources must be nonempty");
  if (!(cfg.epsilon >= 0.0) || !std::isfinite(cfg.epsilon)) throw ConfigError("epsilon must be finite and >= 0");
  if (cfg.bins < 1) throw ConfigError("bins must be >= 1");
  if (cfg.embedding < 1) throw ConfigError("embedding must be >= 1");
  if (cfg.map_side < 1) throw ConfigError("map_side must be >= 1");
  for (int h : cfg.hidden) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  }
  if (!(cfg.upsample_sigma > 0.0)) throw ConfigError("upsample_sigma must be > 0");
  if (cfg.dataset == "files") {
    if (cfg.paths.normal.empty() || cfg.paths.test.empty()) {
      throw ConfigError("dataset 'files' needs normal and test paths");
    }
    if (needs_oe(cfg, head) && cfg.paths.oe.empty()) {
      throw ConfigError("an OE path is required when an anomaly source is oe");
    }
  } else if (!is_builtin_dataset(cfg.dataset)) {
    throw ConfigError("unknown dataset '" + cfg.dataset + "'");
  }
  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.milestones = cfg.milestones;
  try {
    validate(tc);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

template <typename T>
T get_field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "dataset") {
      c.dataset = get_field<std::string>(j, "dataset");
    } else if (k == "normal") {
      c.paths.normal = get_field<std::string>(j, "normal");
    } else if (k == "test") {
      c.paths.test = get_field<std::string>(j, "test");
    } else if (k == "oe") {
      c.paths.oe = get_field<std::string>(j, "oe");
    } else if (k == "masks") {
      c.paths.masks = get_field<std::string>(j, "masks");
    } else if (k == "data_seed") {
      c.data_seed = get_field<std::uint64_t>(j, "data_seed");
    } else if (k == "loss") {
      c.loss = get_field<std::string>(j, "loss");
    } else if (k == "calibrators") {
      c.calibrators.clear();
      for (const auto& s : get_field<std::vector<std::string>>(j, "calibrators")) {
        c.calibrators.push_back(parse_calibrator_kind(s));
      }
    } else if (k == "anomaly_sources") {
      c.anomaly_sources.clear();
      for (const auto& s : get_field<std::vector<std::string>>(j, "anomaly_sources")) {
        c.anomaly_sources.push_back(parse_anomaly_source(s));
      }
    } else if (k == "training_anomaly_source") {
      c.training_anomaly_source = parse_anomaly_source(get_field<std::string>(j, "training_anomaly_source"));
    } else if (k == "split_ratio") {
      c.split_ratio = get_field<double>(j, "split_ratio");
    } else if (k == "seeds") {
      c.seeds = get_field<std::vector<std::uint64_t>>(j, "seeds");
    } else if (k == "epsilon") {
      c.epsilon = get_field<double>(j, "epsilon");
    } else if (k == "bins") {
      c.bins = get_field<int>(j, "bins");
    } else if (k == "output_dir") {
      c.output_dir = get_field<std::string>(j, "output_dir");
    } else if (k == "hidden") {
      c.hidden = get_field<std::vector<int>>(j, "hidden");
    } else if (k == "embedding") {
      c.embedding = get_field<int>(j, "embedding");
    } else if (k == "activation") {
      const std::string a = get_field<std::string>(j, "activation");
      if (a != "tanh" && a != "softplus") throw ConfigError("activation must be tanh or softplus");
      c.activation = a == "tanh" ? Activation::tanh : Activation::softplus;
    } else if (k == "epochs") {
      c.epochs = get_field<int>(j, "epochs");
    } else if (k == "learning_rate") {
      c.learning_rate = get_field<double>(j, "learning_rate");
    } else if (k == "batch_size") {
      c.batch_size = get_field<int>(j, "batch_size");
    } else if (k == "milestones") {
      c.milestones = get_field<std::vector<int>>(j, "milestones");
    } else if (k == "map_side") {
      c.map_side = get_field<int>(j, "map_side");
    } else if (k == "upsample_sigma") {
      c.upsample_sigma = get_field<double>(j, "upsample_sigma");
    } else if (k == "class_id") {
      c.class_id = get_field<int>(j, "class_id");
    } else if (k == "parallel_seeds") {
      c.parallel_seeds = get_field<bool>(j, "parallel_seeds");
    } else {
      throw ConfigError("unknown config field '" + k + "'");
    }
  }
  return c;
}

std::string to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["dataset"] = c.dataset;
  if (!c.paths.normal.empty()) j["normal"] = c.paths.normal.string();
  if (!c.paths.test.empty()) j["test"] = c.paths.test.string();
  if (!c.paths.oe.empty()) j["oe"] = c.paths.oe.string();
  if (!c.paths.masks.empty()) j["masks"] = c.paths.masks.string();
  j["data_seed"] = c.data_seed;
  j["loss"] = c.loss;
  std::vector<std::string> cal, src;
  for (auto k : c.calibrators) cal.push_back(to_string(k));
  for (auto s : c.anomaly_sources) src.push_back(to_string(s));
  j["calibrators"] = cal;
  j["anomaly_sources"] = src;
  j["training_anomaly_source"] = to_string(c.training_anomaly_source);
  j["split_ratio"] = c.split_ratio;
  j["seeds"] = c.seeds;
  j["epsilon"] = c.epsilon;
  j["bins"] = c.bins;
  j["output_dir"] = c.output_dir.string();
  j["hidden"] = c.hidden;
  j["embedding"] = c.embedding;
  j["activation"] = c.activation == Activation::tanh ? "tanh" : "softplus";
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["milestones"] = c.milestones;
  j["map_side"] = c.map_side;
  j["upsample_sigma"] = c.upsample_sigma;
  j["class_id"] = c.class_id;
  j["parallel_seeds"] = c.parallel_seeds;
  return j.dump(2);
}

SplitIndices split(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  if (n_train == 0 || n_train >= n) throw DataError("split leaves one side empty (n = " + std::to_string(n) + ")");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.calibration.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return s;
}

OePartition partition_oe(std::size_t n, std::uint64_t seed) {
  if (n < 4) throw DataError("OE pool needs at least 4 items, has " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t a = n / 2, b = a + (n - a) / 2;
  OePartition p;
  p.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a));
  p.calibration.assign(idx.begin() + static_cast<std::ptrdiff_t>(a), idx.begin() + static_cast<std::ptrdiff_t>(b));
  p.evaluation.assign(idx.begin() + static_cast<std::ptrdiff_t>(b), idx.end());
  return p;
}

FeatureStats fit_stats(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw DataError("normalize: no training rows");
  const std::size_t d = rows.front().size();
  FeatureStats st;
  st.mean.assign(d, 0.0);
  st.stddev.assign(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw DataError("normalize: ragged rows");
    for (std::size_t k = 0; k < d; ++k) st.mean[k] += r[k];
  }
  const double n = static_cast<double>(rows.size());
  for (double& m : st.mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < d; ++k) st.stddev[k] += (r[k] - st.mean[k]) * (r[k] - st.mean[k]);
  }
  for (double& s : st.stddev) s = std::max(std::sqrt(s / n), kStdFloor);
  return st;
}

std::vector<double> normalize(std::span<const double> x, const FeatureStats& stats) {
  if (x.size() != stats.mean.size()) throw DataError("normalize: feature count mismatch");
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - stats.mean[k]) / stats.stddev[k];
  return out;
}

std::vector<std::vector<double>> normalize(const std::vector<std::vector<double>>& rows, const FeatureStats& stats) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(normalize(r, stats));
  return out;
}

std::vector<std::vector<double>> spectral_anomalies(const Dataset& shape, std::size_t count, std::uint64_t seed,
                                                    const FeatureStats& stats) {
  std::vector<std::vector<double>> out;
  out.reserve(count);
  const std::size_t d = shape.feature_count();
  for (std::size_t i = 0; i < count; ++i) {
    SpectralConfig sc;
    sc.seed = derive_seed(seed, i);
    if (shape.is_image()) {
      sc.channels = shape.channels;
      sc.height = shape.height;
      sc.width = shape.width;
      out.push_back(normalize(synthesize(sc).image.data, stats));
    } else {
      sc.channels = 1;
      sc.height = sc.width = std::max(8, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)))));
      const ImageTensor img = synthesize(sc).image;
      std::vector<double> x(img.data.begin(), img.data.begin() + static_cast<std::ptrdiff_t>(d));
      for (double& v : x) v = 8.0 * v - 4.0;
      out.push_back(std::move(x));
    }
  }
  return out;
}

const std::vector<std::string>& method_vocabulary() {
  static const std::vector<std::string> v = {"Fully Trained", "CalHead OE", "CalHead Spectral", "Platt OE",
                                             "Platt Spectral", "β OE",      "β Spectral"};
  return v;
}

std::string method_label(CalibratorKind kind, AnomalySource source) {
  const std::string suffix = source == AnomalySource::oe ? " OE" : " Spectral";
  switch (kind) {
    case CalibratorKind::none: return "Fully Trained";
    case CalibratorKind::platt: return "Platt" + suffix;
    case CalibratorKind::beta: return "β" + suffix;
    case CalibratorKind::head: return "CalHead" + suffix;
  }
  return "Fully Trained";
}

std::string method_slug(const std::string& label) {
  std::string s = label;
  const std::string beta = "β";
  if (s.rfind(beta, 0) == 0) s = "beta" + s.substr(beta.size());
  std::string out;
  for (char c : s) {
    if (c == ' ') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

namespace {

struct Model {
  ScorerState scorer;
  LossPipeline pipeline;
  FeatureStats stats;
};

std::vector<std::vector<double>> pick(const std::vector<std::vector<double>>& pool,
                                      const std::vector<std::size_t>& idx) {
  std::vector<std::vector<double>> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(pool[i]);
  return out;
}

std::vector<std::vector<double>> sample_with_replacement(const std::vector<std::vector<double>>& pool,
                                                         const std::vector<std::size_t>& idx, std::size_t count,
                                                         std::uint64_t seed) {
  if (idx.empty()) throw DataError("anomaly pool is empty");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> u(0, idx.size() - 1);
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(pool[idx[u(rng)]]);
  return out;
}

void require_finite(const ScorerState& s) {
  for (double v : s.params) {
    if (!std::isfinite(v)) throw NumericalError("training diverged: non-finite parameters");
  }
}

Model build_model(const ExperimentConfig& cfg, const Dataset& data, const std::vector<std::vector<double>>& normals_raw,
                  const std::vector<std::vector<double>>& oe_train_raw, std::uint64_t seed, std::uint64_t stream) {
  const OutputHead head = output_head_for(parse_base_loss(cfg.loss));
  Model m;
  m.stats = fit_stats(normals_raw);
  LabeledData train_set;
  train_set.inputs = normalize(normals_raw, m.stats);
  train_set.labels.assign(train_set.inputs.size(), Label::normal);
  if (is_supervised(head)) {
    std::vector<std::vector<double>> anomalies =
        cfg.training_anomaly_source == AnomalySource::oe
            ? normalize(oe_train_raw, m.stats)
            : spectral_anomalies(data, train_set.inputs.size(), derive_seed(seed, stream + 100), m.stats);
    if (anomalies.empty()) throw DataError("supervised training needs anomalous samples");
    for (auto& a : anomalies) {
      train_set.inputs.push_back(std::move(a));
      train_set.labels.push_back(Label::anomalous);
    }
  }

  const int d = static_cast<int>(data.feature_count());
  MlpSpec spec;
  spec.widths.push_back(d);
  for (int h : cfg.hidden) spec.widths.push_back(h);
  switch (head) {
    case OutputHead::logistic: spec.widths.push_back(1); break;
    case OutputHead::svdd:
    case OutputHead::hsc: spec.widths.push_back(cfg.embedding); break;
    case OutputHead::fcdd: spec.widths.push_back(cfg.map_side * cfg.map_side); break;
    case OutputHead::ssim: spec.widths.push_back(d); break;
  }
  spec.activation = cfg.activation;
  spec.use_bias = head != OutputHead::svdd;
  m.scorer = init_scorer(spec, derive_seed(seed, stream + 200));

  LossPipeline& p = m.pipeline;
  p.head = head;
  if (is_localization(head)) {
    if (!data.is_image() || data.channels != 1) throw ConfigError("localization losses need single-channel images");
    p.image_height = data.height;
    p.image_width = data.width;
    p.map_height = p.map_width = cfg.map_side;
    p.upsample_sigma = cfg.upsample_sigma;
    if (head == OutputHead::fcdd) {
      try {
        (void)upsample_geometry(cfg.map_side, cfg.map_side, data.height, data.width);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (head == OutputHead::svdd) {
    std::vector<std::vector<double>> normals(train_set.inputs.begin(),
                                             train_set.inputs.begin() + static_cast<std::ptrdiff_t>(normals_raw.size()));
    p.center = init_svdd_center(m.scorer, normals).center;
  }

  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.milestones = cfg.milestones;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = derive_seed(seed, stream + 300);
  tc.loss_name = cfg.loss;
  m.scorer = train(std::move(m.scorer), p, train_set, tc);
  require_finite(m.scorer);
  return m;
}

struct CalibrationInputs {
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::vector<Label> labels;
  Matrix features;  // scalar heads only
};

CalibrationInputs calibration_inputs(const Model& m, const LabeledData& set) {
  LossPipeline base = m.pipeline;
  base.calibrator = std::monostate{};
  CalibrationInputs ci;
  const bool loc = is_localization(base.head);
  std::vector<std::vector<double>> feats;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const PipelineOutput o = evaluate(m.scorer, base, set.inputs[i], set.labels[i]);
    if (loc) {
      for (double p : o.pixel_probabilities.values) {
        ci.probabilities.push_back(p);
        ci.logits.push_back(logit(clamp_probability(p, base.clamp)));
        ci.labels.push_back(set.labels[i]);
      }
    } else {
      ci.logits.push_back(o.logit);
      ci.probabilities.push_back(o.probability);
      ci.labels.push_back(set.labels[i]);
      feats.push_back(base.head == OutputHead::logistic ? penultimate_features(m.scorer, set.inputs[i])
                                                        : forward(m.scorer, set.inputs[i]));
    }
  }
  if (!feats.empty()) {
    ci.features = Matrix(static_cast<int>(feats.size()), static_cast<int>(feats.front().size()));
    for (std::size_t i = 0; i < feats.size(); ++i) {
      std::copy(feats[i].begin(), feats[i].end(), ci.features.values.begin() + i * feats[i].size());
    }
  }
  return ci;
}

std::vector<CurvePoint> curve_for(const PipelineCalibrator& cal) {
  std::vector<CurvePoint> pts;
  if (!std::holds_alternative<PlattParams>(cal) && !std::holds_alternative<BetaParams>(cal)) return pts;
  for (int k = -80; k <= 80; ++k) {
    const double z = k / 10.0;
    double p;
    if (const auto* pp = std::get_if<PlattParams>(&cal)) {
      p = platt_transform(z, *pp).probability;
    } else {
      p = beta_transform(sigmoid(z), std::get<BetaParams>(cal)).probability;
    }
    pts.push_back({z, p});
  }
  return pts;
}

void check_metric(double v, const std::string& what) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw NumericalError(what + " is outside [0, 1]");
}

struct Evaluated {
  ResultRow row;
  MethodFigure figure;
  std::vector<SampleDelta> deltas;
};

Evaluated evaluate_method(const ExperimentConfig& cfg, const Dataset& data, const Model& m,
                          const LossPipeline& pipeline, const std::string& label, const LabeledData& test,
                          const LabeledData& ece_set, const RegionMaskSet* regions) {
  Evaluated e;
  PerturbConfig pc;
  pc.epsilon = cfg.epsilon;
  const PairedEvaluation pe = evaluate_pair(m.scorer, pipeline, test, pc, cfg.bins);
  e.row.class_id = cfg.class_id;
  e.row.method = label;
  e.row.auroc = pe.unperturbed.auroc;
  e.row.auroc_perturbed = pe.perturbed.auroc;

  std::vector<double> probs;
  for (std::size_t i = 0; i < ece_set.size(); ++i) {
    probs.push_back(evaluate(m.scorer, pipeline, ece_set.inputs[i], ece_set.labels[i]).probability);
  }
  const ReliabilityHistogram h = reliability(probs, ece_set.labels, cfg.bins);
  e.row.ece = ece(h);
  e.row.mce = mce(h);

  if (regions != nullptr) {
    std::vector<Matrix> before, after;
    for (const auto& o : pe.before) before.push_back(o.pixel_scores);
    for (const auto& o : pe.after) after.push_back(o.pixel_scores);
    LocalizationMetrics lm;
    lm.aupro = aupro(before, *regions);
    lm.aupro_perturbed = aupro(after, *regions);
    lm.pixel_auroc = pixel_auroc(before, data.test_masks);
    lm.pixel_auroc_perturbed = pixel_auroc(after, data.test_masks);
    check_metric(lm.aupro, "AUPRO");
    check_metric(lm.aupro_perturbed, "AUPRO");
    e.row.localization = lm;
  }
  check_metric(e.row.auroc, "AUROC");
  check_metric(e.row.auroc_perturbed, "AUROC");
  check_metric(e.row.ece, "ECE");
  check_metric(e.row.mce, "MCE");

  e.figure.method = label;
  e.figure.histogram = h;
  e.figure.ece = e.row.ece;
  e.figure.mce = e.row.mce;
  e.figure.curve = curve_for(pipeline.calibrator);
  e.deltas = pe.deltas;
  return e;
}

LabeledData with_labels(const std::vector<std::vector<double>>& normals,
                        const std::vector<std::vector<double>>& anomalies) {
  LabeledData d;
  d.inputs = normals;
  d.labels.assign(normals.size(), Label::normal);
  for (const auto& a : anomalies) {
    d.inputs.push_back(a);
    d.labels.push_back(Label::anomalous);
  }
  return d;
}

}  // namespace

SeedResult run_seed(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed) {
  const OutputHead head = output_head_for(parse_base_loss(cfg.loss));
  const bool loc = is_localization(head);
  if (loc && data.test_masks.size() != data.test.size()) throw DataError("localization needs a mask per test sample");
  std::size_t n_test_normal = 0, n_test_anom = 0;
  for (Label l : data.test.labels) (l == Label::normal ? n_test_normal : n_test_anom)++;
  if (n_test_normal == 0 || n_test_anom == 0) throw DataError("evaluation set must contain both classes");

  const bool oe_needed = needs_oe(cfg, head);
  OePartition oe;
  if (oe_needed) oe = partition_oe(data.oe_pool.size(), derive_seed(seed, 2));

  const SplitIndices sp = split(data.normal.size(), cfg.split_ratio, derive_seed(seed, 1));
  const auto train_raw = pick(data.normal, sp.train);
  const auto cal_raw = pick(data.normal, sp.calibration);
  const auto oe_train_raw = oe_needed ? pick(data.oe_pool, oe.train) : std::vector<std::vector<double>>{};

  const Model full = build_model(cfg, data, data.normal, oe_train_raw, seed, 10);
  const Model base = build_model(cfg, data, train_raw, oe_train_raw, seed, 20);

  std::optional<RegionMaskSet> regions;
  if (loc) regions = decompose_regions(data.test_masks);

  std::vector<std::vector<double>> test_normals_raw;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    if (data.test.labels[i] == Label::normal) test_normals_raw.push_back(data.test.inputs[i]);
  }

  // Held-out synthetic anomalies for ECE/MCE, in raw space for OE and per model for spectral.
  auto ece_set = [&](const Model& m, AnomalySource src) {
    std::vector<std::vector<double>> anomalies =
        src == AnomalySource::oe
            ? normalize(sample_with_replacement(data.oe_pool, oe.evaluation, n_test_normal, derive_seed(seed, 40)),
                        m.stats)
            : spectral_anomalies(data, n_test_normal, derive_seed(seed, 41), m.stats);
    return with_labels(normalize(test_normals_raw, m.stats), anomalies);
  };
  auto test_set = [&](const Model& m) {
    LabeledData t;
    t.inputs = normalize(data.test.inputs, m.stats);
    t.labels = data.test.labels;
    return t;
  };

  SeedResult r;
  r.seed = seed;
  auto record = [&](Evaluated&& e) {
    r.deltas.emplace_back(e.row.method, std::move(e.deltas));
    r.figures.push_back(std::move(e.figure));
    r.rows.push_back(std::move(e.row));
  };

  record(evaluate_method(cfg, data, full, full.pipeline, "Fully Trained", test_set(full),
                         ece_set(full, cfg.anomaly_sources.front()), regions ? &*regions : nullptr));

  const LabeledData base_test = test_set(base);
  const auto cal_normals = normalize(cal_raw, base.stats);
  for (AnomalySource src : cfg.anomaly_sources) {
    const auto cal_anomalies =
        src == AnomalySource::oe
            ? normalize(sample_with_replacement(data.oe_pool, oe.calibration, cal_normals.size(), derive_seed(seed, 30)),
                        base.stats)
            : spectral_anomalies(data, cal_normals.size(), derive_seed(seed, 31), base.stats);
    const LabeledData cal_set = with_labels(cal_normals, cal_anomalies);
    const CalibrationInputs ci = calibration_inputs(base, cal_set);
    const LabeledData eval_set = ece_set(base, src);

    OptimizerConfig opt;
    opt.seed = seed;
    for (CalibratorKind kind : cfg.calibrators) {
      if (kind == CalibratorKind::none) continue;
      if (kind == CalibratorKind::head && loc) continue;
      LossPipeline p = base.pipeline;
      CalibratorDocument doc;
      doc.seed = seed;
      switch (kind) {
        case CalibratorKind::platt: {
          const PlattParams pp = fit_platt(ci.logits, ci.labels, opt);
          p.calibrator = pp;
          doc.params = pp;
          doc.fitting_digest = fitting_digest(ci.logits, ci.labels);
          break;
        }
        case CalibratorKind::beta: {
          const BetaParams bp = fit_beta(ci.probabilities, ci.labels, opt, base.pipeline.clamp);
          p.calibrator = bp;
          doc.params = bp;
          doc.fitting_digest = fitting_digest(ci.probabilities, ci.labels);
          break;
        }
        case CalibratorKind::head: {
          const HeadParams hp = fit_head(ci.features, ci.labels, opt);
          p.calibrator = hp;
          doc.params = hp;
          doc.fitting_digest = fitting_digest(ci.features.values, ci.labels);
          break;
        }
        case CalibratorKind::none: break;
      }
      const std::string label = method_label(kind, src);
      r.calibrator_documents.emplace_back(label, serialize(doc));
      record(evaluate_method(cfg, data, base, p, label, base_test, eval_set, regions ? &*regions : nullptr));
    }
  }
  return r;
}

std::vector<ResultRow> average_rows(const std::vector<SeedResult>& seeds) {
  if (seeds.empty()) return {};
  std::vector<ResultRow> out;
  for (std::size_t k = 0; k < seeds.front().rows.size(); ++k) {
    ResultRow avg = seeds.front().rows[k];
    avg.auroc = avg.auroc_perturbed = avg.mce = avg.ece = 0.0;
    if (avg.localization) avg.localization = LocalizationMetrics{};
    for (const auto& s : seeds) {
      if (s.rows.size() != seeds.front().rows.size() || s.rows[k].method != avg.method) {
        throw std::logic_error("average_rows: seeds disagree on the method list");
      }
      const ResultRow& r = s.rows[k];
      avg.auroc += r.auroc;
      avg.auroc_perturbed += r.auroc_perturbed;
      avg.mce += r.mce;
      avg.ece += r.ece;
      if (avg.localization && r.localization) {
        avg.localization->aupro += r.localization->aupro;
        avg.localization->aupro_perturbed += r.localization->aupro_perturbed;
        avg.localization->pixel_auroc += r.localization->pixel_auroc;
        avg.localization->pixel_auroc_perturbed += r.localization->pixel_auroc_perturbed;
      }
    }
    const double n = static_cast<double>(seeds.size());
    avg.auroc /= n;
    avg.auroc_perturbed /= n;
    avg.mce /= n;
    avg.ece /= n;
    if (avg.localization) {
      avg.localization->aupro /= n;
      avg.localization->aupro_perturbed /= n;
      avg.localization->pixel_auroc /= n;
      avg.localization->pixel_auroc_perturbed /= n;
    }
    out.push_back(avg);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const Dataset data = cfg.dataset == "files" ? load_dataset(cfg.paths) : builtin_dataset(cfg.dataset, cfg.data_seed);
  ExperimentResult res;
  if (cfg.parallel_seeds && cfg.seeds.size() > 1) {
    std::vector<std::future<SeedResult>> jobs;
    for (std::uint64_t s : cfg.seeds) {
      jobs.push_back(std::async(std::launch::async, [&cfg, &data, s] { return run_seed(cfg, data, s); }));
    }
    for (auto& j : jobs) res.seeds.push_back(j.get());
  } else {
    for (std::uint64_t s : cfg.seeds) res.seeds.push_back(run_seed(cfg, data, s));
  }
  res.summary = average_rows(res.seeds);
  return res;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string row_values(const ResultRow& r, bool loc) {
  std::string s = std::to_string(r.class_id) + "," + r.method + "," + fmt(r.auroc) + "," + fmt(r.auroc_perturbed) +
                  "," + fmt(r.mce) + "," + fmt(r.ece);
  if (loc) {
    const LocalizationMetrics lm = r.localization.value_or(LocalizationMetrics{});
    s += "," + fmt(lm.aupro) + "," + fmt(lm.aupro_perturbed) + "," + fmt(lm.pixel_auroc) + "," +
         fmt(lm.pixel_auroc_perturbed);
  }
  return s;
}

std::string header(bool loc) {
  std::string h = "class,method,auroc,auroc_perturbed,mce,ece";
  if (loc) h += ",aupro,aupro_perturbed,pixel_auroc,pixel_auroc_perturbed";
  return h;
}

bool any_localization(const std::vector<ResultRow>& rows) {
  return std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.localization.has_value(); });
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string summary_csv(const std::vector<ResultRow>& rows) {
  const bool loc = any_localization(rows);
  std::string s = header(loc) + "\n";
  for (const auto& r : rows) s += row_values(r, loc) + "\n";
  return s;
}

std::string per_seed_csv(const std::vector<SeedResult>& seeds) {
  bool loc = false;
  for (const auto& sr : seeds) loc = loc || any_localization(sr.rows);
  std::string s = "seed," + header(loc) + "\n";
  for (const auto& sr : seeds) {
    for (const auto& r : sr.rows) s += std::to_string(sr.seed) + "," + row_values(r, loc) + "\n";
  }
  return s;
}

std::string reliability_svg(const MethodFigure& fig) {
  const double W = 360, H = 360, x0 = 50, y0 = 20, S = 280;
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  o << "  <title>" << xml_escape(fig.method) << " reliability</title>\n";
  o << "  <rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << S << "\" height=\"" << S
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  const int K = fig.histogram.bin_count();
  for (int k = 0; k < K; ++k) {
    const ReliabilityBin& b = fig.histogram.bins[k];
    if (b.count == 0) continue;
    const double bw = S / K;
    const double x = x0 + k * bw;
    const double h = b.freq * S;
    o << "  <rect x=\"" << num(x) << "\" y=\"" << num(y0 + S - h) << "\" width=\"" << num(bw) << "\" height=\""
      << num(h) << "\" fill=\"steelblue\" stroke=\"white\"/>\n";
    const double hc = b.conf * S;
    o << "  <rect x=\"" << num(x) << "\" y=\"" << num(y0 + S - hc) << "\" width=\"" << num(bw)
      << "\" height=\"2\" fill=\"crimson\"/>\n";
  }
  o << "  <line x1=\"" << x0 << "\" y1=\"" << y0 + S << "\" x2=\"" << x0 + S << "\" y2=\"" << y0
    << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  o << "  <text x=\"" << x0 + S / 2 << "\" y=\"" << y0 + S + 25 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << "confidence</text>\n";
  o << "  <text x=\"15\" y=\"" << y0 + S / 2 << "\" font-size=\"12\" transform=\"rotate(-90 15 " << y0 + S / 2
    << ")\" text-anchor=\"middle\">frequency</text>\n";
  o << "  <text x=\"" << x0 + 8 << "\" y=\"" << y0 + 18 << "\" font-size=\"12\">" << xml_escape(fig.method)
    << "  ECE " << fmt(fig.ece) << "  MCE " << fmt(fig.mce) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::string calibrator_curve_svg(const std::vector<MethodFigure>& figs) {
  const double W = 420, H = 320, x0 = 50, y0 = 20, SW = 340, SH = 260, zmin = -8, zmax = 8;
  static const char* colors[] = {"steelblue", "crimson", "seagreen", "darkorange", "purple", "black"};
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  o << "  <title>fitted calibration maps</title>\n";
  o << "  <rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << SW << "\" height=\"" << SH
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  int shown = 0;
  for (const auto& f : figs) {
    if (f.curve.empty()) continue;
    const char* color = colors[shown % 6];
    o << "  <polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < f.curve.size(); ++i) {
      const double x = x0 + (f.curve[i].logit - zmin) / (zmax - zmin) * SW;
      const double y = y0 + (1.0 - f.curve[i].probability) * SH;
      o << (i ? " " : "") << num(x) << ',' << num(y);
    }
    o << "\"/>\n";
    o << "  <text x=\"" << x0 + 8 << "\" y=\"" << y0 + 16 + 14 * shown << "\" font-size=\"11\" fill=\"" << color
      << "\">" << xml_escape(f.method) << "</text>\n";
    ++shown;
  }
  o << "  <text x=\"" << x0 + SW / 2 << "\" y=\"" << y0 + SH + 25 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << "base logit</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::string figures_json(const std::vector<MethodFigure>& figs) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& f : figs) {
    nlohmann::ordered_json j;
    j["method"] = f.method;
    j["ece"] = f.ece;
    j["mce"] = f.mce;
    j["n"] = f.histogram.n;
    nlohmann::ordered_json bins = nlohmann::ordered_json::array();
    for (const auto& b : f.histogram.bins) {
      bins.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}, {"freq", b.freq}, {"conf", b.conf}});
    }
    j["bins"] = bins;
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    for (const auto& c : f.curve) curve.push_back({c.logit, c.probability});
    j["curve"] = curve;
    arr.push_back(j);
  }
  return arr.dump(1) + "\n";
}

std::vector<MethodFigure> parse_figures_json(const std::string& text) {
  std::vector<MethodFigure> out;
  try {
    const json arr = json::parse(text);
    for (const auto& j : arr) {
      MethodFigure f;
      f.method = j.at("method").get<std::string>();
      f.ece = j.at("ece").get<double>();
      f.mce = j.at("mce").get<double>();
      f.histogram.n = j.at("n").get<std::size_t>();
      for (const auto& b : j.at("bins")) {
        ReliabilityBin rb;
        rb.lower = b.at("lower").get<double>();
        rb.upper = b.at("upper").get<double>();
        rb.count = b.at("count").get<std::size_t>();
        rb.freq = b.at("freq").get<double>();
        rb.conf = b.at("conf").get<double>();
        f.histogram.bins.push_back(rb);
      }
      for (const auto& c : j.at("curve")) f.curve.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      out.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("figures.json is malformed: ") + e.what());
  }
  return out;
}

void render_figures(const std::filesystem::path& dir, const std::vector<MethodFigure>& figs) {
  for (const auto& f : figs) {
    write_text_file(dir / ("reliability_" + method_slug(f.method) + ".svg"), reliability_svg(f));
  }
  write_text_file(dir / "calibrator_curves.svg", calibrator_curve_svg(figs));
}

void emit_reports(const ExperimentConfig& cfg, const ExperimentResult& result) {
  if (result.summary.empty()) throw std::invalid_argument("emit_reports: no rows");
  const std::filesystem::path dir = cfg.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());

  write_text_file(dir / "summary.csv", summary_csv(result.summary));
  write_text_file(dir / "per_seed.csv", per_seed_csv(result.seeds));
  const std::vector<MethodFigure>& figs = result.seeds.front().figures;
  write_text_file(dir / "figures.json", figures_json(figs));
  render_figures(dir, figs);
  for (const auto& sr : result.seeds) {
    const std::string tag = "_seed" + std::to_string(sr.seed);
    for (const auto& [method, deltas] : sr.deltas) {
      std::ostringstream os;
      write_delta_csv(os, deltas);
      write_text_file(dir / ("deltas_" + method_slug(method) + tag + ".csv"), os.str());
    }
    for (const auto& [method, doc] : sr.calibrator_documents) {
      write_text_file(dir / ("calibrator_" + method_slug(method) + tag + ".txt"), doc);
    }
  }

  nlohmann::ordered_json m;
  m["library_version"] = kLibraryVersion;
  m["config"] = json::parse(to_json(cfg));
  m["seeds"] = cfg.seeds;
  m["conventions"] = {
      {"auroc_ties", "midrank (ties count one half)"},
      {"aupro", "4-connected regions; per-region overlap averaged over regions; trapezoid area up to the FPR cap "
                "(interpolated at the cap) divided by the cap"},
      {"aupro_fpr_cap", kDefaultFprCap},
      {"reliability_bins", "bin k holds (k/K, (k+1)/K]; 0 falls in bin 0"},
      {"ece_evaluation_set", "normal test data plus an equal number of held-out synthetic anomalies"},
      {"perturbation", "x - epsilon * sgn(grad) against the normal-label pipeline loss; sgn(0) = 0"}};
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  m["created"] = stamp;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace calad
