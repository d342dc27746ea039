#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "calad/calibration.hpp"
#include "calad/errors.hpp"
#include "calad/harness.hpp"
#include "calad/io.hpp"
#include "calad/metrics.hpp"
#include "calad/spectral.hpp"

namespace {

using calad::ConfigError;
using calad::DataError;
using nlohmann::json;

struct RunFlags {
  std::string config;
  std::optional<std::string> dataset, normal, test, oe, masks, loss, out, training_source, activation;
  std::vector<std::string> calibrators, sources;
  std::vector<std::uint64_t> seeds;
  std::vector<int> hidden, milestones;
  std::optional<double> epsilon, split_ratio, learning_rate, upsample_sigma;
  std::optional<int> bins, epochs, batch_size, embedding, map_side, class_id;
  std::optional<std::uint64_t> data_seed;
  bool serial = false;
};

// Flags become a JSON object with the config-file field names; a field set in
// both places to different values is a configuration error.
json flags_to_json(const RunFlags& f) {
  json j = json::object();
  auto put = [&j](const char* key, const auto& opt) {
    if (opt) j[key] = *opt;
  };
  put("dataset", f.dataset);
  put("normal", f.normal);
  put("test", f.test);
  put("oe", f.oe);
  put("masks", f.masks);
  put("loss", f.loss);
  put("output_dir", f.out);
  put("training_anomaly_source", f.training_source);
  put("activation", f.activation);
  put("epsilon", f.epsilon);
  put("split_ratio", f.split_ratio);
  put("learning_rate", f.learning_rate);
  put("upsample_sigma", f.upsample_sigma);
  put("bins", f.bins);
  put("epochs", f.epochs);
  put("batch_size", f.batch_size);
  put("embedding", f.embedding);
  put("map_side", f.map_side);
  put("class_id", f.class_id);
  put("data_seed", f.data_seed);
  if (!f.calibrators.empty()) j["calibrators"] = f.calibrators;
  if (!f.sources.empty()) j["anomaly_sources"] = f.sources;
  if (!f.seeds.empty()) j["seeds"] = f.seeds;
  if (!f.hidden.empty()) j["hidden"] = f.hidden;
  if (!f.milestones.empty()) j["milestones"] = f.milestones;
  if (f.serial) j["parallel_seeds"] = false;
  return j;
}

calad::ExperimentConfig resolve_config(const RunFlags& f) {
  json merged = json::object();
  if (!f.config.empty()) {
    try {
      merged = json::parse(calad::read_text_file(f.config));
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    if (!merged.is_object()) throw ConfigError("config must be a JSON object");
  }
  const json flags = flags_to_json(f);
  for (auto it = flags.begin(); it != flags.end(); ++it) {
    if (merged.contains(it.key()) && merged[it.key()] != it.value()) {
      throw ConfigError("--" + it.key() + " conflicts with the config file value");
    }
    merged[it.key()] = it.value();
  }
  calad::ExperimentConfig cfg = calad::parse_experiment_config(merged.dump());
  if (cfg.output_dir.empty()) {
    const char* env = std::getenv(calad::kOutputDirEnv);
    cfg.output_dir = env != nullptr && *env != '\0' ? env : "calad_out";
  }
  return cfg;
}

int cmd_run(const RunFlags& f) {
  const calad::ExperimentConfig cfg = resolve_config(f);
  const calad::ExperimentResult res = calad::run_experiment(cfg);
  calad::emit_reports(cfg, res);
  std::cout << calad::summary_csv(res.summary);
  std::cerr << "wrote " << cfg.output_dir.string() << "\n";
  return 0;
}

struct SynthFlags {
  int count = 1;
  int height = 32;
  int width = 32;
  int channels = 1;
  double lo = 0.5;
  double hi = 3.5;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthFlags& f) {
  if (f.count < 1) throw ConfigError("--count must be >= 1");
  std::filesystem::path dir = f.out;
  if (dir.empty()) {
    const char* env = std::getenv(calad::kOutputDirEnv);
    dir = env != nullptr && *env != '\0' ? env : "calad_out";
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string());
  nlohmann::ordered_json meta = nlohmann::ordered_json::array();
  for (int i = 0; i < f.count; ++i) {
    calad::SpectralConfig sc;
    sc.height = f.height;
    sc.width = f.width;
    sc.channels = f.channels;
    sc.exponent_lo = f.lo;
    sc.exponent_hi = f.hi;
    sc.seed = f.seed + static_cast<std::uint64_t>(i);
    const calad::SpectralImage img = calad::synthesize(sc);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "spectral_%04d", i);
    calad::write_raw_tensor(dir / (std::string(stem) + ".calt"), calad::to_raw(img.image));
    if (img.image.channels == 1 || img.image.channels == 3) {
      calad::write_ppm(dir / (std::string(stem) + ".ppm"), img.image);
    }
    nlohmann::ordered_json e;
    e["file"] = std::string(stem) + ".calt";
    e["seed"] = sc.seed;
    nlohmann::ordered_json ex = nlohmann::ordered_json::array();
    for (const auto& p : img.exponents) ex.push_back({{"a", p.a}, {"b", p.b}});
    e["exponents"] = ex;
    e["imaginary_residue"] = img.imaginary_residue;
    meta.push_back(e);
  }
  calad::write_text_file(dir / "spectral.json", meta.dump(2) + "\n");
  std::cerr << "wrote " << f.count << " images to " << dir.string() << "\n";
  return 0;
}

int cmd_calibrate(const std::string& scores, const std::string& kind, const std::string& out, std::uint64_t seed) {
  const calad::ScoreTable t = calad::read_score_csv(scores);
  calad::OptimizerConfig opt;
  opt.seed = seed;
  calad::CalibratorDocument doc;
  doc.seed = seed;
  doc.fitting_digest = calad::fitting_digest(t.scores, t.labels);
  try {
    if (kind == "platt") {
      doc.params = calad::fit_platt(t.scores, t.labels, opt);
    } else if (kind == "beta") {
      for (double s : t.scores) {
        if (s < 0.0 || s > 1.0) throw DataError("beta calibration needs scores in [0, 1]");
      }
      doc.params = calad::fit_beta(t.scores, t.labels, opt);
    } else {
      throw ConfigError("--kind must be platt or beta");
    }
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  const std::string text = calad::serialize(doc);
  if (out.empty()) {
    std::cout << text;
  } else {
    calad::write_text_file(out, text);
  }
  return 0;
}

int cmd_eval(const std::string& scores, int bins, bool logits, const std::string& calibrator) {
  const calad::ScoreTable t = calad::read_score_csv(scores);
  std::vector<double> probs;
  std::optional<calad::CalibratorDocument> doc;
  if (!calibrator.empty()) doc = calad::parse_calibrator_document(calad::read_text_file(calibrator));
  for (double s : t.scores) {
    double p;
    if (doc) {
      if (const auto* pp = std::get_if<calad::PlattParams>(&doc->params)) {
        p = calad::platt_transform(s, *pp).probability;
      } else if (const auto* bp = std::get_if<calad::BetaParams>(&doc->params)) {
        p = calad::beta_transform(logits ? calad::sigmoid(s) : s, *bp).probability;
      } else {
        throw ConfigError("eval: calibration head documents need features, not scores");
      }
    } else {
      p = logits ? calad::sigmoid(s) : s;
    }
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("eval: scores are not probabilities; pass --logits");
    probs.push_back(p);
  }
  const calad::ReliabilityHistogram h = calad::reliability(probs, t.labels, bins);
  nlohmann::ordered_json j;
  try {
    j["auroc"] = calad::auroc(t.scores, t.labels);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  j["ece"] = calad::ece(h);
  j["mce"] = calad::mce(h);
  j["n"] = t.scores.size();
  j["bins"] = bins;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  const std::filesystem::path d = dir;
  const auto figs = calad::parse_figures_json(calad::read_text_file(d / "figures.json"));
  calad::render_figures(d, figs);
  std::cout << calad::read_text_file(d / "summary.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrated anomaly detection experiments"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "train, calibrate and evaluate; write tables and figures");
  run->add_option("--config", rf.config, "JSON experiment config");
  run->add_option("--dataset", rf.dataset, "gaussian2d, steep_basin, tiles or files");
  run->add_option("--normal", rf.normal, "normal training data (CSV or CALT directory)");
  run->add_option("--test", rf.test, "labelled test data (CSV or CALT directory with labels.csv)");
  run->add_option("--oe", rf.oe, "outlier-exposure pool (CSV or CALT directory)");
  run->add_option("--masks", rf.masks, "directory of PGM test masks");
  run->add_option("--data-seed", rf.data_seed, "seed of the built-in dataset");
  run->add_option("--loss", rf.loss, "logistic, svdd, hsc, fcdd or ssim");
  run->add_option("--calibrator", rf.calibrators, "none, platt, beta or head (repeatable)");
  run->add_option("--source", rf.sources, "oe or spectral (repeatable)");
  run->add_option("--training-source", rf.training_source, "anomaly source for supervised training");
  run->add_option("--split-ratio", rf.split_ratio, "training share of the normal data");
  run->add_option("--seed", rf.seeds, "run seed (repeatable)");
  run->add_option("--epsilon", rf.epsilon, "perturbation magnitude");
  run->add_option("--bins", rf.bins, "reliability bins");
  run->add_option("--out", rf.out, "output directory");
  run->add_option("--hidden", rf.hidden, "hidden widths (repeatable)");
  run->add_option("--embedding", rf.embedding, "output width for svdd/hsc");
  run->add_option("--activation", rf.activation, "tanh or softplus");
  run->add_option("--epochs", rf.epochs);
  run->add_option("--learning-rate", rf.learning_rate);
  run->add_option("--batch-size", rf.batch_size);
  run->add_option("--milestone", rf.milestones, "epoch at which the rate decays (repeatable)");
  run->add_option("--map-side", rf.map_side, "fcdd feature map side");
  run->add_option("--upsample-sigma", rf.upsample_sigma);
  run->add_option("--class-id", rf.class_id);
  run->add_flag("--serial", rf.serial, "run seeds one after another");

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "emit spectral synthetic images");
  synth->add_option("--count", sf.count);
  synth->add_option("--height", sf.height);
  synth->add_option("--width", sf.width);
  synth->add_option("--channels", sf.channels);
  synth->add_option("--lo", sf.lo, "lower exponent bound");
  synth->add_option("--hi", sf.hi, "upper exponent bound");
  synth->add_option("--seed", sf.seed);
  synth->add_option("--out", sf.out, "output directory");

  std::string cal_scores, cal_kind = "platt", cal_out;
  std::uint64_t cal_seed = 0;
  auto* calibrate = app.add_subcommand("calibrate", "fit a calibrator on a score,label CSV");
  calibrate->add_option("--scores", cal_scores)->required();
  calibrate->add_option("--kind", cal_kind, "platt (scores are logits) or beta (scores are probabilities)");
  calibrate->add_option("--out", cal_out, "calibrator document; stdout when omitted");
  calibrate->add_option("--seed", cal_seed);

  std::string ev_scores, ev_calibrator;
  int ev_bins = calad::kDefaultBins;
  bool ev_logits = false;
  auto* eval = app.add_subcommand("eval", "AUROC, ECE and MCE of a score,label CSV");
  eval->add_option("--scores", ev_scores)->required();
  eval->add_option("--bins", ev_bins);
  eval->add_flag("--logits", ev_logits, "scores are logits; apply the sigmoid for calibration metrics");
  eval->add_option("--calibrator", ev_calibrator, "apply a fitted calibrator document first");

  std::string rep_dir;
  auto* report = app.add_subcommand("report", "re-render figures from a run directory");
  report->add_option("--dir", rep_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*run) return cmd_run(rf);
    if (*synth) return cmd_synth(sf);
    if (*calibrate) return cmd_calibrate(cal_scores, cal_kind, cal_out, cal_seed);
    if (*eval) return cmd_eval(ev_scores, ev_bins, ev_logits, ev_calibrator);
    if (*report) return cmd_report(rep_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const calad::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
