#include "calad/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "calad/errors.hpp"
#include "calad/optimize.hpp"

namespace calad {

namespace {

void require_both_classes(std::span<const Label> labels, std::size_t n, const char* who) {
  if (labels.size() != n) throw std::invalid_argument(std::string(who) + ": scores and labels differ in length");
  const auto positives = std::count(labels.begin(), labels.end(), Label::anomalous);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw std::invalid_argument(std::string(who) + ": both classes must be present");
  }
}

LbfgsConfig lbfgs_config(const OptimizerConfig& opt) {
  LbfgsConfig c;
  c.max_iterations = opt.max_iterations;
  c.gradient_tolerance = opt.gradient_tolerance;
  return c;
}

// d/dz of logistic_loss(y, z)
double logistic_slope(Label y, double z) { return sigmoid(z) - as_double(y); }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("calibrator document: bad value for '" + key + "': " + s);
  }
}

}  // namespace

void validate(const PlattParams& p) {
  if (!(p.temperature > 0.0) || !std::isfinite(p.temperature) || !std::isfinite(p.intercept)) {
    throw std::invalid_argument("Platt temperature must be positive and finite");
  }
}

void validate(const BetaParams& p) {
  if (!(p.a >= 0.0) || !(p.b >= 0.0) || !std::isfinite(p.a) || !std::isfinite(p.b) || !std::isfinite(p.c)) {
    throw std::invalid_argument("beta parameters a, b must be nonnegative and finite");
  }
}

CalibratedValue platt_transform(double z, const PlattParams& p) {
  validate(p);
  const double zp = z / p.temperature + p.intercept;
  return {zp, sigmoid(zp)};
}

CalibratedValue beta_transform(double eta_hat, const BetaParams& p, double eps) {
  validate(p);
  const double e = clamp_probability(eta_hat, eps);
  const double zb = p.a * std::log(e) - p.b * std::log1p(-e) + p.c;
  return {zb, sigmoid(zb)};
}

CalibratedValue head_transform(std::span<const double> features, const HeadParams& p) {
  if (features.size() != p.weights.size()) {
    throw std::invalid_argument("head_transform: feature width " + std::to_string(features.size()) +
                                " does not match head width " + std::to_string(p.weights.size()));
  }
  double z = p.bias;
  for (std::size_t i = 0; i < features.size(); ++i) z += p.weights[i] * features[i];
  return {z, sigmoid(z)};
}

double mean_platt_loss(std::span<const double> logits, std::span<const Label> labels, const PlattParams& p) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += logistic_loss(labels[i], platt_transform(logits[i], p).logit);
  return total / static_cast<double>(logits.size());
}

double mean_beta_loss(std::span<const double> estimates, std::span<const Label> labels, const BetaParams& p,
                      double eps) {
  double total = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    total += logistic_loss(labels[i], beta_transform(estimates[i], p, eps).logit);
  }
  return total / static_cast<double>(estimates.size());
}

double mean_head_loss(const Matrix& features, std::span<const Label> labels, const HeadParams& p) {
  double total = 0.0;
  for (int i = 0; i < features.rows; ++i) {
    const std::span<const double> row(features.values.data() + static_cast<std::size_t>(i) * features.cols,
                                      static_cast<std::size_t>(features.cols));
    total += logistic_loss(labels[i], head_transform(row, p).logit);
  }
  return total / static_cast<double>(features.rows);
}

PlattParams fit_platt(std::span<const double> logits, std::span<const Label> labels, const OptimizerConfig& opt) {
  require_both_classes(labels, logits.size(), "fit_platt");
  const double n = static_cast<double>(logits.size());
  // x = (ln(1/T), c)
  const Objective f = [&](std::span<const double> x, std::span<double> g) {
    const double w = std::exp(x[0]);
    double value = 0.0, gw = 0.0, gc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double z = w * logits[i] + x[1];
      value += logistic_loss(labels[i], z);
      const double d = logistic_slope(labels[i], z);
      gw += d * logits[i];
      gc += d;
    }
    g[0] = gw * w / n;
    g[1] = gc / n;
    return value / n;
  };
  const LbfgsResult r = minimize_lbfgs(f, {0.0, 0.0}, lbfgs_config(opt));
  if (!std::isfinite(r.value)) throw NumericalError("fit_platt: non-finite objective");
  return {std::exp(-r.x[0]), r.x[1]};
}

BetaParams fit_beta(std::span<const double> estimates, std::span<const Label> labels, const OptimizerConfig& opt,
                    double eps) {
  require_both_classes(labels, estimates.size(), "fit_beta");
  const double n = static_cast<double>(estimates.size());
  std::vector<double> log_p(estimates.size()), log_q(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double e = clamp_probability(estimates[i], eps);
    log_p[i] = std::log(e);
    log_q[i] = -std::log1p(-e);
  }
  // x = (ln a, ln b, c)
  const Objective f = [&](std::span<const double> x, std::span<double> g) {
    const double a = std::exp(x[0]);
    const double b = std::exp(x[1]);
    double value = 0.0, ga = 0.0, gb = 0.0, gc = 0.0;
    for (std::size_t i = 0; i < log_p.size(); ++i) {
      const double z = a * log_p[i] + b * log_q[i] + x[2];
      value += logistic_loss(labels[i], z);
      const double d = logistic_slope(labels[i], z);
      ga += d * log_p[i];
      gb += d * log_q[i];
      gc += d;
    }
    g[0] = ga * a / n;
    g[1] = gb * b / n;
    g[2] = gc / n;
    return value / n;
  };
  const LbfgsResult r = minimize_lbfgs(f, {0.0, 0.0, 0.0}, lbfgs_config(opt));
  if (!std::isfinite(r.value)) throw NumericalError("fit_beta: non-finite objective");
  return {std::exp(r.x[0]), std::exp(r.x[1]), r.x[2]};
}

HeadParams fit_head(const Matrix& features, std::span<const Label> labels, const OptimizerConfig& opt) {
  require_both_classes(labels, static_cast<std::size_t>(features.rows), "fit_head");
  const int d = features.cols;
  if (d <= 0) throw std::invalid_argument("fit_head: features must have at least one column");
  const double n = static_cast<double>(features.rows);

  std::mt19937_64 rng(opt.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> init(-bound, bound);
  std::vector<double> x0(d + 1, 0.0);
  for (int j = 0; j < d; ++j) x0[j] = init(rng);

  // x = (weights..., bias)
  const Objective f = [&](std::span<const double> x, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    double value = 0.0;
    for (int i = 0; i < features.rows; ++i) {
      const double* row = features.values.data() + static_cast<std::size_t>(i) * d;
      double z = x[d];
      for (int j = 0; j < d; ++j) z += x[j] * row[j];
      value += logistic_loss(labels[i], z);
      const double s = logistic_slope(labels[i], z);
      for (int j = 0; j < d; ++j) g[j] += s * row[j];
      g[d] += s;
    }
    for (double& v : g) v /= n;
    return value / n;
  };
  const LbfgsResult r = minimize_lbfgs(f, std::move(x0), lbfgs_config(opt));
  if (!std::isfinite(r.value)) throw NumericalError("fit_head: non-finite objective");
  HeadParams p;
  p.weights.assign(r.x.begin(), r.x.begin() + d);
  p.bias = r.x[d];
  return p;
}

int reliability_bin_index(double p, int K) {
  if (K < 1) throw std::invalid_argument("reliability: K must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("reliability: estimate outside [0, 1]");
  const auto edge = [K](int k) { return static_cast<double>(k) / K; };
  int k = static_cast<int>(std::ceil(p * K)) - 1;
  k = std::clamp(k, 0, K - 1);
  while (k > 0 && p <= edge(k)) --k;
  while (k < K - 1 && p > edge(k + 1)) ++k;
  return k;
}

ReliabilityHistogram reliability(std::span<const double> preds, std::span<const Label> labels, int K) {
  if (K < 1) throw std::invalid_argument("reliability: K must be >= 1");
  if (preds.size() != labels.size()) throw std::invalid_argument("reliability: preds and labels differ in length");
  ReliabilityHistogram h;
  h.n = preds.size();
  h.bins.resize(K);
  for (int k = 0; k < K; ++k) {
    h.bins[k].lower = static_cast<double>(k) / K;
    h.bins[k].upper = static_cast<double>(k + 1) / K;
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto& bin = h.bins[reliability_bin_index(preds[i], K)];
    ++bin.count;
    bin.freq += as_double(labels[i]);
    bin.conf += preds[i];
  }
  for (auto& bin : h.bins) {
    if (bin.count == 0) continue;
    bin.freq /= static_cast<double>(bin.count);
    bin.conf /= static_cast<double>(bin.count);
  }
  return h;
}

double ece(const ReliabilityHistogram& hist) {
  if (hist.n == 0) throw std::invalid_argument("ece: empty histogram");
  double total = 0.0;
  for (const auto& bin : hist.bins) {
    if (bin.count == 0) continue;
    total += static_cast<double>(bin.count) / static_cast<double>(hist.n) * std::abs(bin.freq - bin.conf);
  }
  return total;
}

double mce(const ReliabilityHistogram& hist) {
  if (hist.n == 0) throw std::invalid_argument("mce: empty histogram");
  double worst = 0.0;
  for (const auto& bin : hist.bins) {
    if (bin.count == 0) continue;
    worst = std::max(worst, std::abs(bin.freq - bin.conf));
  }
  return worst;
}

std::string fitting_digest(std::span<const double> values, std::span<const Label> labels) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](const unsigned char* bytes, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < values.size(); ++i) {
    unsigned char buf[8];
    std::memcpy(buf, &values[i], sizeof(buf));
    mix(buf, sizeof(buf));
    const unsigned char y = i < labels.size() ? static_cast<unsigned char>(labels[i]) : 0xff;
    mix(&y, 1);
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string_view calibrator_kind(const CalibratorParams& params) {
  switch (params.index()) {
    case 0: return "platt";
    case 1: return "beta";
    default: return "head";
  }
}

std::string serialize(const CalibratorDocument& doc) {
  std::ostringstream os;
  os << "kind=" << calibrator_kind(doc.params) << "\n";
  if (const auto* p = std::get_if<PlattParams>(&doc.params)) {
    os << "temperature=" << format_double(p->temperature) << "\n";
    os << "intercept=" << format_double(p->intercept) << "\n";
  } else if (const auto* b = std::get_if<BetaParams>(&doc.params)) {
    os << "a=" << format_double(b->a) << "\n";
    os << "b=" << format_double(b->b) << "\n";
    os << "c=" << format_double(b->c) << "\n";
  } else {
    const auto& h = std::get<HeadParams>(doc.params);
    os << "weights=";
    for (std::size_t i = 0; i < h.weights.size(); ++i) os << (i ? "," : "") << format_double(h.weights[i]);
    os << "\n";
    os << "bias=" << format_double(h.bias) << "\n";
  }
  os << "seed=" << doc.seed << "\n";
  os << "fitting_digest=" << doc.fitting_digest << "\n";
  return os.str();
}

CalibratorDocument parse_calibrator_document(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("calibrator document: expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto need = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError("calibrator document: missing '" + key + "'");
    return it->second;
  };
  CalibratorDocument doc;
  const std::string& kind = need("kind");
  if (kind == "platt") {
    PlattParams p{parse_double(need("temperature"), "temperature"), parse_double(need("intercept"), "intercept")};
    doc.params = p;
  } else if (kind == "beta") {
    doc.params = BetaParams{parse_double(need("a"), "a"), parse_double(need("b"), "b"), parse_double(need("c"), "c")};
  } else if (kind == "head") {
    HeadParams h;
    std::istringstream ws(need("weights"));
    std::string item;
    while (std::getline(ws, item, ',')) h.weights.push_back(parse_double(item, "weights"));
    h.bias = parse_double(need("bias"), "bias");
    doc.params = std::move(h);
  } else {
    throw DataError("calibrator document: unknown kind '" + kind + "'");
  }
  try {
    doc.seed = std::stoull(need("seed"));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("calibrator document: bad seed");
  }
  doc.fitting_digest = need("fitting_digest");
  return doc;
}

}  // namespace calad
