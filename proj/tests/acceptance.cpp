#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "architectures.hpp"
#include "calad/calibration.hpp"
#include "calad/fft.hpp"
#include "calad/harness.hpp"
#include "calad/losses.hpp"
#include "calad/metrics.hpp"
#include "calad/perturbation.hpp"
#include "calad/spectral.hpp"
#include "oracles.hpp"

using namespace calad;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Outcome propriety() {
  Outcome o;
  const std::vector<double> grid = propriety_probe_grid();
  double worst = 0.0;
  for (const LossSpec& loss : {make_log_loss(), make_logistic_loss()}) {
    for (const auto& p : check_stationarity(loss, grid)) {
      o.require(p.finite, "non-finite residual");
      worst = std::max(worst, std::abs(p.residual));
    }
    for (const auto& c : check_strict_propriety(loss, grid)) {
      if (!(c.second_derivative > 0.0)) o.require(false, loss.name + " curvature not positive at " + fmt("%.2f", c.eta));
    }
  }
  o.require(worst < kStationarityTolerance, "log/logistic residual " + fmt("%.3g", worst));
  double hsc_gap = 0.0, hsc_worst_residual = 0.0;
  for (const auto& p : check_stationarity(make_hsc_loss(), grid)) {
    hsc_gap = std::max(hsc_gap, std::abs(p.residual - p.eta));
    hsc_worst_residual = std::max(hsc_worst_residual, std::abs(p.residual));
  }
  o.require(hsc_gap < kStationarityTolerance, "HSC residual differs from eta by up to " + fmt("%.3g", hsc_gap) +
                                                  " (measured |residual| <= " + fmt("%.3g", hsc_worst_residual) + ")");
  return o;
}

Outcome beta_generalizes_platt() {
  Outcome o;
  // Probe logits stay where sigmoid(z) keeps enough relative precision in 1 - eta
  // for a 1e-12 comparison.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> logT(std::log(0.1), std::log(10.0)), c(-5.0, 5.0), z(-10.0, 10.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const PlattParams pp{std::exp(logT(rng)), c(rng)};
    const BetaParams bp{1.0 / pp.temperature, 1.0 / pp.temperature, pp.intercept};
    for (int i = 0; i < 1000; ++i) {
      const double logit_in = z(rng);
      worst = std::max(worst,
                       std::abs(beta_transform(sigmoid(logit_in), bp).probability - platt_transform(logit_in, pp).probability));
    }
  }
  o.require(worst <= 1e-12, "max gap " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max gap " + fmt("%.3g", worst);
  return o;
}

Outcome rank_invariance() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(20, 400), coarse(-20, 20);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int set = 0; set < 50; ++set) {
    const int m = size(rng);
    std::vector<double> z;
    std::vector<Label> y;
    for (int i = 0; i < m; ++i) {
      const bool pos = u(rng) < 0.4;
      z.push_back(set % 2 ? coarse(rng) / 5.0 + (pos ? 0.5 : 0.0) : n(rng) + (pos ? 1.0 : 0.0));
      y.push_back(pos ? Label::anomalous : Label::normal);
    }
    y[0] = Label::anomalous, y[1] = Label::normal;
    std::vector<double> eta;
    for (double v : z) eta.push_back(sigmoid(v));
    const PlattParams pp = fit_platt(z, y);
    const BetaParams bp = fit_beta(eta, y);
    std::vector<double> zp, zb;
    for (double v : z) zp.push_back(platt_transform(v, pp).probability);
    for (double e : eta) zb.push_back(beta_transform(e, bp).probability);
    const double before = auroc(z, y);
    if (auroc(zp, y) != before) o.require(false, "Platt changed AUROC on set " + std::to_string(set));
    if (auroc(zb, y) != before) o.require(false, "Beta changed AUROC on set " + std::to_string(set));
  }
  return o;
}

Outcome calibration_recovery() {
  Outcome o;
  const auto s = oracle::platt_generator(20000, 3.0, 0.5, 4.0, 4);
  const PlattParams p = fit_platt(s.logits, s.labels);
  std::vector<double> raw, fitted;
  for (double z : s.logits) {
    raw.push_back(sigmoid(z));
    fitted.push_back(platt_transform(z, p).probability);
  }
  const double pre = ece(reliability(raw, s.labels, 15));
  const double post = ece(reliability(fitted, s.labels, 15));
  o.require(std::abs(p.temperature - 3.0) <= 0.1, "T = " + fmt("%.4f", p.temperature));
  o.require(std::abs(p.intercept - 0.5) <= 0.1, "c = " + fmt("%.4f", p.intercept));
  o.require(post < 0.02, "post-fit ECE " + fmt("%.4f", post));
  o.require(pre > 0.05, "pre-fit ECE " + fmt("%.4f", pre));
  if (o.pass) {
    o.detail = "T = " + fmt("%.4f", p.temperature) + ", c = " + fmt("%.4f", p.intercept) + ", ECE " + fmt("%.4f", pre) +
               " -> " + fmt("%.4f", post);
  }
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(2, 500), coarse(0, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double auroc_gap = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = size(rng);
    std::vector<double> s;
    std::vector<Label> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(trial % 2 ? coarse(rng) / 10.0 : u(rng));
      y.push_back(u(rng) < 0.35 ? Label::anomalous : Label::normal);
    }
    y[0] = Label::anomalous, y[1] = Label::normal;
    auroc_gap = std::max(auroc_gap, std::abs(auroc(s, y) - oracle::pairwise_auroc(s, y)));
    std::vector<double> p;
    for (double v : s) p.push_back(trial % 3 == 0 ? std::round(v * 15.0) / 15.0 : v);
    const auto h = reliability(p, y, 15);
    const auto naive = oracle::naive_calibration(p, y, 15);
    if (ece(h) != naive.ece || mce(h) != naive.mce) o.require(false, "ECE/MCE differ from naive binning");
  }
  o.require(auroc_gap < 1e-12, "AUROC gap " + fmt("%.3g", auroc_gap));

  double aupro_gap = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<LabelMask> masks;
    std::vector<Matrix> maps;
    std::vector<std::vector<std::vector<int>>> regions;
    for (int img = 0; img < 1 + trial % 3; ++img) {
      LabelMask m(8, 8);
      for (auto& l : m.labels) l = u(rng) < 0.2 ? Label::anomalous : Label::normal;
      Matrix s(8, 8);
      for (std::size_t k = 0; k < s.size(); ++k)
        s.values[k] = (trial % 2 ? coarse(rng) / 9.0 : u(rng)) + (m.labels[k] == Label::anomalous ? 0.3 : 0.0);
      regions.push_back(oracle::components(m));
      masks.push_back(m);
      maps.push_back(s);
    }
    const RegionMaskSet set = decompose_regions(masks);
    if (set.regions.empty()) continue;
    aupro_gap = std::max(aupro_gap, std::abs(aupro(maps, set) - oracle::sweep_aupro(maps, regions, masks, kDefaultFprCap)));
  }
  o.require(aupro_gap < 1e-9, "AUPRO gap " + fmt("%.3g", aupro_gap));
  const std::vector<double> xs{1, 2, 3, 4}, ys{1, 3, 2, 4};
  const auto rho = spearman(xs, ys);
  o.require(rho && std::abs(*rho - 0.8) < 1e-12, "Spearman");
  if (o.pass) o.detail = "AUROC gap " + fmt("%.2g", auroc_gap) + ", AUPRO gap " + fmt("%.2g", aupro_gap);
  return o;
}

Outcome gradient_contract() {
  Outcome o;
  std::mt19937_64 rng(6);
  double worst_in = 0.0, worst_param = 0.0;
  for (const auto& arch : probe::architectures()) {
    for (int k = 0; k < 20; ++k) {
      const auto x = probe::probe_input(arch, rng);
      const Label y = (k % 2 && !is_localization(arch.pipeline.head)) ? Label::anomalous : Label::normal;
      const double ein = probe::input_gradient_error(arch, x, y);
      LabeledData batch;
      batch.inputs = {x, probe::probe_input(arch, rng)};
      batch.labels = {y, Label::normal};
      const double ep = probe::param_gradient_error(arch, batch);
      worst_in = std::max(worst_in, ein);
      worst_param = std::max(worst_param, ep);
      if (ein >= 1e-5 || ep >= 1e-5) o.require(false, arch.name);
    }
  }
  o.detail = (o.detail.empty() ? "" : o.detail + "; ") + "worst relative error input " + fmt("%.2g", worst_in) +
             ", params " + fmt("%.2g", worst_param);
  return o;
}

Outcome perturbation_law() {
  Outcome o;
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (const auto& arch : probe::architectures()) {
    for (int k = 0; k < 3; ++k) {
      const auto x = probe::probe_input(arch, rng);
      const auto g = input_gradient(arch.state, arch.pipeline, x, Label::normal);
      double l1 = 0.0;
      for (double v : g) l1 += std::abs(v);
      if (l1 < 1e-6) continue;
      const double l0 = evaluate(arch.state, arch.pipeline, x, Label::normal).loss;
      for (double eps : {1e-4, 1e-5, 1e-6}) {
        PerturbConfig cfg;
        cfg.epsilon = eps;
        const double l = evaluate(arch.state, arch.pipeline, perturb_input(arch.state, arch.pipeline, x, cfg), Label::normal).loss;
        const double rel = std::abs((l0 - l) / eps - l1) / l1;
        worst = std::max(worst, rel);
        if (rel > 0.1) o.require(false, arch.name + " at eps " + fmt("%g", eps));
      }
      PerturbConfig zero;
      zero.epsilon = 0.0;
      if (perturb_input(arch.state, arch.pipeline, x, zero) != x) o.require(false, "eps = 0 is not the identity");
    }
  }
  o.require(PerturbConfig{}.epsilon == 1.4e-3, "default epsilon");
  o.detail = (o.detail.empty() ? "" : o.detail + "; ") + "worst relative deviation " + fmt("%.3g", worst);
  return o;
}

const ResultRow& row(const std::vector<ResultRow>& rows, const std::string& method) {
  return *std::find_if(rows.begin(), rows.end(), [&](const ResultRow& r) { return r.method == method; });
}

Outcome directional_replication() {
  Outcome o;
  ExperimentConfig a;
  a.dataset = "gaussian2d";
  a.loss = "svdd";
  a.calibrators = {CalibratorKind::platt};
  a.anomaly_sources = {AnomalySource::spectral, AnomalySource::oe};
  const ExperimentResult ra = run_experiment(a);
  const double uncal = row(ra.summary, "Fully Trained").ece;
  const double platt_spectral = row(ra.summary, "Platt Spectral").ece;
  const double platt_oe = row(ra.summary, "Platt OE").ece;
  o.require(platt_spectral < uncal, "(a) mean ECE Platt Spectral " + fmt("%.4f", platt_spectral) +
                                        " is not below uncalibrated " + fmt("%.4f", uncal) + " (Platt OE " +
                                        fmt("%.4f", platt_oe) + ")");

  ExperimentConfig b;
  b.dataset = "steep_basin";
  b.loss = "svdd";
  b.calibrators = {CalibratorKind::platt};
  b.anomaly_sources = {AnomalySource::spectral};
  const ExperimentResult rb = run_experiment(b);
  int holds = 0, strict = 0;
  std::string per_seed;
  for (const auto& s : rb.seeds) {
    const ResultRow& r = row(s.rows, "Platt Spectral");
    holds += r.auroc_perturbed >= r.auroc;
    strict += r.auroc_perturbed > r.auroc;
    per_seed += fmt(" %.4f", r.auroc) + "->" + fmt("%.4f", r.auroc_perturbed);
  }
  o.require(holds >= 4, "(b) perturbed >= unperturbed in only " + std::to_string(holds) + " of 5 seeds");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("(b) ") + std::to_string(holds) + "/5 seeds hold, " +
              std::to_string(strict) + " strictly:" + per_seed;
  return o;
}

Outcome spectral_synthesis() {
  Outcome o;
  double residue = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SpectralConfig cfg;
    cfg.channels = 3;
    cfg.seed = seed;
    residue = std::max(residue, synthesize(cfg).imaginary_residue);
  }
  o.require(residue < 1e-9, "imaginary residue " + fmt("%.3g", residue));

  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexGrid x(16, 16);
  for (auto& v : x.values) v = Complex(n(rng), n(rng));
  const ComplexGrid X = dft2(x), D = oracle::direct_dft(x, -1.0), back = idft2(X);
  double fwd = 0.0, rt = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < x.values.size(); ++k) {
    fwd = std::max(fwd, std::abs(X.values[k] - D.values[k]) / std::abs(D.values[k]));
    rt = std::max(rt, std::abs(back.values[k] - x.values[k]));
    scale = std::max(scale, std::abs(x.values[k]));
  }
  o.require(fwd < 1e-9, "DFT vs direct " + fmt("%.3g", fwd));
  o.require(rt / scale < 1e-9, "round trip " + fmt("%.3g", rt / scale));

  double slope_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SpectralConfig cfg;
    cfg.height = cfg.width = 64;
    cfg.seed = 1000 + seed;
    const SpectralImage img = synthesize(cfg);
    slope_gap = std::max(slope_gap, std::abs(-oracle::spectral_slope(img.image) - img.exponents[0].a));
  }
  o.require(slope_gap <= 0.3, "slope gap " + fmt("%.3f", slope_gap));

  std::mt19937_64 draws(10);
  std::vector<double> as, bs;
  for (int k = 0; k < 10000; ++k) {
    const ExponentPair e = draw_exponents(draws, 0.5, 3.5);
    as.push_back(e.a);
    bs.push_back(e.b);
  }
  const double ka = oracle::ks_uniform(as, 0.5, 3.5), kb = oracle::ks_uniform(bs, 0.5, 3.5);
  const double crit = oracle::ks_critical_1pct(10000);
  o.require(ka < crit && kb < crit, "KS " + fmt("%.4f", std::max(ka, kb)));
  if (o.pass) {
    o.detail = "residue " + fmt("%.2g", residue) + ", slope gap " + fmt("%.3f", slope_gap) + ", KS " +
               fmt("%.4f", std::max(ka, kb)) + " < " + fmt("%.4f", crit);
  }
  return o;
}

Outcome harness_determinism() {
  Outcome o;
  ExperimentConfig cfg;
  cfg.calibrators = {CalibratorKind::platt, CalibratorKind::beta, CalibratorKind::head};
  cfg.anomaly_sources = {AnomalySource::oe, AnomalySource::spectral};
  const std::string first = summary_csv(run_experiment(cfg).summary);
  const std::string second = summary_csv(run_experiment(cfg).summary);
  o.require(first == second, "summary CSV differs between runs");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const OePartition p = partition_oe(400, seed);
    std::set<std::size_t> train(p.train.begin(), p.train.end());
    for (std::size_t i : p.calibration)
      if (train.count(i)) o.require(false, "OE calibration overlaps training");
    for (std::size_t i : p.evaluation)
      if (train.count(i)) o.require(false, "OE evaluation overlaps training");
  }
  for (std::size_t n : {4, 100, 400, 1000}) {
    const SplitIndices s = split(n, 0.75, 3);
    if (s.train.size() != 3 * n / 4 || s.calibration.size() != n / 4) o.require(false, "split of " + std::to_string(n));
  }
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 when no runtime bound is stated
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "propriety suite", 1.0, propriety},
      {2, "beta generalizes platt", 1.0, beta_generalizes_platt},
      {3, "rank invariance", 1.0, rank_invariance},
      {4, "calibration recovery", 10.0, calibration_recovery},
      {5, "metric oracles", 0.0, metric_oracles},
      {6, "gradient contract", 5.0, gradient_contract},
      {7, "perturbation first-order law", 0.0, perturbation_law},
      {8, "directional replication", 120.0, directional_replication},
      {9, "spectral synthesis", 30.0, spectral_synthesis},
      {10, "harness determinism", 0.0, harness_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0 && secs >= c.budget_s) o.require(false, "runtime over " + fmt("%.0f s", c.budget_s));
    failed += !o.pass;
    std::printf("[%s] %2d %-30s %7.3f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
