#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "calad/calibration.hpp"
#include "calad/errors.hpp"
#include "calad/metrics.hpp"
#include "oracles.hpp"

using namespace calad;

TEST_CASE("platt transform") {
  for (double z : {-3.0, 0.0, 0.7, 12.0}) {
    const auto v = platt_transform(z, {1.0, 0.0});
    CHECK(v.logit == z);
    CHECK(v.probability == doctest::Approx(sigmoid(z)));
  }
  const auto v = platt_transform(2.0, {2.0, -1.0});
  CHECK(v.logit == 0.0);
  CHECK(v.probability == 0.5);
  CHECK_THROWS_AS(platt_transform(1.0, {0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(platt_transform(1.0, {-1.0, 0.0}), std::invalid_argument);
  double prev = -1.0;
  for (double z = -10.0; z <= 10.0; z += 0.1) {
    const double p = platt_transform(z, {0.7, 0.3}).probability;
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("beta transform") {
  for (double p : {0.01, 0.2, 0.5, 0.77, 0.99}) {
    CHECK(beta_transform(p, {1.0, 1.0, 0.0}).probability == doctest::Approx(p).epsilon(1e-12));
  }
  const auto v = beta_transform(0.5, {2.0, 1.0, 0.0});
  CHECK(v.logit == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(v.probability == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(std::isfinite(beta_transform(0.0, {1.5, 0.5, 0.1}).logit));
  CHECK(std::isfinite(beta_transform(1.0, {1.5, 0.5, 0.1}).logit));
  CHECK_THROWS_AS(beta_transform(0.5, {-1.0, 1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("beta generalizes platt") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> T(0.2, 5.0), c(-3.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const PlattParams pp{T(rng), c(rng)};
    const BetaParams bp{1.0 / pp.temperature, 1.0 / pp.temperature, pp.intercept};
    for (double z = -12.0; z <= 12.0; z += 0.5) {
      const double eta = sigmoid(z);
      CHECK(std::abs(beta_transform(eta, bp).probability - platt_transform(z, pp).probability) < 1e-12);
    }
  }
}

TEST_CASE("head transform") {
  HeadParams p{{0.0, 0.0, 0.0}, 0.0};
  const std::vector<double> f{0.5, 0.5, 0.25};
  CHECK(head_transform(f, p).probability == 0.5);
  p = {{1.0, -1.0, 2.0}, 0.5};
  const auto v = head_transform(f, p);
  CHECK(v.logit == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(v.probability == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  const std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(head_transform(wrong, p), std::invalid_argument);
  HeadParams lin{{2.0, 0.0}, 0.0};
  const std::vector<double> a{1.0, 5.0}, b{3.0, 5.0};
  CHECK(head_transform(b, lin).logit - head_transform(a, lin).logit == doctest::Approx(4.0));
}

TEST_CASE("fit platt recovers generator parameters") {
  const auto s = oracle::platt_generator(20000, 3.0, 0.5, 6.0, 17);
  const PlattParams p = fit_platt(s.logits, s.labels);
  CHECK(p.temperature == doctest::Approx(3.0).epsilon(0.1 / 3.0));
  CHECK(std::abs(p.intercept - 0.5) < 0.1);
  CHECK(mean_platt_loss(s.logits, s.labels, p) <= mean_platt_loss(s.logits, s.labels, {1.0, 0.0}));

  const auto ident = oracle::platt_generator(20000, 1.0, 0.0, 3.0, 18);
  const PlattParams q = fit_platt(ident.logits, ident.labels);
  CHECK(std::abs(q.temperature - 1.0) < 0.05);
  CHECK(std::abs(q.intercept) < 0.05);

  std::vector<Label> one(10, Label::normal);
  std::vector<double> z(10, 0.3);
  CHECK_THROWS_AS(fit_platt(z, one), std::invalid_argument);
}

TEST_CASE("platt repairs an overconfident model") {
  auto s = oracle::platt_generator(5000, 1.0, 0.0, 2.0, 23);
  for (double& z : s.logits) z *= 5.0;
  std::vector<double> before, after;
  const PlattParams p = fit_platt(s.logits, s.labels);
  for (double z : s.logits) {
    before.push_back(sigmoid(z));
    after.push_back(platt_transform(z, p).probability);
  }
  CHECK(ece(reliability(after, s.labels)) <= ece(reliability(before, s.labels)));
}

TEST_CASE("fit beta") {
  const auto s = oracle::platt_generator(20000, 2.0, 0.3, 4.0, 31);
  std::vector<double> eta;
  for (double z : s.logits) eta.push_back(sigmoid(z));
  const BetaParams b = fit_beta(eta, s.labels);
  CHECK(std::abs(b.a - b.b) < 0.1);
  CHECK(mean_beta_loss(eta, s.labels, b) <= mean_beta_loss(eta, s.labels, {1.0, 1.0, 0.0}));

  // Asymmetric generator: y ~ Bernoulli(sigmoid(2 ln p - 0.5 ln(1 - p))).
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> est;
  std::vector<Label> lab;
  for (int i = 0; i < 20000; ++i) {
    const double p = 0.01 + 0.98 * u(rng);
    const double t = sigmoid(2.0 * std::log(p) - 0.5 * std::log(1.0 - p));
    est.push_back(p);
    lab.push_back(u(rng) < t ? Label::anomalous : Label::normal);
  }
  const BetaParams r = fit_beta(est, lab);
  CHECK(std::abs(r.a - 2.0) < 0.15);
  CHECK(std::abs(r.b - 0.5) < 0.15);
  CHECK(std::abs(r.c) < 0.15);

  std::vector<double> saturated;
  for (std::size_t i = 0; i < lab.size(); ++i) saturated.push_back(lab[i] == Label::anomalous ? (i % 7 ? 1.0 : 0.0) : (i % 5 ? 0.0 : 1.0));
  const BetaParams sat = fit_beta(saturated, lab);
  CHECK(std::isfinite(sat.a));
  CHECK(std::isfinite(sat.b));
  CHECK(std::isfinite(sat.c));
  std::vector<Label> one(4, Label::anomalous);
  CHECK_THROWS_AS(fit_beta(std::vector<double>(4, 0.5), one), std::invalid_argument);
}

TEST_CASE("fit head") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n(0.0, 0.3);
  Matrix f(200, 2);
  std::vector<Label> y;
  for (int i = 0; i < 200; ++i) {
    const bool pos = i % 2;
    f.at(i, 0) = (pos ? 2.0 : -2.0) + n(rng);
    f.at(i, 1) = n(rng);
    y.push_back(pos ? Label::anomalous : Label::normal);
  }
  const HeadParams h = fit_head(f, y, {});
  std::vector<double> scores;
  for (int i = 0; i < 200; ++i) scores.push_back(head_transform(std::span<const double>(&f.values[i * 2], 2), h).logit);
  CHECK(auroc(scores, y) == 1.0);

  // Label-independent constant features: predictions fall to the prior.
  Matrix flat(400, 3, 1.0);
  std::vector<Label> prior;
  for (int i = 0; i < 400; ++i) prior.push_back(i % 4 == 0 ? Label::anomalous : Label::normal);
  const HeadParams hp = fit_head(flat, prior, {});
  const std::vector<double> row(3, 1.0);
  CHECK(head_transform(row, hp).probability == doctest::Approx(0.25).epsilon(1e-4));

  // One feature equal to the true logit.
  const auto s = oracle::platt_generator(20000, 1.0, 0.0, 3.0, 43);
  Matrix z(20000, 1);
  z.values = s.logits;
  const HeadParams hz = fit_head(z, s.labels, {});
  CHECK(std::abs(hz.weights[0] - 1.0) < 0.1);
  CHECK(std::abs(hz.bias) < 0.1);

  const HeadParams again = fit_head(f, y, {});
  CHECK(again.weights == h.weights);
  CHECK(again.bias == h.bias);
  CHECK_THROWS_AS(fit_head(f, std::vector<Label>(200, Label::normal), {}), std::invalid_argument);
}

TEST_CASE("reliability binning") {
  std::vector<double> p(10, 0.7);
  std::vector<Label> y(10, Label::normal);
  for (int i = 0; i < 7; ++i) y[i] = Label::anomalous;
  const auto h = reliability(p, y, 15);
  int nonempty = 0;
  for (const auto& b : h.bins) {
    if (b.count == 0) continue;
    ++nonempty;
    CHECK(b.freq == doctest::Approx(0.7));
    CHECK(b.conf == doctest::Approx(0.7));
  }
  CHECK(nonempty == 1);
  CHECK(ece(h) == doctest::Approx(0.0).scale(1.0));

  CHECK(reliability_bin_index(0.2, 5) == 0);
  CHECK(reliability_bin_index(0.0, 5) == 0);
  CHECK(reliability_bin_index(0.2000001, 5) == 1);
  CHECK(reliability_bin_index(1.0, 5) == 4);

  const std::vector<double> hand{0.0, 0.05, 0.1, 0.15, 0.33, 0.5, 0.51, 0.9, 0.95, 1.0};
  const std::vector<Label> hy{Label::normal, Label::anomalous, Label::normal, Label::normal, Label::anomalous,
                              Label::normal, Label::anomalous, Label::anomalous, Label::normal, Label::anomalous};
  const auto hh = reliability(hand, hy, 10);
  std::size_t total = 0;
  for (const auto& b : hh.bins) total += b.count;
  CHECK(total == 10);
  const auto o = oracle::naive_calibration(hand, hy, 10);
  CHECK(ece(hh) == doctest::Approx(o.ece).epsilon(1e-15));
  CHECK(mce(hh) == doctest::Approx(o.mce).epsilon(1e-15));
}

TEST_CASE("ece and mce") {
  // single bin, freq 0.7, conf 0.9
  std::vector<double> p(10, 0.9);
  std::vector<Label> y(10, Label::normal);
  for (int i = 0; i < 7; ++i) y[i] = Label::anomalous;
  CHECK(ece(reliability(p, y)) == doctest::Approx(0.2));
  CHECK(mce(reliability(p, y)) == doctest::Approx(0.2));

  // two bins, 60 at conf 0.3 with freq 0.2 and 40 at conf 0.9 with freq 0.6
  std::vector<double> q;
  std::vector<Label> qy;
  for (int i = 0; i < 60; ++i) q.push_back(0.3), qy.push_back(i < 12 ? Label::anomalous : Label::normal);
  for (int i = 0; i < 40; ++i) q.push_back(0.9), qy.push_back(i < 24 ? Label::anomalous : Label::normal);
  const auto h = reliability(q, qy, 15);
  CHECK(ece(h) == doctest::Approx(0.18));
  CHECK(mce(h) == doctest::Approx(0.3));

  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> sz(1, 1000);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = sz(rng);
    std::vector<double> r;
    std::vector<Label> ry;
    for (int i = 0; i < n; ++i) {
      r.push_back(trial % 3 == 0 ? std::round(u(rng) * 20.0) / 20.0 : u(rng));
      ry.push_back(u(rng) < 0.4 ? Label::anomalous : Label::normal);
    }
    const auto rh = reliability(r, ry, 15);
    const auto o = oracle::naive_calibration(r, ry, 15);
    CHECK(ece(rh) == doctest::Approx(o.ece).epsilon(1e-12));
    CHECK(mce(rh) == o.mce);
    CHECK(mce(rh) >= ece(rh));
  }
  ReliabilityHistogram empty;
  CHECK_THROWS(ece(empty));
}

TEST_CASE("calibrator documents") {
  const std::vector<double> v{0.1, 0.9};
  const std::vector<Label> y{Label::normal, Label::anomalous};
  const std::string d = fitting_digest(v, y);
  CHECK(d.size() == 16);
  CHECK(d == fitting_digest(v, y));
  const std::vector<Label> flipped{Label::anomalous, Label::normal};
  CHECK(d != fitting_digest(v, flipped));
  for (const CalibratorParams& params :
       {CalibratorParams{PlattParams{2.5, -0.125}}, CalibratorParams{BetaParams{1.5, 0.25, 0.1}},
        CalibratorParams{HeadParams{{0.1, -0.2, 0.3}, 0.7}}}) {
    const CalibratorDocument doc{params, 42, d};
    const CalibratorDocument back = parse_calibrator_document(serialize(doc));
    CHECK(back.seed == 42);
    CHECK(back.fitting_digest == d);
    CHECK(serialize(back) == serialize(doc));
    CHECK(calibrator_kind(back.params) == calibrator_kind(params));
  }
  CHECK_THROWS_AS(parse_calibrator_document("kind=platt\n"), DataError);
  CHECK_THROWS_AS(parse_calibrator_document("nonsense"), DataError);
}
