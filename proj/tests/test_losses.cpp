#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "calad/errors.hpp"
#include "calad/losses.hpp"

using namespace calad;

TEST_CASE("link pair") {
  CHECK(link_pair(0.0, LinkDirection::to_prob) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(link_pair(0.5, LinkDirection::to_logit) == doctest::Approx(0.0));
  CHECK(link_pair(std::log(3.0), LinkDirection::to_prob) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK_THROWS_AS(link_pair(0.0, LinkDirection::to_logit), DomainError);
  CHECK_THROWS_AS(link_pair(1.0, LinkDirection::to_logit), DomainError);
  for (double v = -15.0; v <= 15.0; v += 0.5) {
    CHECK(logit(sigmoid(v)) == doctest::Approx(v).epsilon(1e-6));
  }
}

TEST_CASE("log loss") {
  CHECK(log_loss(Label::anomalous, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log_loss(Label::anomalous, 1.0) <= -std::log(1.0 - 1e-7) + 1e-15);
  CHECK(std::isfinite(log_loss(Label::normal, 1.0)));
  CHECK(std::isfinite(log_loss(Label::anomalous, 0.0)));
}

TEST_CASE("logistic loss") {
  CHECK(logistic_loss(Label::normal, 100.0) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(logistic_loss(Label::anomalous, -800.0) == doctest::Approx(800.0));
  CHECK(std::isfinite(logistic_loss(Label::normal, 800.0)));
  for (double z = -30.0; z <= 30.0; z += 0.25) {
    for (Label y : {Label::normal, Label::anomalous}) {
      const double p = sigmoid(z);
      if (p <= kDefaultClamp || p >= 1.0 - kDefaultClamp) continue;
      CHECK(std::abs(logistic_loss(y, z) - log_loss(y, p)) < 1e-10 * std::max(1.0, logistic_loss(y, z)));
    }
  }
}

TEST_CASE("hsc loss") {
  CHECK(hsc_loss(Label::normal, 2.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(hsc_loss(Label::anomalous, std::log(2.0)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(hsc_loss(Label::anomalous, 3.0) == doctest::Approx(0.0510691809427).epsilon(1e-10));
  const auto at_zero = hsc_loss_eval(Label::anomalous, 0.0);
  CHECK(at_zero.clamped);
  CHECK(std::isfinite(at_zero.value));
}

TEST_CASE("pseudo huber") {
  CHECK(pseudo_huber(0.0) == 0.0);
  CHECK(pseudo_huber(3.0) == doctest::Approx(1.0));
  CHECK(pseudo_huber(99.0) == doctest::Approx(9.0));
  double prev = -1.0;
  for (double s = 0.0; s < 50.0; s += 0.1) {
    const double v = pseudo_huber(s);
    CHECK(v > prev);
    CHECK(v <= s + 1e-12);
    prev = v;
  }
  // 1-Lipschitz in the norm
  for (double a = 0.0; a < 10.0; a += 0.37) {
    for (double b = 0.0; b < 10.0; b += 0.53) {
      CHECK(std::abs(pseudo_huber(a * a) - pseudo_huber(b * b)) <= std::abs(a - b) + 1e-12);
    }
  }
}

TEST_CASE("svdd score") {
  const std::vector<double> e{3.0, 4.0}, c{0.0, 0.0};
  CHECK(svdd_score(e, c) == 25.0);
  const std::vector<double> short_c{0.0};
  CHECK_THROWS_AS(svdd_score(e, short_c), std::invalid_argument);
}

TEST_CASE("conditional risk and decomposition") {
  const LossSpec log = make_log_loss();
  CHECK(conditional_risk(0.3, 0.7, log) == doctest::Approx(0.949783446209775).epsilon(1e-12));
  const auto d = risk_decomposition(0.3, 0.7, log);
  CHECK(d.entropy_term == doctest::Approx(0.610864302054893).epsilon(1e-12));
  CHECK(d.calibration_term == doctest::Approx(0.338919144154881).epsilon(1e-12));
  CHECK(d.total == doctest::Approx(d.entropy_term + d.calibration_term).epsilon(1e-14));
  for (double eta : propriety_probe_grid()) {
    CHECK(risk_decomposition(eta, eta, log).calibration_term == doctest::Approx(0.0));
  }
}

TEST_CASE("stationarity of log and logistic") {
  const std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  for (const LossSpec& loss : {make_log_loss(), make_logistic_loss()}) {
    for (const auto& p : check_stationarity(loss, grid)) {
      CHECK(p.finite);
      CHECK(std::abs(p.residual) < 1e-6);
    }
  }
}

TEST_CASE("hsc through its link is log loss") {
  const LossSpec hsc = make_hsc_loss();
  const LossSpec log = make_log_loss();
  for (double eta : propriety_probe_grid()) {
    for (Label y : {Label::normal, Label::anomalous}) {
      CHECK(hsc.partial(y, eta) == doctest::Approx(log.partial(y, eta)).epsilon(1e-9));
    }
  }
  const std::vector<double> grid{0.1, 0.4};
  for (const auto& p : check_stationarity(hsc, grid)) CHECK(std::abs(p.residual) < 1e-4);
}

TEST_CASE("second derivative probes") {
  const std::vector<double> grid{0.5, 0.25};
  const auto probes = check_strict_propriety(make_log_loss(), grid);
  CHECK(probes[0].second_derivative == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(probes[1].second_derivative == doctest::Approx(16.0 / 3.0).epsilon(1e-3));
  const auto all = propriety_probe_grid();
  for (const auto& p : check_strict_propriety(make_logistic_loss(), all)) CHECK(p.second_derivative > 0.0);
}

TEST_CASE("propriety on a grid") {
  const LossSpec log = make_log_loss();
  for (int i = 1; i < 100; ++i) {
    const double eta = i / 100.0;
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int j = 1; j < 100; ++j) {
      const double r = conditional_risk(eta, j / 100.0, log);
      if (r < best) best = r, arg = j;
    }
    CHECK(arg == i);
  }
}

TEST_CASE("registry") {
  CHECK(parse_base_loss("svdd") == BaseLoss::svdd);
  CHECK(to_string(BaseLoss::fcdd) == "fcdd");
  CHECK_THROWS(parse_base_loss("hinge"));
  CHECK_THROWS_AS(cpe_loss(BaseLoss::svdd), std::invalid_argument);
  for (BaseLoss b : {BaseLoss::log, BaseLoss::logistic, BaseLoss::hsc}) CHECK_NOTHROW(validate_loss_spec(cpe_loss(b)));
  LossSpec broken = make_log_loss();
  broken.partial1 = [](double) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(validate_loss_spec(broken), std::invalid_argument);
}
