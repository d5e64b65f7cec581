#include "allin/design.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

#include "allin/error.hpp"
#include "allin/simulate.hpp"

using namespace allin;

namespace {

const auto ve30 = EffectScale::from_ve(0.3);
const auto ve50 = EffectScale::from_ve(0.5);
const auto ve60 = EffectScale::from_ve(0.6);

// Expected per-event log multiplier from the raw probabilities.
double oracle_log_growth(double truth_hr, double bet_hr, double null_hr) {
  const double pt = truth_hr / (1 + truth_hr), p1 = bet_hr / (1 + bet_hr), p0 = null_hr / (1 + null_hr);
  return pt * std::log(p1 / p0) + (1 - pt) * std::log((1 - p1) / (1 - p0));
}

}  // namespace

TEST_CASE("growth rate") {
  CHECK(growth_rate(ve60, ve50, ve30) == doctest::Approx(1.029454).epsilon(1e-6 / 1.029454));
  CHECK(log_growth_rate(ve60, ve50, ve30) == doctest::Approx(oracle_log_growth(0.4, 0.5, 0.7)).epsilon(1e-14));
  CHECK(log_growth_rate(ve50, ve50, ve30) == doctest::Approx(0.0130057).epsilon(1e-5));
  CHECK(growth_rate(ve50, ve50, ve30) == doctest::Approx(1.013091).epsilon(1e-6));
  CHECK(growth_rate(ve30, ve50, ve30) <= 1.0);
  CHECK_THROWS_AS(growth_rate(EffectScale::from_ve(0.0), EffectScale::from_ve(1.0), ve30), DomainError);
}

TEST_CASE("Gibbs: betting the truth maximizes growth") {
  for (double truth = 0.35; truth <= 0.8; truth += 0.05) {
    const auto t = EffectScale::from_ve(truth);
    const double own = log_growth_rate(t, t, ve30);
    for (double bet = 0.31; bet <= 0.95; bet += 0.01) CHECK(own >= log_growth_rate(t, EffectScale::from_ve(bet), ve30) - 1e-15);
  }
}

TEST_CASE("implied target") {
  DesignSpec d;
  d.truth = ve60;
  d.n_planned = 160;
  CHECK(implied_target(d) == doctest::Approx(104.0).epsilon(1.0 / 104));
  CHECK(std::round(implied_target(d)) == 104.0);
  CHECK(log_implied_target(d) == doctest::Approx(160 * log_growth_rate(ve60, ve50, ve30)).epsilon(1e-14));
  d.n_planned = 1;
  CHECK(implied_target(d) == doctest::Approx(1.029454).epsilon(1e-6));
  d.n_planned = 0;
  CHECK(implied_target(d) == 1.0);
  DesignSpec own;  // truth defaults to the bet
  own.n_planned = 10;
  CHECK(log_implied_target(own) == doctest::Approx(10 * log_growth_rate(ve50, ve50, ve30)));
  own.n_planned = -1;
  CHECK_THROWS_AS(own.validate(), ConfigError);
}

TEST_CASE("gaussian implied target: analytic and Monte Carlo agree") {
  const double mu1 = std::log(0.5) / 4, mu0 = std::log(0.7) / 4;
  const double analytic = gaussian_implied_target(mu1, mu0, 160);
  CHECK(std::log(analytic) == doctest::Approx(160 * (mu1 - mu0) * (mu1 - mu0) / 2));
  const auto mc = gaussian_implied_target_mc(mu1, mu0, 160, 200000, 9);
  CHECK(std::abs(mc.mean_log_lr - std::log(analytic)) <= 4 * mc.se_log_lr);
}

TEST_CASE("expected events to threshold") {
  const auto a = expected_events_to_threshold(ve60, ve50, ve30, 0.025);
  REQUIRE(a.favorable);
  CHECK(a.events == doctest::Approx(std::log(40.0) / oracle_log_growth(0.4, 0.5, 0.7)).epsilon(1e-13));
  CHECK(a.events == doctest::Approx(127.1).epsilon(0.05 / 127.1));
  CHECK(a.ceiling == 128);
  const auto b = expected_events_to_threshold(ve50, ve50, ve30, 0.025);
  CHECK(b.events == doctest::Approx(283.6).epsilon(0.05 / 283.6));
  CHECK_FALSE(expected_events_to_threshold(ve30, ve50, ve30, 0.025).favorable);
}

TEST_CASE("expected-events grid structure") {
  std::vector<double> truth;
  for (int v = 35; v <= 80; ++v) truth.push_back(v / 100.0);
  const std::vector<double> bets = {0.4, 0.5, 0.6};
  const auto rows = expected_events_grid(truth, bets, ve30, 0.025);
  CHECK(rows.size() == truth.size() * bets.size());
  auto n_of = [&](double t, double b) {
    for (const auto& r : rows)
      if (std::abs(r.truth_ve - t) < 1e-12 && std::abs(r.bet_ve - b) < 1e-12)
        return r.expected.favorable ? r.expected.events : INFINITY;
    FAIL("missing grid cell");
    return 0.0;
  };
  for (double t : {0.4, 0.5, 0.6})
    for (double b : bets)
      if (b != t) CHECK(n_of(t, t) < n_of(t, b));
  for (double b : bets)
    for (std::size_t i = 1; i < truth.size(); ++i) CHECK(n_of(truth[i], b) <= n_of(truth[i - 1], b));
}

TEST_CASE("remaining target") {
  CHECK(remaining_target(8.0, 0.0025) == doctest::Approx(50.0));
  CHECK(remaining_target(400.0, 0.0025) == doctest::Approx(1.0));
  CHECK(remaining_target(1.0, 0.0025) == doctest::Approx(400.0));
  CHECK_THROWS(remaining_target(0.0, 0.0025));
}
