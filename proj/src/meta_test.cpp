#include "allin/meta.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "allin/error.hpp"
#include "allin/rng.hpp"

using namespace allin;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TrialSpec spec(const std::string& id) {
  TrialSpec s;
  s.trial_id = id;
  s.null = EffectScale::from_ve(0.3);
  s.alt_left = EffectScale::from_ve(0.5);
  s.alt_right = EffectScale::from_hr(0.98);
  return s;
}

// Per-event log LR computed from the raw probabilities.
double oracle(bool treatment, double hr1, double hr0) {
  const double p1 = hr1 / (1 + hr1), p0 = hr0 / (1 + hr0);
  return treatment ? std::log(p1 / p0) : std::log((1 - p1) / (1 - p0));
}

struct Script {
  std::vector<std::vector<Group>> trials;  // trial i, event k at tick k + 1
};

Script random_script(std::uint64_t seed, int n_trials, int n_events, double p) {
  Script s;
  for (int t = 0; t < n_trials; ++t) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(t));
    std::vector<Group> g;
    for (int k = 0; k < n_events; ++k) g.push_back(rng.bernoulli(p) ? Group::kTreatment : Group::kControl);
    s.trials.push_back(std::move(g));
  }
  return s;
}

Monitor play(const Script& s, const std::vector<int>& order, std::int64_t stop = 1 << 30) {
  Monitor m;
  for (int i : order) {
    m.register_trial(spec("T" + std::to_string(i)), 0);
    m.include("T" + std::to_string(i), 0);
  }
  const auto n = static_cast<std::int64_t>(s.trials.front().size());
  for (std::int64_t k = 0; k < n && k + 1 <= stop; ++k)
    for (int i : order) m.add_event({"T" + std::to_string(i), "ep", k + 1, s.trials[i][k]});
  m.finish();
  return m;
}

}  // namespace

TEST_CASE("meta product examples") {
  const std::vector<double> two = {std::log(4.0), std::log(5.0)};
  CHECK(std::exp(meta_product(two)) == doctest::Approx(20.0).epsilon(1e-14));
  const std::vector<double> neutral = {0.0, std::log(7.0)};
  CHECK(std::exp(meta_product(neutral)) == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(meta_product(std::vector<double>{}) == 0.0);

  std::vector<TrialStream> trials = {TrialStream(spec("a")), TrialStream(spec("b"))};
  trials[0].include(0);
  trials[1].include(0);
  for (int i = 0; i < 5; ++i) trials[0].add_event("ep", Group::kControl, i);
  CHECK(meta_product(trials, Side::kLeft, "ep") == doctest::Approx(5 * oracle(false, 0.5, 0.7)));
  CHECK(trials[1].contribution("ep") == SideScores{});
  CHECK(meta_product(std::span<const TrialStream>{}, Side::kLeft, "ep") == 0.0);
}

TEST_CASE("two-sided mixture") {
  CHECK(two_sided(0.0, 0.0) == doctest::Approx(0.0));
  CHECK(std::exp(two_sided(std::log(80.0), std::log(0.001))) == doctest::Approx(40.0005).epsilon(1e-13));
  CHECK(two_sided(std::log(2 * 13.0), -kInf) == doctest::Approx(std::log(13.0)));
  CHECK(two_sided(5000.0, 5000.0) == doctest::Approx(5000.0));
  CHECK(two_sided(std::log(10.0), std::log(2.0), {0.9, 0.1}) == doctest::Approx(std::log(9.2)));
  CHECK_THROWS_AS(two_sided(0.0, 0.0, {0.6, 0.6}), ConfigError);
  CHECK_THROWS_AS(two_sided(0.0, 0.0, {-0.5, 1.5}), ConfigError);
}

TEST_CASE("two-sided mixture has unit mean under the global null") {
  // Two trials, 40 events each, null VE 30%: the mixture of side products is an e-value.
  constexpr int kReps = 20000;
  double sum = 0, sum2 = 0;
  for (int rep = 0; rep < kReps; ++rep) {
    Rng rng = Rng::substream(4242, static_cast<std::uint64_t>(rep));
    double left = 0, right = 0;
    for (int k = 0; k < 80; ++k) {
      const bool t = rng.bernoulli(0.7 / 1.7);
      left += oracle(t, 0.5, 0.7);
      right += oracle(t, 0.98, 0.7);
    }
    const double e = std::exp(two_sided(left, right));
    sum += e;
    sum2 += e * e;
  }
  const double mean = sum / kReps;
  const double se = std::sqrt((sum2 / kReps - mean * mean) / kReps);
  INFO("mean " << mean << " se " << se);
  CHECK(std::abs(mean - 1.0) <= 3 * se);
}

TEST_CASE("co-primary endpoint plans") {
  const std::vector<EndpointPlan> plans = {{"covid", 0.0025, 0.0025}, {"hosp", 0.0225, 0.0225}};
  validate_plans(plans, 0.05);
  CHECK_THROWS_AS(validate_plans(plans, 0.04), ConfigError);

  SUBCASE("separate") {
    std::map<std::string, SideScores> e = {{"covid", {std::log(400.0), 0.0}}, {"hosp", {std::log(400.0 / 9.0), 0.0}}};
    const auto rep = co_primary(e, plans, CombinationMode::kSeparate);
    REQUIRE(rep.components.size() == 4);
    CHECK(rep.components[0].threshold == doctest::Approx(400.0));
    CHECK(rep.components[0].rejected);
    CHECK(rep.components[2].threshold == doctest::Approx(44.4444).epsilon(1e-5));
    CHECK(rep.components[2].rejected);
    CHECK_FALSE(rep.components[1].rejected);
    CHECK(rep.global_rejected);
  }
  SUBCASE("separate just below") {
    std::map<std::string, SideScores> e = {{"covid", {std::log(399.0), 0.0}}, {"hosp", {std::log(44.0), 0.0}}};
    CHECK_FALSE(co_primary(e, plans, CombinationMode::kSeparate).global_rejected);
  }
  SUBCASE("averaged") {
    // 0.05 on covid at e = 400 alone gives 20 of a 20 target
    const std::vector<EndpointPlan> avg = {{"covid", 0.025, 0.0125}, {"hosp", 0.00625, 0.00625}};
    std::map<std::string, SideScores> e = {{"covid", {std::log(40.0), -kInf}}, {"hosp", {-kInf, -kInf}}};
    const auto rep = co_primary(e, avg, CombinationMode::kAveraged);
    CHECK(rep.averaged_threshold == doctest::Approx(20.0));
    CHECK(rep.averaged_e == doctest::Approx(0.025 * 40.0 / 0.05));
    CHECK(rep.global_rejected);
    CHECK(std::none_of(rep.components.begin(), rep.components.end(), [](auto& d) { return d.rejected; }));
    CHECK(rep.note.find("non-inferential") != std::string::npos);
  }
  SUBCASE("averaged with 0.0225 / 0.0025 shares") {
    std::map<std::string, SideScores> e = {{"covid", {std::log(400.0), -kInf}}, {"hosp", {-kInf, -kInf}}};
    const auto rep = co_primary(e, plans, CombinationMode::kAveraged);
    CHECK(0.0025 * 400.0 / 0.05 == doctest::Approx(20.0));
    CHECK(rep.averaged_e == doctest::Approx(20.0));
    CHECK(rep.averaged_threshold == doctest::Approx(20.0));
    CHECK(rep.global_rejected);
  }
  SUBCASE("missing endpoint") {
    std::map<std::string, SideScores> e = {{"covid", {0.0, 0.0}}};
    CHECK_THROWS_AS(co_primary(e, plans, CombinationMode::kSeparate), ConfigError);
  }
}

TEST_CASE("decision latch") {
  DecisionLatch latch(400.0);
  const double path[] = {3, 50, 410, 390};
  for (int i = 0; i < 4; ++i) latch.observe(i + 1, std::log(path[i]));
  REQUIRE(latch.rejected());
  CHECK(*latch.reject_tick() == 3);
  CHECK_THROWS_AS(DecisionLatch(1.0), ConfigError);
}

TEST_CASE("monitor latches and never resets") {
  MonitorConfig cfg;
  cfg.alpha = 0.05;
  Monitor m(cfg);
  m.register_trial(spec("a"), 0);
  m.include("a", 0);
  std::int64_t tick = 1;
  // 40 control events push e above 40, then treatment events pull it back
  for (int i = 0; i < 40; ++i) m.add_event({"a", "ep", tick++, Group::kControl});
  for (int i = 0; i < 40; ++i) m.add_event({"a", "ep", tick++, Group::kTreatment});
  m.finish();
  const auto* ep = m.state().endpoint("ep");
  REQUIRE(ep);
  CHECK(ep->meta.left < std::log(40.0));
  CHECK(m.state().decision == Decision::kRejectNull);
  const std::int64_t first = static_cast<std::int64_t>(std::ceil(std::log(40.0) / oracle(false, 0.5, 0.7)));
  CHECK(*ep->reject_tick_left == first);
  CHECK(*m.state().decision_tick == first);
  for (const auto& s : m.history())
    CHECK((s.decision == Decision::kRejectNull) == (s.tick >= first));
}

TEST_CASE("neutral trials") {
  Monitor m;
  m.register_trial(spec("a"), 0);
  m.register_trial(spec("b"), 0);
  m.include("a", 0);
  m.include("b", 0);
  m.add_z("b", "ep", {0.1, 4}, 1);
  m.finish();
  const auto before = m.state().endpoint("ep")->meta;

  Monitor m2;
  m2.register_trial(spec("a"), 0);
  m2.register_trial(spec("b"), 0);
  m2.register_trial(spec("silent"), 0);
  m2.include("a", 0);
  m2.include("b", 0);
  m2.include("silent", 0);
  m2.add_z("b", "ep", {0.1, 4}, 1);
  m2.finish();
  CHECK(m2.state().endpoint("ep")->meta == before);
  CHECK(m2.state().endpoint("ep")->per_trial.at("silent") == SideScores{});

  Monitor quiet;
  quiet.register_trial(spec("a"), 0);
  quiet.include("a", 0);
  quiet.finish();
  CHECK(quiet.state().decision == Decision::kContinue);
}

TEST_CASE("z-summary trials use the gaussian bet") {
  Monitor m;
  auto s = spec("z");
  m.register_trial(s, 0);
  m.include("z", 0);
  m.add_z("z", "ep", {-2.0, 100}, 5);
  m.finish();
  const double mu0 = std::log(0.7) / 4, mu1 = std::log(0.5) / 4;
  const double expect = std::sqrt(100.0) * -2.0 * (mu1 - mu0) - 100 * (mu1 * mu1 - mu0 * mu0) / 2;
  CHECK(m.state().endpoint("ep")->meta.left == doctest::Approx(expect).epsilon(1e-13));
  CHECK_THROWS_AS(m.add_event({"z", "ep", 6, Group::kControl}), LedgerError);
}

TEST_CASE("inclusion and exclusion") {
  Monitor m;
  m.register_trial(spec("a"), 0);
  m.add_event({"a", "ep", 1, Group::kControl});
  m.finish();
  CHECK(m.state().endpoint("ep")->meta.left == 0.0);  // pending: stored, not combined
  m.include("a", 2);
  m.finish();
  CHECK(m.state().endpoint("ep")->meta.left == doctest::Approx(oracle(false, 0.5, 0.7)));
  m.exclude("a", 3);
  m.add_event({"a", "ep", 4, Group::kControl});
  m.finish();
  CHECK(m.state().endpoint("ep")->meta.left == doctest::Approx(oracle(false, 0.5, 0.7)));
  CHECK(m.trials().at("a").raw("ep").left == doctest::Approx(2 * oracle(false, 0.5, 0.7)));
  CHECK_THROWS_AS(m.include("a", 5), LedgerError);
}

TEST_CASE("monitor errors") {
  Monitor m;
  CHECK_THROWS_AS(m.add_event({"ghost", "ep", 1, Group::kControl}), LedgerError);
  m.register_trial(spec("a"), 0);
  CHECK_THROWS_AS(m.register_trial(spec("a"), 0), LedgerError);
  m.add_event({"a", "ep", 5, Group::kControl});
  CHECK_THROWS_AS(m.add_event({"a", "ep", 4, Group::kControl}), LedgerError);

  MonitorConfig planned;
  planned.plans = {{"covid", 0.0025, 0.0025}, {"hosp", 0.0225, 0.0225}};
  Monitor p(planned);
  p.register_trial(spec("a"), 0);
  CHECK_THROWS_AS(p.add_event({"a", "other", 1, Group::kControl}), ConfigError);
  CHECK(p.thresholds("covid").left == doctest::Approx(400.0));

  MonitorConfig bad;
  bad.plans = {{"covid", 0.0025, 0.0025}};
  CHECK_THROWS_AS(Monitor{bad}, ConfigError);

  auto s = spec("x");
  s.alt_left = EffectScale::from_hr(0.9);
  CHECK_THROWS_AS(TrialStream{s}, ConfigError);
  auto comma = spec("x,y");
  CHECK_THROWS_AS(TrialStream{comma}, ConfigError);
}

TEST_CASE("trial-order invariance") {
  const auto s = random_script(17, 4, 50, 0.4);
  const auto a = play(s, {0, 1, 2, 3});
  const auto b = play(s, {3, 1, 0, 2});
  const auto* ea = a.state().endpoint("ep");
  const auto* eb = b.state().endpoint("ep");
  CHECK(std::abs(ea->meta.left - eb->meta.left) <= 1e-12);
  CHECK(std::abs(ea->meta.right - eb->meta.right) <= 1e-12);
  CHECK(std::abs(ea->two_sided - eb->two_sided) <= 1e-12);
}

TEST_CASE("interim and complete processing agree") {
  const auto s = random_script(23, 3, 60, 0.35);
  const auto full = play(s, {0, 1, 2});
  for (std::int64_t stop : {1, 10, 33, 60}) {
    const auto part = play(s, {0, 1, 2}, stop);
    const auto it = std::find_if(full.history().begin(), full.history().end(),
                                 [&](const MetaState& st) { return st.tick == stop; });
    REQUIRE(it != full.history().end());
    CHECK(std::abs(it->endpoint("ep")->meta.left - part.state().endpoint("ep")->meta.left) <= 1e-12);
    CHECK(std::abs(it->endpoint("ep")->two_sided - part.state().endpoint("ep")->two_sided) <= 1e-12);
  }
  // direct per-trial sums
  double sum = 0;
  for (const auto& t : s.trials)
    for (auto g : t) sum += oracle(g == Group::kTreatment, 0.5, 0.7);
  CHECK(full.state().endpoint("ep")->meta.left == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("Ville frequency of a three-trial meta product under the global null") {
  // alpha = 0.0025: threshold 400 on the benefit side, 100 events per trial
  constexpr int kReps = 100000;
  constexpr int kEvents = 100;
  const double p0 = 0.7 / 1.7;
  const double lt = oracle(true, 0.5, 0.7), lc = oracle(false, 0.5, 0.7);
  const double bound = std::log(400.0);
  int crossed = 0;
  for (int rep = 0; rep < kReps; ++rep) {
    Rng rng = Rng::substream(2025, static_cast<std::uint64_t>(rep));
    double sum = 0;
    for (int k = 0; k < 3 * kEvents; ++k) {
      sum += rng.bernoulli(p0) ? lt : lc;
      if (sum >= bound) {
        ++crossed;
        break;
      }
    }
  }
  const double frac = static_cast<double>(crossed) / kReps;
  INFO("crossing fraction " << frac);
  CHECK(frac <= 0.0025);

  // the Monitor agrees with the direct sum on a few replications
  for (int rep = 0; rep < 5; ++rep) {
    Rng rng = Rng::substream(2025, static_cast<std::uint64_t>(rep));
    Monitor m;
    double sum = 0;
    for (int t = 0; t < 3; ++t) {
      m.register_trial(spec("T" + std::to_string(t)), 0);
      m.include("T" + std::to_string(t), 0);
    }
    for (int k = 0; k < 3 * kEvents; ++k) {
      const bool tr = rng.bernoulli(p0);
      sum += tr ? lt : lc;
      m.add_event({"T" + std::to_string(k % 3), "ep", k / 3 + 1, tr ? Group::kTreatment : Group::kControl});
    }
    m.finish();
    CHECK(m.state().endpoint("ep")->meta.left == doctest::Approx(sum).epsilon(1e-12));
  }
}
