#include "allin/criteria.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>

#include "allin/confseq.hpp"
#include "allin/design.hpp"
#include "allin/error.hpp"
#include "allin/evalue.hpp"
#include "allin/figures.hpp"
#include "allin/ledger.hpp"
#include "allin/meta.hpp"
#include "allin/rng.hpp"
#include "allin/simulate.hpp"

namespace allin {

namespace {

using Clock = std::chrono::steady_clock;

// Tolerances.
constexpr double kPfizerLo = 1.17e8, kPfizerHi = 1.19e8;
constexpr double kCurevacE = 1.84, kCurevacETol = 0.01;
constexpr double kCurevacP = 0.54, kCurevacPTol = 0.005;
constexpr double kCurevacVe = 0.43, kCurevacVeTol = 0.005;
constexpr double kCiLo = 0.253, kCiHi = 0.571, kCiTol = 0.015;
constexpr double kCiAlphaHalf = 0.02281;
constexpr double kGrowth = 1.029454, kGrowthTol = 1e-6;
constexpr double kTarget = 104.0, kTargetTol = 1.0;
constexpr double kNullEver = 0.011, kNullHorizon = 0.003;
constexpr double kBand = 1.96;
constexpr double kPowerEver = 0.79, kPowerHorizon = 0.72, kPowerTol = 0.02;
constexpr std::int64_t kPowerReps = 10000;
constexpr double kFairTol = 1e-14;
constexpr double kMetaTol = 1e-12;
constexpr double kPfizerMaxMs = 1.0, kNullMaxMs = 5000.0, kPowerMaxMs = 30000.0;
constexpr double kReproduceMaxS = 120.0;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <class F>
CriterionResult timed(int id, std::string name, F&& body) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("error: ") + e.what();
  }
  if (r.millis == 0.0) r.millis = ms_since(t0);
  return r;
}

bool near(double x, double target, double tol) { return std::abs(x - target) <= tol; }

const EffectScale kVe50 = EffectScale::from_ve(0.5);
const EffectScale kVe30 = EffectScale::from_ve(0.3);

// Property checks. Each returns an empty string on success.

std::string fair_game() {
  const double hrs[] = {0.2, 0.5, 0.7, 1.0, 1.3};
  const double rs[] = {0.5, 1.0, 2.0};
  double worst = 0.0;
  for (double a : hrs)
    for (double n : hrs)
      for (double r : rs) {
        const auto alt = EffectScale::from_hr(a);
        const auto null = EffectScale::from_hr(n);
        const double p0 = event_prob(null, r);
        const double m = p0 * event_lr(Group::kTreatment, alt, null, r) +
                         (1.0 - p0) * event_lr(Group::kControl, alt, null, r);
        worst = std::max(worst, std::abs(m - 1.0));
      }
  return worst <= kFairTol ? "" : fmt::format("fair game off by {:.3g}", worst);
}

std::string gaussian_unit_expectation(std::uint64_t seed) {
  constexpr std::int64_t kReps = 200000;
  constexpr std::int64_t kN = 100;
  const double mu1 = std::log(0.5) / kMuDivisor;
  Rng rng(seed);
  double sum = 0.0, sum2 = 0.0;
  for (std::int64_t i = 0; i < kReps; ++i) {
    const double lr = gaussian_lr({rng.normal(), kN}, mu1, 0.0);
    sum += lr;
    sum2 += lr * lr;
  }
  const double mean = sum / kReps;
  const double se = std::sqrt((sum2 / kReps - mean * mean) / kReps);
  return std::abs(mean - 1.0) <= 3.0 * se ? "" : fmt::format("gaussian mean {} (se {})", mean, se);
}

struct TrialEvents {
  std::string id;
  std::vector<Group> groups;
};

std::vector<TrialEvents> random_trials(std::uint64_t seed) {
  std::vector<TrialEvents> out;
  const double hrs[] = {0.5, 0.8, 1.1};
  for (int t = 0; t < 3; ++t) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(t));
    TrialEvents te{fmt::format("T{}", t + 1), {}};
    const double p = event_prob(EffectScale::from_hr(hrs[t]));
    for (int k = 0; k < 60; ++k) te.groups.push_back(rng.bernoulli(p) ? Group::kTreatment : Group::kControl);
    out.push_back(std::move(te));
  }
  return out;
}

// Trial t's k-th event lands at tick k + 1; all trials registered and
// included at tick 0.
Monitor feed(const std::vector<TrialEvents>& trials, const std::vector<std::size_t>& order,
             std::int64_t stop_tick = std::numeric_limits<std::int64_t>::max()) {
  Monitor m;
  for (auto i : order) {
    m.register_trial({.trial_id = trials[i].id}, 0);
    m.include(trials[i].id, 0);
  }
  for (std::size_t k = 0; k < 60; ++k) {
    const auto tick = static_cast<std::int64_t>(k) + 1;
    if (tick > stop_tick) break;
    for (auto i : order) m.add_event({trials[i].id, "primary", tick, trials[i].groups[k]});
  }
  m.finish();
  return m;
}

double meta_gap(const MetaState& a, const MetaState& b) {
  const auto* ea = a.endpoint("primary");
  const auto* eb = b.endpoint("primary");
  if (!ea || !eb) return std::numeric_limits<double>::infinity();
  return std::max({std::abs(ea->meta.left - eb->meta.left), std::abs(ea->meta.right - eb->meta.right),
                   std::abs(ea->two_sided - eb->two_sided)});
}

std::string batch_interim(std::uint64_t seed) {
  const auto trials = random_trials(seed);
  const Monitor full = feed(trials, {0, 1, 2});
  double worst = 0.0;
  for (std::int64_t stop : {1, 7, 30, 59}) {
    const Monitor part = feed(trials, {0, 1, 2}, stop);
    const auto& hist = full.history();
    const auto it = std::find_if(hist.begin(), hist.end(), [&](const MetaState& s) { return s.tick == stop; });
    if (it == hist.end()) return fmt::format("no snapshot at tick {}", stop);
    worst = std::max(worst, meta_gap(*it, part.state()));
  }
  return worst <= kMetaTol ? "" : fmt::format("interim vs batch gap {:.3g}", worst);
}

std::string order_invariance(std::uint64_t seed) {
  const auto trials = random_trials(seed);
  const Monitor a = feed(trials, {0, 1, 2});
  const Monitor b = feed(trials, {2, 0, 1});
  const double gap = meta_gap(a.state(), b.state());
  return gap <= kMetaTol ? "" : fmt::format("trial order changes meta by {:.3g}", gap);
}

std::string two_sided_closure() {
  const double logs[] = {-30.0, -1.0, 0.0, 0.5, 3.0, 40.0, 800.0};
  for (double l : logs)
    for (double r : logs)
      for (double w : {0.1, 0.5, 0.9}) {
        const double v = two_sided(l, r, {w, 1.0 - w});
        const double direct = std::log(w * std::exp(std::min(l, 700.0)) + (1 - w) * std::exp(std::min(r, 700.0)));
        if (v < std::min(l, r) - 1e-12 || v > std::max(l, r) + 1e-12)
          return fmt::format("two-sided {} outside side range", v);
        if (std::max(l, r) < 700.0 && std::abs(v - direct) > 1e-12)
          return fmt::format("two-sided mixture mismatch at ({}, {})", l, r);
      }
  return "";
}

std::string anytime_p(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> path;
  double s = 0.0;
  for (int i = 0; i < 500; ++i) {
    s += rng.normal();
    path.push_back(s);
  }
  const auto p = anytime_p_sequence(path);
  for (std::size_t i = 1; i < p.running_min.size(); ++i)
    if (p.running_min[i] > p.running_min[i - 1]) return "running minimum p increased";
  return "";
}

std::string cs_monotone(std::uint64_t seed) {
  const auto events = random_ordering(83, 145, seed);
  const auto states = cs_stream(std::span<const StreamEvent>(events), 0.1);
  for (std::size_t i = 1; i < states.size(); ++i)
    if (!states[i].intersection.within(states[i - 1].intersection)) return "intersection widened";
  return "";
}

std::string cs_grid_oracle() {
  constexpr int kGrid = 10000;
  const double lo = std::log(0.01), hi = std::log(100.0);
  const double step = (hi - lo) / (kGrid - 1);
  for (std::int64_t n : {5, 50, 500})
    for (double z : {-2.5, -0.3, 0.0, 1.7}) {
      const ZSummary zs{z, n};
      const Interval closed = cs_interval(zs, 0.1);
      double first = std::numeric_limits<double>::quiet_NaN(), last = first;
      for (int i = 0; i < kGrid; ++i) {
        const double theta = std::exp(lo + step * i);
        if (!cs_excludes(zs, theta, 0.1)) {
          if (std::isnan(first)) first = theta;
          last = theta;
        }
      }
      const auto agrees = [&](double grid, double exact) {
        if (exact < 0.01) return grid <= 0.01 * std::exp(step);
        if (exact > 100.0) return grid >= 100.0 * std::exp(-step);
        return std::abs(std::log(grid) - std::log(exact)) <= step;
      };
      if (std::isnan(first)) {
        if (closed.lower < 100.0 && closed.upper > 0.01) return fmt::format("grid empty at n={} z={}", n, z);
        continue;
      }
      if (!agrees(first, closed.lower) || !agrees(last, closed.upper))
        return fmt::format("grid [{}, {}] vs closed [{}, {}] at n={} z={}", first, last, closed.lower,
                           closed.upper, n, z);
    }
  return "";
}

std::string cs_coverage(std::uint64_t seed, double& worst_frac) {
  constexpr int kStreams = 2000;
  constexpr int kEvents = 300;
  constexpr double kAlpha = 0.1;
  worst_frac = 0.0;
  std::uint64_t salt = 0;
  for (double theta : {0.5, 0.7, 1.0}) {
    const double p = event_prob(EffectScale::from_hr(theta));
    int miss = 0;
    for (int s = 0; s < kStreams; ++s) {
      Rng rng = Rng::substream(seed ^ 0x5eed, salt++);
      ConfSeq cs(kAlpha);
      std::int64_t t = 0, c = 0;
      for (int k = 1; k <= kEvents; ++k) {
        (rng.bernoulli(p) ? t : c) += 1;
        cs.push(k, z_from_counts(t, c));
        if (!cs.intersection().contains(theta)) {
          ++miss;
          break;
        }
      }
    }
    const double frac = static_cast<double>(miss) / kStreams;
    worst_frac = std::max(worst_frac, frac);
    if (frac > kAlpha + 3.0 * binomial_se(kAlpha, kStreams))
      return fmt::format("coverage miss {} at hr {}", frac, theta);
  }
  return "";
}

}  // namespace

CriterionResult criterion_pfizer() {
  return timed(1, "pfizer worked example", [](CriterionResult& r) {
    const auto t0 = Clock::now();
    const double log_e = Bet::make(kVe50, kVe30).log_e(8, 162);
    r.millis = ms_since(t0);
    const double e = std::exp(log_e);
    r.pass = e >= kPfizerLo && e <= kPfizerHi && r.millis < kPfizerMaxMs;
    r.detail = fmt::format("e = {:.6g} (log {:.17g}), window [{:.3g}, {:.3g}]", e, log_e, kPfizerLo, kPfizerHi);
  });
}

CriterionResult criterion_curevac() {
  return timed(2, "curevac worked example", [](CriterionResult& r) {
    const double log_e = Bet::make(kVe50, kVe30).log_e(83, 145);
    const double e = std::exp(log_e);
    const double p = conservative_p_from_log(log_e);
    const double ve = peto_estimate(z_from_counts(83, 145)).ve();
    r.pass = near(e, kCurevacE, kCurevacETol) && near(p, kCurevacP, kCurevacPTol) &&
             near(ve, kCurevacVe, kCurevacVeTol);
    r.detail = fmt::format("e = {:.6g}, p = {:.6g}, Peto VE = {:.4f}%", e, p, 100 * ve);
  });
}

CriterionResult criterion_classical_interval() {
  return timed(3, "curevac classical interval", [](CriterionResult& r) {
    const Interval hr = classical_interval(83, 145, kCiAlphaHalf);
    const double ve_lo = 1.0 - hr.upper, ve_hi = 1.0 - hr.lower;
    r.pass = near(ve_lo, kCiLo, kCiTol) && near(ve_hi, kCiHi, kCiTol);
    r.detail = fmt::format("VE [{:.4f}%, {:.4f}%], reference [{:.1f}%, {:.1f}%] +- {:.1f}pp", 100 * ve_lo,
                           100 * ve_hi, 100 * kCiLo, 100 * kCiHi, 100 * kCiTol);
  });
}

CriterionResult criterion_growth_rate() {
  return timed(4, "growth rate and implied target", [](CriterionResult& r) {
    const auto truth = EffectScale::from_ve(0.6);
    const double g = growth_rate(truth, kVe50, kVe30);
    DesignSpec d;
    d.truth = truth;
    d.n_planned = 160;
    const double target = implied_target(d);
    r.pass = near(g, kGrowth, kGrowthTol) && near(target, kTarget, kTargetTol);
    r.detail = fmt::format("growth = {:.9f}, target(160) = {:.6g}", g, target);
  });
}

CriterionResult criterion_null_calibration(const CriteriaOptions& opt) {
  return timed(5, "null calibration", [&](CriterionResult& r) {
    SimPlan plan;
    plan.truth = kVe30;
    plan.horizon_n = 170;
    plan.replications = 1000;
    plan.seed = opt.seed;
    const auto t0 = Clock::now();
    const SimResult res = run(plan, opt.threads);
    r.millis = ms_since(t0);
    const double ever_lo = kNullEver - kBand * binomial_se(kNullEver, plan.replications);
    const double ever_hi = kNullEver + kBand * binomial_se(kNullEver, plan.replications);
    const double hor_lo = kNullHorizon - kBand * binomial_se(kNullHorizon, plan.replications);
    const double hor_hi = kNullHorizon + kBand * binomial_se(kNullHorizon, plan.replications);
    r.pass = res.frac_cross_ever <= plan.alpha && res.frac_cross_ever >= ever_lo && res.frac_cross_ever <= ever_hi &&
             res.frac_cross_at_horizon >= hor_lo && res.frac_cross_at_horizon <= hor_hi && r.millis < kNullMaxMs;
    r.detail = fmt::format("ever {:.4g} (band [{:.4g}, {:.4g}]), at n=170 {:.4g} (band [{:.4g}, {:.4g}])",
                           res.frac_cross_ever, ever_lo, ever_hi, res.frac_cross_at_horizon,
                           std::max(0.0, hor_lo), hor_hi);
  });
}

CriterionResult criterion_power(const CriteriaOptions& opt) {
  return timed(6, "power under VE 60%", [&](CriterionResult& r) {
    SimPlan plan;
    plan.truth = EffectScale::from_ve(0.6);
    plan.horizon_n = 160;
    plan.replications = kPowerReps;
    plan.seed = opt.seed;
    const auto t0 = Clock::now();
    const SimResult res = run(plan, opt.threads);
    r.millis = ms_since(t0);
    r.pass = near(res.frac_cross_ever, kPowerEver, kPowerTol) &&
             near(res.frac_cross_at_horizon, kPowerHorizon, kPowerTol) && r.millis < kPowerMaxMs;
    r.detail = fmt::format("ever {:.4g}, at n=160 {:.4g} over {} reps; targets {:.2f} / {:.2f} +- {:.2f}",
                           res.frac_cross_ever, res.frac_cross_at_horizon, plan.replications, kPowerEver,
                           kPowerHorizon, kPowerTol);
  });
}

CriterionResult criterion_expected_events() {
  return timed(7, "expected-events structure", [](CriterionResult& r) {
    const std::vector<double> grid = {0.4, 0.5, 0.6};
    const auto rows = expected_events_grid(grid, grid, kVe30, 0.025);
    std::map<std::pair<double, double>, double> n;
    for (const auto& row : rows)
      n[{row.truth_ve, row.bet_ve}] =
          row.expected.favorable ? row.expected.events : std::numeric_limits<double>::infinity();
    bool ok = true;
    std::string why;
    for (double t : grid) {
      const double own = n[{t, t}];
      for (double b : grid)
        if (b != t && !(own < n[{t, b}])) {
          ok = false;
          why = fmt::format("truth {} bet {} beats own bet", t, b);
        }
    }
    for (double b : grid)
      for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(n[{grid[i], b}] < n[{grid[i - 1], b}])) {
          ok = false;
          why = fmt::format("bet {} not decreasing at truth {}", b, grid[i]);
        }
    r.pass = ok;
    r.detail = ok ? fmt::format("N(0.4,0.4)={:.4g} N(0.5,0.5)={:.4g} N(0.6,0.6)={:.4g}", n[{0.4, 0.4}],
                                n[{0.5, 0.5}], n[{0.6, 0.6}])
                  : why;
  });
}

CriterionResult criterion_properties(const CriteriaOptions& opt) {
  return timed(8, "property suites", [&](CriterionResult& r) {
    double cover = 0.0;
    const std::vector<std::pair<std::string, std::function<std::string()>>> checks = {
        {"fair game", [] { return fair_game(); }},
        {"gaussian expectation", [&] { return gaussian_unit_expectation(opt.seed); }},
        {"batch/interim", [&] { return batch_interim(opt.seed); }},
        {"trial order", [&] { return order_invariance(opt.seed); }},
        {"two-sided closure", [] { return two_sided_closure(); }},
        {"anytime p", [&] { return anytime_p(opt.seed); }},
        {"cs intersection", [&] { return cs_monotone(opt.seed); }},
        {"cs grid oracle", [] { return cs_grid_oracle(); }},
        {"cs coverage", [&] { return cs_coverage(opt.seed, cover); }},
    };
    std::vector<std::string> failed;
    for (const auto& [name, check] : checks) {
      std::string msg;
      try {
        msg = check();
      } catch (const std::exception& e) {
        msg = e.what();
      }
      if (!msg.empty()) failed.push_back(name + ": " + msg);
    }
    r.pass = failed.empty();
    if (r.pass) {
      r.detail = fmt::format("{} suites ok, worst CS miss rate {:.4g}", checks.size(), cover);
    } else {
      for (const auto& f : failed) r.detail += (r.detail.empty() ? "" : "; ") + f;
    }
  });
}

CriterionResult criterion_ledger_determinism(const CriteriaOptions& opt) {
  return timed(9, "ledger determinism and reproduction", [&](CriterionResult& r) {
    std::vector<std::filesystem::path> ledgers;
    if (std::filesystem::is_directory(opt.ledger_dir))
      for (const auto& entry : std::filesystem::directory_iterator(opt.ledger_dir))
        if (entry.path().extension() == ".jsonl") ledgers.push_back(entry.path());
    std::sort(ledgers.begin(), ledgers.end());
    bool ok = !ledgers.empty();
    std::string detail = ledgers.empty() ? "no bundled ledgers found; " : "";
    for (const auto& path : ledgers) {
      const auto a = ingest(path).state_hash;
      const auto b = ingest(path).state_hash;
      if (a != b) ok = false;
      detail += fmt::format("{} {:016x}{}; ", path.filename().string(), a, a == b ? "" : " MISMATCH");
    }
    double seconds = 0.0;
    if (opt.artifact_seconds) {
      seconds = *opt.artifact_seconds;
    } else {
      const auto t0 = Clock::now();
      const auto dir = std::filesystem::temp_directory_path() / fmt::format("allin-reproduce-{}", opt.seed);
      std::filesystem::create_directories(dir);
      for (const auto& art : standard_artifacts({.seed = opt.seed}))
        for (const auto& [name, content] : art.files) std::ofstream(dir / name, std::ios::binary) << content;
      seconds = ms_since(t0) / 1000.0;
      std::filesystem::remove_all(dir);
    }
    ok = ok && seconds < kReproduceMaxS;
    r.pass = ok;
    r.detail = detail + fmt::format("artifacts regenerated in {:.2f} s", seconds);
  });
}

std::vector<CriterionResult> run_criteria(const CriteriaOptions& opt) {
  return {criterion_pfizer(),
          criterion_curevac(),
          criterion_classical_interval(),
          criterion_growth_rate(),
          criterion_null_calibration(opt),
          criterion_power(opt),
          criterion_expected_events(),
          criterion_properties(opt),
          criterion_ledger_determinism(opt)};
}

std::string format_result(const CriterionResult& r) {
  return fmt::format("[{}] {} {} ({:.3f} ms): {}", r.pass ? "PASS" : "FAIL", r.id, r.name, r.millis, r.detail);
}

}  // namespace allin
