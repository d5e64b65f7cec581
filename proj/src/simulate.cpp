#include "allin/simulate.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "allin/error.hpp"
#include "allin/rng.hpp"

namespace allin {

namespace {

struct Replication {
  double final_log_e = 0.0;
  std::int64_t first_cross = 0;  // 0: never
  std::vector<TickValue> trajectory;
};

Replication run_one(const SimPlan& plan, const Bet& bet, double p_treatment, double log_threshold,
                    std::uint64_t index, bool keep) {
  Rng rng = Rng::substream(plan.seed, index);
  Replication rep;
  const std::int64_t stride =
      std::max<std::int64_t>(1, (plan.horizon_n + plan.max_points - 2) / std::max<std::int64_t>(1, plan.max_points - 1));
  if (keep) rep.trajectory.push_back({0, 0.0});
  double log_e = 0.0;
  for (std::int64_t k = 1; k <= plan.horizon_n; ++k) {
    log_e += rng.bernoulli(p_treatment) ? bet.log_lr_treatment : bet.log_lr_control;
    if (rep.first_cross == 0 && log_e >= log_threshold) rep.first_cross = k;
    if (keep && (k % stride == 0 || k == plan.horizon_n)) rep.trajectory.push_back({k, log_e});
  }
  rep.final_log_e = log_e;
  return rep;
}

}  // namespace

void SimPlan::validate() const {
  if (replications < 1) throw ConfigError("replications must be >= 1");
  if (horizon_n < 1) throw ConfigError("horizon must be >= 1 event");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1) so that 1/alpha > 1");
  if (max_points < 2) throw ConfigError("trajectories need at least 2 points");
  if (null.degenerate()) throw DomainError("null needs hr > 0");
  if (!std::isfinite(allocation_r) || allocation_r <= 0.0) throw DomainError("allocation ratio must be > 0");
}

double binomial_se(double p, std::int64_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

SimResult run(const SimPlan& plan, unsigned threads) {
  plan.validate();
  const Bet bet = Bet::make(plan.alt, plan.null, plan.allocation_r);
  const double p_treatment = event_prob(plan.truth, plan.allocation_r);
  const double log_threshold = std::log(plan.threshold()) - 1e-12;

  const auto reps = static_cast<std::size_t>(plan.replications);
  std::vector<Replication> out(reps);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < reps; i += threads)
          out[i] = run_one(plan, bet, p_treatment, log_threshold, i,
                           static_cast<std::int64_t>(i) < plan.keep_trajectories);
      });
    }
  }

  SimResult r;
  r.plan = plan;
  r.stopping_times.assign(static_cast<std::size_t>(plan.horizon_n) + 1, 0);
  r.final_log_e.reserve(reps);
  r.first_cross.reserve(reps);
  for (auto& rep : out) {
    if (rep.first_cross > 0) {
      ++r.n_cross_ever;
      ++r.stopping_times[static_cast<std::size_t>(rep.first_cross)];
    }
    if (rep.final_log_e >= log_threshold) ++r.n_cross_at_horizon;
    r.final_log_e.push_back(rep.final_log_e);
    r.first_cross.push_back(rep.first_cross);
    if (!rep.trajectory.empty()) r.trajectories.push_back(std::move(rep.trajectory));
  }
  r.frac_cross_ever = static_cast<double>(r.n_cross_ever) / static_cast<double>(reps);
  r.frac_cross_at_horizon = static_cast<double>(r.n_cross_at_horizon) / static_cast<double>(reps);
  return r;
}

double SimResult::mean_final_e() const {
  double s = 0.0;
  for (double v : final_log_e) s += std::exp(v);
  return s / static_cast<double>(final_log_e.size());
}

double SimResult::se_final_e() const {
  const double m = mean_final_e();
  double ss = 0.0;
  for (double v : final_log_e) ss += (std::exp(v) - m) * (std::exp(v) - m);
  const double n = static_cast<double>(final_log_e.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

double SimResult::mean_final_log_e() const {
  double s = 0.0;
  for (double v : final_log_e) s += v;
  return s / static_cast<double>(final_log_e.size());
}

double SimResult::se_final_log_e() const {
  const double m = mean_final_log_e();
  double ss = 0.0;
  for (double v : final_log_e) ss += (v - m) * (v - m);
  const double n = static_cast<double>(final_log_e.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

std::string serialize(const SimResult& r) {
  const auto& p = r.plan;
  std::string s;
  s += fmt::format("# generator: {}\n", kRngName);
  s += fmt::format("# seed: {}\n", p.seed);
  s += fmt::format("# truth_hr: {:a}\n# alt_hr: {:a}\n# null_hr: {:a}\n", p.truth.hr(), p.alt.hr(), p.null.hr());
  s += fmt::format("# allocation_r: {:a}\n# horizon_n: {}\n# replications: {}\n# alpha: {:a}\n",
                   p.allocation_r, p.horizon_n, p.replications, p.alpha);
  s += fmt::format("# frac_cross_ever: {:.6g}\n# frac_cross_at_horizon: {:.6g}\n", r.frac_cross_ever,
                   r.frac_cross_at_horizon);
  s += "replication,first_cross,final_log_e,final_e\n";
  for (std::size_t i = 0; i < r.final_log_e.size(); ++i) {
    s += fmt::format("{},{},{:.17g},{:.6g}\n", i, r.first_cross[i], r.final_log_e[i],
                     std::exp(r.final_log_e[i]));
  }
  return s;
}

std::vector<CalibrationRow> null_calibration(const SimPlan& plan, std::span<const double> alphas,
                                             unsigned threads) {
  if (!(plan.truth == plan.null)) throw ConfigError("null calibration needs truth equal to the null");
  std::vector<CalibrationRow> rows;
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("calibration alpha must be in (0, 1)");
    SimPlan p = plan;
    p.alpha = a;
    p.keep_trajectories = 0;
    const SimResult r = run(p, threads);
    CalibrationRow row;
    row.alpha = a;
    row.replications = p.replications;
    row.frac_cross_ever = r.frac_cross_ever;
    row.frac_cross_at_horizon = r.frac_cross_at_horizon;
    row.se = binomial_se(a, p.replications);
    row.within_bound = r.frac_cross_ever <= a + 3.0 * row.se;
    rows.push_back(row);
  }
  return rows;
}

GaussianTargetEstimate gaussian_implied_target_mc(double mu1, double mu0, std::int64_t n,
                                                  std::int64_t replications, std::uint64_t seed) {
  if (n < 1 || replications < 2) throw ConfigError("need n >= 1 and at least 2 replications");
  Rng rng(seed);
  const double shift = mu1 * std::sqrt(static_cast<double>(n));
  double sum = 0.0;
  double sumsq = 0.0;
  for (std::int64_t i = 0; i < replications; ++i) {
    const double v = gaussian_log_lr(ZSummary{shift + rng.normal(), n}, mu1, mu0);
    sum += v;
    sumsq += v * v;
  }
  const double m = sum / static_cast<double>(replications);
  const double var = (sumsq - static_cast<double>(replications) * m * m) / static_cast<double>(replications - 1);
  return {std::exp(m), m, std::sqrt(std::max(var, 0.0) / static_cast<double>(replications))};
}

std::vector<StreamEvent> random_ordering(std::int64_t n_treatment, std::int64_t n_control,
                                         std::uint64_t seed) {
  if (n_treatment < 0 || n_control < 0) throw DomainError("negative event count");
  std::vector<Group> groups(static_cast<std::size_t>(n_treatment), Group::kTreatment);
  groups.resize(static_cast<std::size_t>(n_treatment + n_control), Group::kControl);
  Rng rng(seed);
  // Fisher-Yates with an unbiased bounded draw.
  for (std::size_t i = groups.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = Rng::max() - Rng::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    std::swap(groups[i - 1], groups[static_cast<std::size_t>(x % bound)]);
  }
  std::vector<StreamEvent> out;
  out.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) out.push_back({static_cast<std::int64_t>(i + 1), groups[i]});
  return out;
}

}  // namespace allin
