#pragma once

// Seeded Monte Carlo of betting-score trajectories in the event game.
//
// Each replication draws horizon_n group labels with P(treatment) =
// event_prob(truth, r) from its own substream, so results do not depend on
// thread count or scheduling.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "allin/confseq.hpp"
#include "allin/evalue.hpp"

namespace allin {

struct SimPlan {
  EffectScale truth = EffectScale::from_ve(0.3);
  EffectScale alt = EffectScale::from_ve(0.5);
  EffectScale null = EffectScale::from_ve(0.3);
  double allocation_r = 1.0;
  std::int64_t horizon_n = 170;
  std::int64_t replications = 1000;
  double alpha = 0.025;
  std::uint64_t seed = 20210701;
  // Replications whose (thinned) trajectories are kept for plotting.
  std::int64_t keep_trajectories = 0;
  std::int64_t max_points = 512;

  double threshold() const { return 1.0 / alpha; }
  void validate() const;
};

struct SimResult {
  SimPlan plan;
  std::int64_t n_cross_ever = 0;
  std::int64_t n_cross_at_horizon = 0;
  double frac_cross_ever = 0.0;
  double frac_cross_at_horizon = 0.0;
  // stopping_times[k]: replications whose first crossing was at event k (index 0 unused).
  std::vector<std::int64_t> stopping_times;
  std::vector<double> final_log_e;
  std::vector<std::int64_t> first_cross;  // per replication, 0 when never crossed
  std::vector<std::vector<TickValue>> trajectories;

  double mean_final_e() const;
  double se_final_e() const;
  double mean_final_log_e() const;
  double se_final_log_e() const;
};

// threads = 0 uses the hardware concurrency.
SimResult run(const SimPlan& plan, unsigned threads = 0);

// Metadata header (plan, seed, generator) followed by per-replication CSV rows.
std::string serialize(const SimResult& result);

// Binomial standard error sqrt(p (1 - p) / n).
double binomial_se(double p, std::int64_t n);

struct CalibrationRow {
  double alpha = 0.0;
  std::int64_t replications = 0;
  double frac_cross_ever = 0.0;
  double frac_cross_at_horizon = 0.0;
  double se = 0.0;  // at the nominal alpha
  bool within_bound = false;  // frac_cross_ever <= alpha + 3 se
};

// Runs the plan (whose truth must equal its null) at each alpha.
std::vector<CalibrationRow> null_calibration(const SimPlan& plan, std::span<const double> alphas,
                                             unsigned threads = 0);

struct GaussianTargetEstimate {
  double implied_target = 0.0;
  double mean_log_lr = 0.0;
  double se_log_lr = 0.0;
};

// exp(E[log LR]) for Z ~ N(mu1 sqrt(n), 1), by Monte Carlo.
GaussianTargetEstimate gaussian_implied_target_mc(double mu1, double mu0, std::int64_t n,
                                                  std::int64_t replications, std::uint64_t seed);

// A seeded uniformly random ordering of fixed group totals, ticks 1..n.
std::vector<StreamEvent> random_ordering(std::int64_t n_treatment, std::int64_t n_control,
                                         std::uint64_t seed);

}  // namespace allin
