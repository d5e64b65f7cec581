#pragma once

// Design diagnostics for the event betting game: expected growth per event,
// the implied target of a planned trial, expected events to a threshold, and
// what a new trial still has to multiply the running score by.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "allin/evalue.hpp"

namespace allin {

struct DesignSpec {
  EffectScale alt_bet = EffectScale::from_ve(0.5);
  EffectScale null = EffectScale::from_ve(0.3);
  std::optional<EffectScale> truth;  // defaults to alt_bet
  std::int64_t n_planned = 1;
  double alpha = 0.025;
  double allocation_r = 1.0;

  void validate() const;
  const EffectScale& assumed_truth() const { return truth ? *truth : alt_bet; }
};

// Expected per-event log multiplier under `truth`.
double log_growth_rate(const EffectScale& truth, const EffectScale& alt_bet,
                       const EffectScale& null, double allocation_r = 1.0);
double growth_rate(const EffectScale& truth, const EffectScale& alt_bet, const EffectScale& null,
                   double allocation_r = 1.0);

// growth_rate^n_planned, also as a log.
double log_implied_target(const DesignSpec& spec);
double implied_target(const DesignSpec& spec);

// Gaussian form: exp(E[log LR]) with Z ~ N(mu1 sqrt(n), 1) is exp(n (mu1 - mu0)^2 / 2).
double gaussian_implied_target(double mu1, double mu0, std::int64_t n);

struct ExpectedEvents {
  bool favorable = false;  // growth > 1; otherwise the threshold is never reached in expectation
  double events = 0.0;
  std::int64_t ceiling = 0;
};

ExpectedEvents expected_events_to_threshold(const EffectScale& truth, const EffectScale& alt_bet,
                                            const EffectScale& null, double alpha,
                                            double allocation_r = 1.0);

// (1/alpha) / current_e.
double remaining_target(double current_e, double alpha);

struct ExpectedEventsRow {
  double truth_ve = 0.0;
  double bet_ve = 0.0;
  ExpectedEvents expected;
};

// Expected events over a grid of true VE values for each bet VE.
std::vector<ExpectedEventsRow> expected_events_grid(std::span<const double> truth_ve,
                                                    std::span<const double> bet_ve,
                                                    const EffectScale& null, double alpha,
                                                    double allocation_r = 1.0);

}  // namespace allin
