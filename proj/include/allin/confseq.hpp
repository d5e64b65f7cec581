#pragma once

// Anytime-valid confidence sequences for the hazard ratio.
//
// A candidate hr is excluded at a given tick when one of two one-sided
// Gaussian e-values against it (alternatives offset by delta on the drift
// scale, each at level alpha/2) reaches 2/alpha. The drift scale here is
// the logrank one, eta = log(hr)/2, under which Z ~ N(eta sqrt(n), 1) and
// Peto's estimate exp(2z/sqrt(n)) is the centre of every interval.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "allin/evalue.hpp"

namespace allin {

inline constexpr double kCsDriftDivisor = 2.0;
// |log 0.8| / 4: a hazard ratio of minimal interest of 0.8.
inline const double kDefaultDeltaDesign = std::abs(std::log(0.8)) / 4.0;

struct Interval {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();

  bool contains(double x) const noexcept { return lower <= x && x <= upper; }
  bool empty() const noexcept { return lower > upper; }
  // Subset test.
  bool within(const Interval& other) const noexcept {
    return other.lower <= lower && upper <= other.upper;
  }
  friend bool operator==(const Interval&, const Interval&) = default;
};

Interval intersect(const Interval& a, const Interval& b) noexcept;

// Peto-style estimate: hr = exp(2 z / sqrt(n)).
EffectScale peto_estimate(const ZSummary& z);

// Closed-form confidence interval on the hr scale.
Interval cs_interval(const ZSummary& z, double alpha, double delta_design = kDefaultDeltaDesign);

// Half-width on the drift scale.
double cs_half_width(std::int64_t n, double alpha, double delta_design);

// Direct test of one candidate: true if either one-sided e-value against
// theta0 reaches 2/alpha.
bool cs_excludes(const ZSummary& z, double theta0, double alpha,
                 double delta_design = kDefaultDeltaDesign);

// Fixed-n normal-approximation interval on the treatment-event fraction,
// p_hat +- z_{1-alpha_half} se, mapped through hr = p / (1 - p).
Interval classical_interval(std::int64_t n_treatment, std::int64_t n_control, double alpha_half);

// Stratified Z across trials: sum z_i sqrt(n_i) / sqrt(sum n_i), n = sum n_i.
// Gives the "typical" hazard ratio of a fixed-effect combination.
ZSummary stratified_z(std::span<const ZSummary> per_trial);

struct ConfSeqState {
  std::int64_t tick = 0;
  std::int64_t n = 0;
  std::optional<EffectScale> estimate;
  Interval interval;
  Interval intersection;
  double alpha = 0.1;
  double delta_design = kDefaultDeltaDesign;
};

// Running confidence sequence. Before any data the interval is (0, inf).
class ConfSeq {
 public:
  explicit ConfSeq(double alpha = 0.1, double delta_design = kDefaultDeltaDesign);

  const ConfSeqState& push(std::int64_t tick, const ZSummary& z);

  const Interval& intersection() const noexcept { return intersection_; }
  const std::vector<ConfSeqState>& states() const noexcept { return states_; }
  double alpha() const noexcept { return alpha_; }
  double delta_design() const noexcept { return delta_; }

 private:
  double alpha_;
  double delta_;
  Interval intersection_;
  std::vector<ConfSeqState> states_;
};

struct StreamEvent {
  std::int64_t tick = 0;
  Group group = Group::kControl;
};

// One state per event (same-tick events collapse to the post-tick state).
std::vector<ConfSeqState> cs_stream(std::span<const StreamEvent> events, double alpha,
                                    double delta_design = kDefaultDeltaDesign);

struct TickZ {
  std::int64_t tick = 0;
  ZSummary z;
};

std::vector<ConfSeqState> cs_stream(std::span<const TickZ> series, double alpha,
                                    double delta_design = kDefaultDeltaDesign);

}  // namespace allin
