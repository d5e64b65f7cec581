#pragma once

// Betting scores for two-group event data.
//
// Every event is a bet on which group the next event falls in. Under a
// hazard ratio hr and follow-up ratio r the event lands in the treatment
// group with probability r*hr / (1 + r*hr); the likelihood ratio of the
// alternative against the null is the per-event multiplier of the stake.
// Scores are carried as natural logs throughout.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace allin {

// Divisor in mu = log(hr) / divisor, the Gaussian drift per sqrt(event).
// The printed parameterization uses 4; the usual balanced logrank local
// alternative would use 2. Kept configurable, never silently changed.
inline constexpr double kMuDivisor = 4.0;

// A treatment effect. Stored as a hazard ratio; VE and mu are views.
class EffectScale {
 public:
  static EffectScale from_hr(double hr);
  static EffectScale from_ve(double ve);
  static EffectScale from_mu(double mu, double divisor = kMuDivisor);

  double hr() const noexcept { return hr_; }
  double ve() const noexcept { return 1.0 - hr_; }
  double mu(double divisor = kMuDivisor) const;

  // VE of 100%: treatment events are impossible under this effect.
  bool degenerate() const noexcept { return hr_ == 0.0; }

  friend bool operator==(const EffectScale&, const EffectScale&) = default;

 private:
  explicit EffectScale(double hr) : hr_(hr) {}
  double hr_ = 1.0;
};

enum class Group : std::uint8_t { kTreatment, kControl };

std::string to_string(Group g);
Group parse_group(const std::string& s);

struct EventRecord {
  std::string trial_id;
  std::string endpoint_id;
  std::int64_t tick = 0;
  Group group = Group::kControl;
};

// A Gaussian summary: a (logrank or meta) Z statistic based on n events.
struct ZSummary {
  double z = 0.0;
  std::int64_t n = 1;

  void validate() const;
};

// P(next event is in the treatment group).
double event_prob(const EffectScale& effect, double allocation_r = 1.0);

// Per-event likelihood ratio of alt against null.
double event_lr(Group group, const EffectScale& alt, const EffectScale& null,
                double allocation_r = 1.0);
double event_log_lr(Group group, const EffectScale& alt, const EffectScale& null,
                    double allocation_r = 1.0);

// The two per-event log multipliers of a fixed bet, precomputed.
struct Bet {
  double log_lr_treatment = 0.0;
  double log_lr_control = 0.0;

  static Bet make(const EffectScale& alt, const EffectScale& null, double allocation_r = 1.0);

  double log_lr(Group g) const noexcept {
    return g == Group::kTreatment ? log_lr_treatment : log_lr_control;
  }
  // log e-value after the given counts, independent of order.
  double log_e(std::int64_t n_treatment, std::int64_t n_control) const noexcept;
};

struct TickValue {
  std::int64_t tick = 0;
  double log_e = 0.0;
};

// Running score of one bet on one event stream.
class BettingState {
 public:
  BettingState(const EffectScale& alt, const EffectScale& null, double allocation_r = 1.0);

  // Adds one event. Throws LedgerError if tick precedes the last one seen.
  void apply(Group group, std::int64_t tick);

  std::int64_t n_treatment() const noexcept { return n_treatment_; }
  std::int64_t n_control() const noexcept { return n_control_; }
  std::int64_t n() const noexcept { return n_treatment_ + n_control_; }
  double log_e() const noexcept { return log_e_; }
  double e() const;
  // One entry per tick holding the post-tick value.
  const std::vector<TickValue>& history() const noexcept { return history_; }
  const EffectScale& alt() const noexcept { return alt_; }
  const EffectScale& null() const noexcept { return null_; }
  double allocation_r() const noexcept { return allocation_r_; }
  const Bet& bet() const noexcept { return bet_; }
  // Set once a zero-probability outcome was observed; the score is then 0 forever.
  bool absorbed() const noexcept { return absorbed_; }

 private:
  EffectScale alt_;
  EffectScale null_;
  double allocation_r_;
  Bet bet_;
  std::int64_t n_treatment_ = 0;
  std::int64_t n_control_ = 0;
  double log_e_ = 0.0;
  bool absorbed_ = false;
  std::vector<TickValue> history_;
};

// Functional form of BettingState::apply.
BettingState accumulate(BettingState state, const EventRecord& event);

// Z summary of event counts: z = (sqrt(n)/2) log(nT/nC), the Wald statistic of
// the log rate ratio under balanced allocation (variance 4/n). A zero count
// gets +0.5 on both counts. Peto's estimate exp(2z/sqrt(n)) then equals nT/nC.
ZSummary z_from_counts(std::int64_t n_treatment, std::int64_t n_control);

// Ratio of N(mu1 sqrt(n), 1) and N(mu0 sqrt(n), 1) densities at z.
double gaussian_lr(const ZSummary& summary, double mu1, double mu0);
double gaussian_log_lr(const ZSummary& summary, double mu1, double mu0);

// min(1, 1/e).
double conservative_p(double e);
double conservative_p_from_log(double log_e);

struct AnytimePValues {
  std::vector<double> instantaneous;
  std::vector<double> running_min;
};

// p-values of a sequence of log e-values; the running minimum is the
// anytime-valid one.
AnytimePValues anytime_p_sequence(std::span<const double> log_e);

// Crossing test against a threshold with a tiny slack for binary rounding of
// 1/alpha (e.g. 0.0025 * 400 != 1 in floating point).
bool reaches(double log_e, double threshold);

}  // namespace allin
