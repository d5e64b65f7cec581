#pragma once

// Cross-trial combination of betting scores.
//
// Each trial bets on both sides: left against the null in the direction of
// benefit (hr below the null), right in the direction of harm. Within a side
// the trial scores multiply (sum in log space). The two-sided score mixes the
// two side products, never products of per-trial two-sided scores.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "allin/evalue.hpp"

namespace allin {

enum class Side : std::uint8_t { kLeft, kRight };

std::string to_string(Side s);

// Log e-values of the two sides.
struct SideScores {
  double left = 0.0;
  double right = 0.0;

  double get(Side s) const noexcept { return s == Side::kLeft ? left : right; }
  friend bool operator==(const SideScores&, const SideScores&) = default;
};

struct MixtureWeights {
  double left = 0.5;
  double right = 0.5;

  void validate() const;
};

enum class TrialStatus : std::uint8_t { kPending, kIncluded, kExcluded };

std::string to_string(TrialStatus s);

// Everything fixed at registration, before any data is seen.
struct TrialSpec {
  std::string trial_id;
  EffectScale null = EffectScale::from_hr(1.0);
  EffectScale alt_left = EffectScale::from_hr(0.8);
  EffectScale alt_right = EffectScale::from_hr(1.25);
  double allocation_r = 1.0;
  double mu_divisor = kMuDivisor;

  void validate() const;
};

// One trial's evidence across endpoints. Data for an endpoint is either a
// stream of events (Bernoulli bets) or a series of cumulative Z summaries
// (Gaussian bets), never both.
class TrialStream {
 public:
  explicit TrialStream(TrialSpec spec);

  const TrialSpec& spec() const noexcept { return spec_; }
  const std::string& id() const noexcept { return spec_.trial_id; }
  TrialStatus status() const noexcept { return status_; }

  void include(std::int64_t tick);
  // Freezes the current contribution; later data is stored but not combined.
  void exclude(std::int64_t tick);

  void add_event(const std::string& endpoint, Group group, std::int64_t tick);
  void add_z(const std::string& endpoint, const ZSummary& summary, std::int64_t tick);

  // Scores from all stored data, regardless of status.
  SideScores raw(const std::string& endpoint) const;
  // What this trial adds to the meta product: 0 (e = 1) unless included.
  SideScores contribution(const std::string& endpoint) const;

  bool has_endpoint(const std::string& endpoint) const;
  std::vector<std::string> endpoints() const;
  // Event counts for an event endpoint; nullopt otherwise.
  std::optional<std::pair<std::int64_t, std::int64_t>> counts(const std::string& endpoint) const;
  // Latest Z summary, given directly or derived from event counts.
  std::optional<ZSummary> z_summary(const std::string& endpoint) const;
  std::optional<std::int64_t> included_tick() const noexcept { return included_tick_; }
  std::optional<std::int64_t> excluded_tick() const noexcept { return excluded_tick_; }

 private:
  struct EndpointData {
    std::optional<BettingState> left;
    std::optional<BettingState> right;
    std::optional<ZSummary> z;
    std::int64_t last_tick = -1;
  };
  EndpointData& data(const std::string& endpoint);
  void check_tick(EndpointData& d, std::int64_t tick);

  TrialSpec spec_;
  TrialStatus status_ = TrialStatus::kPending;
  std::optional<std::int64_t> included_tick_;
  std::optional<std::int64_t> excluded_tick_;
  std::map<std::string, EndpointData> data_;
  std::map<std::string, SideScores> frozen_;
};

// Sum over trials of per-side contributions. Empty list gives 0 (e = 1).
double meta_product(std::span<const TrialStream> trials, Side side, const std::string& endpoint);
double meta_product(std::span<const double> per_trial_log_e);

// log( w_left * e^left + w_right * e^right ), evaluated stably.
double two_sided(double log_left, double log_right, const MixtureWeights& weights = {});

// Latches at the first tick whose value reaches the threshold; never resets.
class DecisionLatch {
 public:
  explicit DecisionLatch(double threshold);
  void observe(std::int64_t tick, double log_e);
  bool rejected() const noexcept { return reject_tick_.has_value(); }
  std::optional<std::int64_t> reject_tick() const noexcept { return reject_tick_; }
  double threshold() const noexcept { return threshold_; }

 private:
  double threshold_;
  std::optional<std::int64_t> reject_tick_;
};

enum class CombinationMode : std::uint8_t { kSeparate, kAveraged };

std::string to_string(CombinationMode m);
CombinationMode parse_combination_mode(const std::string& s);

struct EndpointPlan {
  std::string endpoint_id;
  double alpha_left = 0.025;
  double alpha_right = 0.025;

  double alpha(Side s) const noexcept { return s == Side::kLeft ? alpha_left : alpha_right; }
};

// Checks that every share is in (0, 1) and that the shares sum to alpha.
void validate_plans(std::span<const EndpointPlan> plans, double alpha);

struct EndpointSideDecision {
  std::string endpoint_id;
  Side side = Side::kLeft;
  double log_e = 0.0;
  double threshold = 1.0;
  bool rejected = false;
};

struct CoPrimaryReport {
  CombinationMode mode = CombinationMode::kSeparate;
  std::vector<EndpointSideDecision> components;
  // Averaged mode only: alpha-weighted mean e-value and its threshold 1/sum(alpha).
  double averaged_e = 0.0;
  double averaged_threshold = 0.0;
  // Averaged mode rejects only the conjunction (global) null.
  bool global_rejected = false;
  std::string note;
};

CoPrimaryReport co_primary(const std::map<std::string, SideScores>& endpoint_log_e,
                           std::span<const EndpointPlan> plans, CombinationMode mode);

struct MonitorConfig {
  double alpha = 0.05;
  MixtureWeights weights;
  std::vector<EndpointPlan> plans;  // empty: alpha/2 per side for every endpoint
  CombinationMode mode = CombinationMode::kSeparate;
};

struct EndpointMeta {
  std::string endpoint_id;
  std::map<std::string, SideScores> per_trial;  // contributions
  SideScores meta;
  double two_sided = 0.0;  // log
  SideScores threshold;    // plain e-value thresholds
  double two_sided_threshold = 0.0;
  SideScores p_running_min{1.0, 1.0};
  std::optional<std::int64_t> reject_tick_left;
  std::optional<std::int64_t> reject_tick_right;

  bool rejected() const noexcept { return reject_tick_left || reject_tick_right; }
};

enum class Decision : std::uint8_t { kContinue, kRejectNull };

struct MetaState {
  std::int64_t tick = -1;
  std::vector<EndpointMeta> endpoints;  // sorted by id
  Decision decision = Decision::kContinue;
  std::optional<std::int64_t> decision_tick;
  std::optional<CoPrimaryReport> co_primary;

  const EndpointMeta* endpoint(const std::string& id) const;
};

// Folds trial registrations, inclusions and data into MetaState snapshots,
// one per tick. Records must arrive in nondecreasing tick order.
class Monitor {
 public:
  explicit Monitor(MonitorConfig config = {});

  void register_trial(TrialSpec spec, std::int64_t tick);
  void include(const std::string& trial_id, std::int64_t tick);
  void exclude(const std::string& trial_id, std::int64_t tick);
  void add_event(const EventRecord& event);
  void add_z(const std::string& trial_id, const std::string& endpoint, const ZSummary& z,
             std::int64_t tick);

  // Applies events and closes the last tick.
  const MetaState& monitor(std::span<const EventRecord> events);

  // Records the snapshot of the current tick, if any record arrived since.
  void finish();

  const MetaState& state() const noexcept { return state_; }
  const std::vector<MetaState>& history() const noexcept { return history_; }
  const std::map<std::string, TrialStream>& trials() const noexcept { return trials_; }
  const MonitorConfig& config() const noexcept { return config_; }
  SideScores thresholds(const std::string& endpoint) const;

 private:
  void advance(std::int64_t tick);
  void check_planned(const std::string& endpoint) const;
  TrialStream& trial(const std::string& id);
  MetaState snapshot() const;

  MonitorConfig config_;
  std::map<std::string, TrialStream> trials_;
  std::vector<std::string> endpoints_;
  std::int64_t tick_ = -1;
  bool dirty_ = false;
  MetaState state_;
  std::vector<MetaState> history_;
  std::map<std::string, std::pair<DecisionLatch, DecisionLatch>> latches_;
  std::map<std::string, SideScores> p_min_;
};

}  // namespace allin
