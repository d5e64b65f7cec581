#include "allin/meta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "allin/error.hpp"

namespace allin {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

std::string to_string(Side s) { return s == Side::kLeft ? "left" : "right"; }

std::string to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::kPending: return "pending";
    case TrialStatus::kIncluded: return "included";
    case TrialStatus::kExcluded: return "excluded";
  }
  return "?";
}

std::string to_string(CombinationMode m) {
  return m == CombinationMode::kSeparate ? "separate" : "averaged";
}

CombinationMode parse_combination_mode(const std::string& s) {
  if (s == "separate") return CombinationMode::kSeparate;
  if (s == "averaged") return CombinationMode::kAveraged;
  throw ConfigError("unknown combination mode '" + s + "'");
}

void MixtureWeights::validate() const {
  if (!(left >= 0.0) || !(right >= 0.0)) throw ConfigError("mixture weights must be >= 0");
  if (std::abs(left + right - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
}

void TrialSpec::validate() const {
  if (trial_id.empty()) throw ConfigError("trial id must be nonempty");
  if (trial_id.find_first_of(",\n\"") != std::string::npos)
    throw ConfigError("trial id must not contain commas, quotes or newlines");
  if (null.degenerate()) throw DomainError("trial " + trial_id + ": null needs hr > 0");
  if (!(alt_left.hr() < null.hr()))
    throw ConfigError("trial " + trial_id + ": left alternative must have hr below the null");
  if (!(alt_right.hr() > null.hr()))
    throw ConfigError("trial " + trial_id + ": right alternative must have hr above the null");
  if (!std::isfinite(allocation_r) || allocation_r <= 0.0)
    throw DomainError("trial " + trial_id + ": allocation ratio must be > 0");
  if (!std::isfinite(mu_divisor) || mu_divisor <= 0.0)
    throw ConfigError("trial " + trial_id + ": mu divisor must be > 0");
}

// ---- TrialStream ----------------------------------------------------------

TrialStream::TrialStream(TrialSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

void TrialStream::include(std::int64_t tick) {
  if (status_ != TrialStatus::kPending)
    throw LedgerError("trial " + id() + " cannot be included from status " + to_string(status_));
  status_ = TrialStatus::kIncluded;
  included_tick_ = tick;
}

void TrialStream::exclude(std::int64_t tick) {
  if (status_ == TrialStatus::kExcluded) throw LedgerError("trial " + id() + " already excluded");
  if (status_ == TrialStatus::kIncluded) {
    for (const auto& [ep, d] : data_) frozen_[ep] = raw(ep);
  }
  status_ = TrialStatus::kExcluded;
  excluded_tick_ = tick;
}

TrialStream::EndpointData& TrialStream::data(const std::string& endpoint) {
  return data_[endpoint];
}

void TrialStream::check_tick(EndpointData& d, std::int64_t tick) {
  if (tick < 0) throw LedgerError("negative tick");
  if (tick < d.last_tick)
    throw LedgerError("trial " + id() + ": out-of-order tick " + std::to_string(tick));
  d.last_tick = tick;
}

void TrialStream::add_event(const std::string& endpoint, Group group, std::int64_t tick) {
  auto& d = data(endpoint);
  if (d.z) throw LedgerError("trial " + id() + " endpoint " + endpoint + " mixes events and z summaries");
  check_tick(d, tick);
  if (!d.left) {
    d.left.emplace(spec_.alt_left, spec_.null, spec_.allocation_r);
    d.right.emplace(spec_.alt_right, spec_.null, spec_.allocation_r);
  }
  d.left->apply(group, tick);
  d.right->apply(group, tick);
}

void TrialStream::add_z(const std::string& endpoint, const ZSummary& summary, std::int64_t tick) {
  summary.validate();
  auto& d = data(endpoint);
  if (d.left) throw LedgerError("trial " + id() + " endpoint " + endpoint + " mixes events and z summaries");
  check_tick(d, tick);
  d.z = summary;
}

SideScores TrialStream::raw(const std::string& endpoint) const {
  const auto it = data_.find(endpoint);
  if (it == data_.end()) return {};
  const auto& d = it->second;
  if (d.left) return {d.left->log_e(), d.right->log_e()};
  if (d.z) {
    const double m0 = spec_.null.mu(spec_.mu_divisor);
    return {gaussian_log_lr(*d.z, spec_.alt_left.mu(spec_.mu_divisor), m0),
            gaussian_log_lr(*d.z, spec_.alt_right.mu(spec_.mu_divisor), m0)};
  }
  return {};
}

SideScores TrialStream::contribution(const std::string& endpoint) const {
  switch (status_) {
    case TrialStatus::kPending: return {};
    case TrialStatus::kIncluded: return raw(endpoint);
    case TrialStatus::kExcluded: {
      const auto it = frozen_.find(endpoint);
      return it == frozen_.end() ? SideScores{} : it->second;
    }
  }
  return {};
}

bool TrialStream::has_endpoint(const std::string& endpoint) const {
  return data_.contains(endpoint);
}

std::vector<std::string> TrialStream::endpoints() const {
  std::vector<std::string> out;
  for (const auto& [ep, d] : data_) out.push_back(ep);
  return out;
}

std::optional<std::pair<std::int64_t, std::int64_t>> TrialStream::counts(
    const std::string& endpoint) const {
  const auto it = data_.find(endpoint);
  if (it == data_.end() || !it->second.left) return std::nullopt;
  return std::pair{it->second.left->n_treatment(), it->second.left->n_control()};
}

std::optional<ZSummary> TrialStream::z_summary(const std::string& endpoint) const {
  const auto it = data_.find(endpoint);
  if (it == data_.end()) return std::nullopt;
  if (it->second.z) return it->second.z;
  if (it->second.left && it->second.left->n() > 0)
    return z_from_counts(it->second.left->n_treatment(), it->second.left->n_control());
  return std::nullopt;
}

// ---- combination ----------------------------------------------------------

double meta_product(std::span<const TrialStream> trials, Side side, const std::string& endpoint) {
  double out = 0.0;
  for (const auto& t : trials) out += t.contribution(endpoint).get(side);
  return out;
}

double meta_product(std::span<const double> per_trial_log_e) {
  return std::accumulate(per_trial_log_e.begin(), per_trial_log_e.end(), 0.0);
}

double two_sided(double log_left, double log_right, const MixtureWeights& weights) {
  weights.validate();
  const double a = weights.left > 0.0 ? std::log(weights.left) + log_left : kNegInf;
  const double b = weights.right > 0.0 ? std::log(weights.right) + log_right : kNegInf;
  return log_add(a, b);
}

DecisionLatch::DecisionLatch(double threshold) : threshold_(threshold) {
  if (!(threshold > 1.0) || !std::isfinite(threshold))
    throw ConfigError("decision threshold must be finite and > 1");
}

void DecisionLatch::observe(std::int64_t tick, double log_e) {
  if (!reject_tick_ && reaches(log_e, threshold_)) reject_tick_ = tick;
}

void validate_plans(std::span<const EndpointPlan> plans, double alpha) {
  double total = 0.0;
  for (const auto& p : plans) {
    for (double a : {p.alpha_left, p.alpha_right}) {
      if (!(a > 0.0 && a < 1.0))
        throw ConfigError("endpoint " + p.endpoint_id + ": alpha share must be in (0, 1)");
      total += a;
    }
  }
  if (!plans.empty() && std::abs(total - alpha) > 1e-9 * std::max(1.0, alpha))
    throw ConfigError("endpoint alpha shares sum to " + std::to_string(total) +
                      ", expected " + std::to_string(alpha));
}

CoPrimaryReport co_primary(const std::map<std::string, SideScores>& endpoint_log_e,
                           std::span<const EndpointPlan> plans, CombinationMode mode) {
  if (plans.empty()) throw ConfigError("co-primary analysis needs at least one endpoint plan");
  CoPrimaryReport out;
  out.mode = mode;
  double alpha_total = 0.0;
  double capital = 0.0;  // sum of alpha_share * e, compared against 1
  for (const auto& plan : plans) {
    const auto it = endpoint_log_e.find(plan.endpoint_id);
    if (it == endpoint_log_e.end())
      throw ConfigError("endpoint '" + plan.endpoint_id + "' missing from co-primary input");
    for (Side s : {Side::kLeft, Side::kRight}) {
      EndpointSideDecision d;
      d.endpoint_id = plan.endpoint_id;
      d.side = s;
      d.log_e = it->second.get(s);
      d.threshold = 1.0 / plan.alpha(s);
      d.rejected = mode == CombinationMode::kSeparate && reaches(d.log_e, d.threshold);
      alpha_total += plan.alpha(s);
      capital += plan.alpha(s) * std::exp(d.log_e);
      out.components.push_back(d);
    }
  }
  if (mode == CombinationMode::kAveraged) {
    out.averaged_threshold = 1.0 / alpha_total;
    out.averaged_e = capital / alpha_total;
    out.global_rejected = capital >= 1.0 - 1e-12;
    out.note = "averaged mode tests only the conjunction null; components are non-inferential";
  } else {
    out.global_rejected = std::any_of(out.components.begin(), out.components.end(),
                                      [](const auto& d) { return d.rejected; });
    out.note = "each endpoint side tested at its own alpha share";
  }
  return out;
}

// ---- Monitor --------------------------------------------------------------

const EndpointMeta* MetaState::endpoint(const std::string& id) const {
  for (const auto& e : endpoints)
    if (e.endpoint_id == id) return &e;
  return nullptr;
}

Monitor::Monitor(MonitorConfig config) : config_(std::move(config)) {
  if (!(config_.alpha > 0.0 && config_.alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  config_.weights.validate();
  validate_plans(config_.plans, config_.alpha);
  for (const auto& p : config_.plans) endpoints_.push_back(p.endpoint_id);
  std::sort(endpoints_.begin(), endpoints_.end());
  endpoints_.erase(std::unique(endpoints_.begin(), endpoints_.end()), endpoints_.end());
}

SideScores Monitor::thresholds(const std::string& endpoint) const {
  for (const auto& p : config_.plans)
    if (p.endpoint_id == endpoint) return {1.0 / p.alpha_left, 1.0 / p.alpha_right};
  const double t = 2.0 / config_.alpha;
  return {t, t};
}

void Monitor::advance(std::int64_t tick) {
  if (tick < 0) throw LedgerError("negative tick");
  if (tick < tick_)
    throw LedgerError("tick " + std::to_string(tick) + " precedes current tick " + std::to_string(tick_));
  if (tick > tick_) finish();
  tick_ = tick;
  dirty_ = true;
}

TrialStream& Monitor::trial(const std::string& id) {
  const auto it = trials_.find(id);
  if (it == trials_.end()) throw LedgerError("unknown trial '" + id + "'");
  return it->second;
}

void Monitor::register_trial(TrialSpec spec, std::int64_t tick) {
  if (trials_.contains(spec.trial_id)) throw LedgerError("trial '" + spec.trial_id + "' registered twice");
  advance(tick);
  std::string id = spec.trial_id;
  trials_.emplace(id, TrialStream(std::move(spec)));
}

void Monitor::include(const std::string& trial_id, std::int64_t tick) {
  auto& t = trial(trial_id);
  advance(tick);
  t.include(tick);
}

void Monitor::exclude(const std::string& trial_id, std::int64_t tick) {
  auto& t = trial(trial_id);
  advance(tick);
  t.exclude(tick);
}

void Monitor::check_planned(const std::string& endpoint) const {
  if (config_.plans.empty()) return;
  for (const auto& p : config_.plans)
    if (p.endpoint_id == endpoint) return;
  throw ConfigError("endpoint '" + endpoint + "' has no alpha share in the endpoint plans");
}

void Monitor::add_event(const EventRecord& event) {
  check_planned(event.endpoint_id);
  auto& t = trial(event.trial_id);
  advance(event.tick);
  t.add_event(event.endpoint_id, event.group, event.tick);
  if (!std::binary_search(endpoints_.begin(), endpoints_.end(), event.endpoint_id))
    endpoints_.insert(std::upper_bound(endpoints_.begin(), endpoints_.end(), event.endpoint_id),
                      event.endpoint_id);
}

void Monitor::add_z(const std::string& trial_id, const std::string& endpoint, const ZSummary& z,
                    std::int64_t tick) {
  check_planned(endpoint);
  auto& t = trial(trial_id);
  advance(tick);
  t.add_z(endpoint, z, tick);
  if (!std::binary_search(endpoints_.begin(), endpoints_.end(), endpoint))
    endpoints_.insert(std::upper_bound(endpoints_.begin(), endpoints_.end(), endpoint), endpoint);
}

const MetaState& Monitor::monitor(std::span<const EventRecord> events) {
  for (const auto& e : events) add_event(e);
  finish();
  return state_;
}

MetaState Monitor::snapshot() const {
  MetaState s;
  s.tick = tick_;
  for (const auto& ep : endpoints_) {
    EndpointMeta m;
    m.endpoint_id = ep;
    for (const auto& [id, t] : trials_) {
      const SideScores c = t.contribution(ep);
      m.per_trial[id] = c;
      m.meta.left += c.left;
      m.meta.right += c.right;
    }
    m.two_sided = two_sided(m.meta.left, m.meta.right, config_.weights);
    m.threshold = thresholds(ep);
    m.two_sided_threshold = 1.0 / config_.alpha;
    s.endpoints.push_back(std::move(m));
  }
  return s;
}

void Monitor::finish() {
  if (!dirty_) return;
  dirty_ = false;
  MetaState s = snapshot();
  std::map<std::string, SideScores> scores;
  for (auto& m : s.endpoints) {
    auto it = latches_.find(m.endpoint_id);
    if (it == latches_.end())
      it = latches_.emplace(m.endpoint_id, std::pair{DecisionLatch(m.threshold.left),
                                                     DecisionLatch(m.threshold.right)})
               .first;
    it->second.first.observe(s.tick, m.meta.left);
    it->second.second.observe(s.tick, m.meta.right);
    m.reject_tick_left = it->second.first.reject_tick();
    m.reject_tick_right = it->second.second.reject_tick();

    auto& pm = p_min_.try_emplace(m.endpoint_id, SideScores{1.0, 1.0}).first->second;
    pm.left = std::min(pm.left, conservative_p_from_log(m.meta.left));
    pm.right = std::min(pm.right, conservative_p_from_log(m.meta.right));
    m.p_running_min = pm;
    scores[m.endpoint_id] = m.meta;
  }

  std::optional<std::int64_t> decided = state_.decision_tick;
  if (config_.mode == CombinationMode::kAveraged && !config_.plans.empty()) {
    for (const auto& p : config_.plans) scores.try_emplace(p.endpoint_id, SideScores{});
    s.co_primary = co_primary(scores, config_.plans, config_.mode);
    if (!decided && s.co_primary->global_rejected) decided = s.tick;
  } else {
    if (!config_.plans.empty()) {
      for (const auto& p : config_.plans) scores.try_emplace(p.endpoint_id, SideScores{});
      s.co_primary = co_primary(scores, config_.plans, config_.mode);
    }
    if (!decided) {
      for (const auto& m : s.endpoints)
        if (m.rejected()) decided = s.tick;
    }
  }
  s.decision_tick = decided;
  s.decision = decided ? Decision::kRejectNull : Decision::kContinue;
  state_ = s;
  history_.push_back(std::move(s));
}

}  // namespace allin
