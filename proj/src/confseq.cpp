#include "allin/confseq.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>

#include "allin/error.hpp"

namespace allin {

namespace {

void check_level(double alpha, double delta) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("confidence level alpha must be in (0, 1)");
  if (!std::isfinite(delta) || !(delta > 0.0)) throw ConfigError("delta_design must be finite and > 0");
}

double drift_to_hr(double eta) { return std::exp(kCsDriftDivisor * eta); }

}  // namespace

Interval intersect(const Interval& a, const Interval& b) noexcept {
  return {std::max(a.lower, b.lower), std::min(a.upper, b.upper)};
}

EffectScale peto_estimate(const ZSummary& z) {
  if (z.n < 1) throw DomainError("Peto estimate undefined without events");
  z.validate();
  return EffectScale::from_hr(std::exp(2.0 * z.z / std::sqrt(static_cast<double>(z.n))));
}

double cs_half_width(std::int64_t n, double alpha, double delta_design) {
  check_level(alpha, delta_design);
  return delta_design / 2.0 + std::log(2.0 / alpha) / (static_cast<double>(n) * delta_design);
}

Interval cs_interval(const ZSummary& z, double alpha, double delta_design) {
  z.validate();
  const double b = cs_half_width(z.n, alpha, delta_design);
  const double centre = z.z / std::sqrt(static_cast<double>(z.n));
  return {drift_to_hr(centre - b), drift_to_hr(centre + b)};
}

bool cs_excludes(const ZSummary& z, double theta0, double alpha, double delta_design) {
  check_level(alpha, delta_design);
  if (!(theta0 > 0.0) || !std::isfinite(theta0)) throw DomainError("candidate hr must be in (0, inf)");
  const double eta0 = std::log(theta0) / kCsDriftDivisor;
  const double bound = std::log(2.0 / alpha);
  return gaussian_log_lr(z, eta0 - delta_design, eta0) >= bound ||
         gaussian_log_lr(z, eta0 + delta_design, eta0) >= bound;
}

Interval classical_interval(std::int64_t n_treatment, std::int64_t n_control, double alpha_half) {
  if (!(alpha_half > 0.0 && alpha_half < 0.5)) throw ConfigError("alpha/2 must be in (0, 0.5)");
  if (n_treatment < 1 || n_control < 1) throw DomainError("classical interval needs events in both groups");
  const double n = static_cast<double>(n_treatment + n_control);
  const double p = static_cast<double>(n_treatment) / n;
  const double se = std::sqrt(p * (1.0 - p) / n);
  const double zq = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha_half);
  const double lo = std::max(p - zq * se, 0.0);
  const double hi = std::min(p + zq * se, 1.0);
  return {lo / (1.0 - lo), hi >= 1.0 ? std::numeric_limits<double>::infinity() : hi / (1.0 - hi)};
}

ZSummary stratified_z(std::span<const ZSummary> per_trial) {
  if (per_trial.empty()) throw DomainError("stratified z needs at least one trial");
  double num = 0.0;
  std::int64_t n = 0;
  for (const auto& z : per_trial) {
    z.validate();
    num += z.z * std::sqrt(static_cast<double>(z.n));
    n += z.n;
  }
  return {num / std::sqrt(static_cast<double>(n)), n};
}

ConfSeq::ConfSeq(double alpha, double delta_design) : alpha_(alpha), delta_(delta_design) {
  check_level(alpha, delta_design);
}

const ConfSeqState& ConfSeq::push(std::int64_t tick, const ZSummary& z) {
  ConfSeqState s;
  s.tick = tick;
  s.n = z.n;
  s.estimate = peto_estimate(z);
  s.interval = cs_interval(z, alpha_, delta_);
  intersection_ = intersect(intersection_, s.interval);
  s.intersection = intersection_;
  s.alpha = alpha_;
  s.delta_design = delta_;
  if (!states_.empty() && states_.back().tick == tick)
    states_.back() = s;
  else
    states_.push_back(s);
  return states_.back();
}

std::vector<ConfSeqState> cs_stream(std::span<const StreamEvent> events, double alpha,
                                    double delta_design) {
  ConfSeq cs(alpha, delta_design);
  std::int64_t t = 0;
  std::int64_t c = 0;
  std::int64_t last = -1;
  for (const auto& e : events) {
    if (e.tick < last) throw LedgerError("confidence sequence stream out of tick order");
    last = e.tick;
    (e.group == Group::kTreatment ? t : c) += 1;
    cs.push(e.tick, z_from_counts(t, c));
  }
  return cs.states();
}

std::vector<ConfSeqState> cs_stream(std::span<const TickZ> series, double alpha,
                                    double delta_design) {
  ConfSeq cs(alpha, delta_design);
  std::int64_t last = -1;
  for (const auto& s : series) {
    if (s.tick < last) throw LedgerError("confidence sequence stream out of tick order");
    last = s.tick;
    cs.push(s.tick, s.z);
  }
  return cs.states();
}

}  // namespace allin
