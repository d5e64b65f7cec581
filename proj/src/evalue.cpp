#include "allin/evalue.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "allin/error.hpp"

namespace allin {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_r(double r) {
  if (!std::isfinite(r) || r <= 0.0) throw DomainError("allocation ratio must be finite and > 0");
}

void check_null(const EffectScale& null) {
  if (null.degenerate()) throw DomainError("null hypothesis must have hr > 0");
}

}  // namespace

EffectScale EffectScale::from_hr(double hr) {
  if (!std::isfinite(hr) || hr < 0.0) throw DomainError("hazard ratio must be finite and >= 0");
  return EffectScale(hr);
}

EffectScale EffectScale::from_ve(double ve) {
  if (!std::isfinite(ve) || ve > 1.0) throw DomainError("vaccine efficacy must be finite and <= 1");
  return EffectScale(1.0 - ve);
}

EffectScale EffectScale::from_mu(double mu, double divisor) {
  if (!std::isfinite(mu) || !std::isfinite(divisor) || divisor <= 0.0)
    throw DomainError("mu and divisor must be finite, divisor > 0");
  return EffectScale(std::exp(mu * divisor));
}

double EffectScale::mu(double divisor) const {
  if (!std::isfinite(divisor) || divisor <= 0.0) throw DomainError("mu divisor must be > 0");
  return std::log(hr_) / divisor;
}

std::string to_string(Group g) { return g == Group::kTreatment ? "treatment" : "control"; }

Group parse_group(const std::string& s) {
  if (s == "treatment" || s == "T" || s == "t") return Group::kTreatment;
  if (s == "control" || s == "C" || s == "c") return Group::kControl;
  throw DomainError("unknown group '" + s + "'");
}

void ZSummary::validate() const {
  if (n < 1) throw DomainError("z summary needs n >= 1");
  if (!std::isfinite(z)) throw DomainError("z statistic must be finite");
}

double event_prob(const EffectScale& effect, double allocation_r) {
  check_r(allocation_r);
  const double rt = allocation_r * effect.hr();
  return rt / (1.0 + rt);
}

double event_log_lr(Group group, const EffectScale& alt, const EffectScale& null,
                    double allocation_r) {
  check_null(null);
  const double p1 = event_prob(alt, allocation_r);
  const double p0 = event_prob(null, allocation_r);
  if (group == Group::kTreatment) return p1 == 0.0 ? kNegInf : std::log(p1 / p0);
  // 1 - p = 1 / (1 + r hr), so the control ratio avoids cancellation.
  return std::log1p(allocation_r * null.hr()) - std::log1p(allocation_r * alt.hr());
}

double event_lr(Group group, const EffectScale& alt, const EffectScale& null,
                double allocation_r) {
  return std::exp(event_log_lr(group, alt, null, allocation_r));
}

Bet Bet::make(const EffectScale& alt, const EffectScale& null, double allocation_r) {
  return Bet{event_log_lr(Group::kTreatment, alt, null, allocation_r),
             event_log_lr(Group::kControl, alt, null, allocation_r)};
}

double Bet::log_e(std::int64_t n_treatment, std::int64_t n_control) const noexcept {
  if (n_treatment > 0 && log_lr_treatment == kNegInf) return kNegInf;
  double out = 0.0;
  if (n_treatment > 0) out += static_cast<double>(n_treatment) * log_lr_treatment;
  if (n_control > 0) out += static_cast<double>(n_control) * log_lr_control;
  return out;
}

BettingState::BettingState(const EffectScale& alt, const EffectScale& null, double allocation_r)
    : alt_(alt), null_(null), allocation_r_(allocation_r), bet_(Bet::make(alt, null, allocation_r)) {}

void BettingState::apply(Group group, std::int64_t tick) {
  if (tick < 0) throw LedgerError("negative tick");
  if (!history_.empty() && tick < history_.back().tick)
    throw LedgerError("out-of-order tick " + std::to_string(tick) + " after " +
                      std::to_string(history_.back().tick));
  (group == Group::kTreatment ? n_treatment_ : n_control_) += 1;
  log_e_ += bet_.log_lr(group);
  if (log_e_ == kNegInf) absorbed_ = true;
  if (!history_.empty() && history_.back().tick == tick)
    history_.back().log_e = log_e_;
  else
    history_.push_back({tick, log_e_});
}

double BettingState::e() const { return std::exp(log_e_); }

BettingState accumulate(BettingState state, const EventRecord& event) {
  state.apply(event.group, event.tick);
  return state;
}

ZSummary z_from_counts(std::int64_t n_treatment, std::int64_t n_control) {
  if (n_treatment < 0 || n_control < 0) throw DomainError("negative event count");
  const std::int64_t n = n_treatment + n_control;
  if (n < 1) throw DomainError("z summary needs at least one event");
  double t = static_cast<double>(n_treatment);
  double c = static_cast<double>(n_control);
  if (n_treatment == 0 || n_control == 0) {
    t += 0.5;
    c += 0.5;
  }
  return ZSummary{std::sqrt(static_cast<double>(n)) / 2.0 * std::log(t / c), n};
}

double gaussian_log_lr(const ZSummary& summary, double mu1, double mu0) {
  summary.validate();
  if (!std::isfinite(mu1) || !std::isfinite(mu0)) throw DomainError("mu must be finite");
  const double n = static_cast<double>(summary.n);
  return std::sqrt(n) * summary.z * (mu1 - mu0) - n * (mu1 * mu1 - mu0 * mu0) / 2.0;
}

double gaussian_lr(const ZSummary& summary, double mu1, double mu0) {
  return std::exp(gaussian_log_lr(summary, mu1, mu0));
}

double conservative_p(double e) {
  if (!(e > 0.0) || std::isnan(e)) throw DomainError("e-value must be > 0");
  return e >= 1.0 ? 1.0 / e : 1.0;
}

double conservative_p_from_log(double log_e) {
  if (std::isnan(log_e)) throw DomainError("log e-value is NaN");
  return log_e > 0.0 ? std::exp(-log_e) : 1.0;
}

AnytimePValues anytime_p_sequence(std::span<const double> log_e) {
  if (log_e.empty()) throw DomainError("anytime p-values need a nonempty history");
  AnytimePValues out;
  out.instantaneous.reserve(log_e.size());
  out.running_min.reserve(log_e.size());
  double lo = 1.0;
  for (double v : log_e) {
    const double p = conservative_p_from_log(v);
    lo = std::min(lo, p);
    out.instantaneous.push_back(p);
    out.running_min.push_back(lo);
  }
  return out;
}

bool reaches(double log_e, double threshold) {
  return log_e >= std::log(threshold) - 1e-12;
}

}  // namespace allin
