#include "allin/design.hpp"

#include <cmath>

#include "allin/error.hpp"

namespace allin {

void DesignSpec::validate() const {
  if (n_planned < 0) throw ConfigError("planned events must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (null.degenerate()) throw DomainError("null needs hr > 0");
  if (!std::isfinite(allocation_r) || allocation_r <= 0.0) throw DomainError("allocation ratio must be > 0");
}

double log_growth_rate(const EffectScale& truth, const EffectScale& alt_bet,
                       const EffectScale& null, double allocation_r) {
  const double pt = event_prob(truth, allocation_r);
  const double lt = event_log_lr(Group::kTreatment, alt_bet, null, allocation_r);
  const double lc = event_log_lr(Group::kControl, alt_bet, null, allocation_r);
  if (pt > 0.0 && std::isinf(lt)) throw DomainError("bet assigns zero probability to a possible outcome");
  return (pt > 0.0 ? pt * lt : 0.0) + (1.0 - pt) * lc;
}

double growth_rate(const EffectScale& truth, const EffectScale& alt_bet, const EffectScale& null,
                   double allocation_r) {
  return std::exp(log_growth_rate(truth, alt_bet, null, allocation_r));
}

double log_implied_target(const DesignSpec& spec) {
  spec.validate();
  if (spec.n_planned == 0) return 0.0;
  return static_cast<double>(spec.n_planned) *
         log_growth_rate(spec.assumed_truth(), spec.alt_bet, spec.null, spec.allocation_r);
}

double implied_target(const DesignSpec& spec) { return std::exp(log_implied_target(spec)); }

double gaussian_implied_target(double mu1, double mu0, std::int64_t n) {
  if (n < 0) throw ConfigError("n must be >= 0");
  const double d = mu1 - mu0;
  return std::exp(static_cast<double>(n) * d * d / 2.0);
}

ExpectedEvents expected_events_to_threshold(const EffectScale& truth, const EffectScale& alt_bet,
                                            const EffectScale& null, double alpha,
                                            double allocation_r) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  const double g = log_growth_rate(truth, alt_bet, null, allocation_r);
  ExpectedEvents out;
  if (!(g > 0.0)) return out;
  out.favorable = true;
  out.events = std::log(1.0 / alpha) / g;
  out.ceiling = static_cast<std::int64_t>(std::ceil(out.events));
  return out;
}

double remaining_target(double current_e, double alpha) {
  if (!(current_e > 0.0) || !std::isfinite(current_e)) throw DomainError("current e-value must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  return (1.0 / alpha) / current_e;
}

std::vector<ExpectedEventsRow> expected_events_grid(std::span<const double> truth_ve,
                                                    std::span<const double> bet_ve,
                                                    const EffectScale& null, double alpha,
                                                    double allocation_r) {
  std::vector<ExpectedEventsRow> rows;
  rows.reserve(truth_ve.size() * bet_ve.size());
  for (double b : bet_ve) {
    for (double t : truth_ve) {
      rows.push_back({t, b,
                      expected_events_to_threshold(EffectScale::from_ve(t), EffectScale::from_ve(b),
                                                   null, alpha, allocation_r)});
    }
  }
  return rows;
}

}  // namespace allin
