#include "allin/figures.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "allin/confseq.hpp"
#include "allin/report.hpp"
#include "allin/svg.hpp"

namespace allin {

namespace {

constexpr double kDisplayFloor = 1e-4;

double shown(double log_e) { return std::exp(std::clamp(log_e, std::log(kDisplayFloor), 300.0)); }

SimPlan event_plan(const FigureOptions& opt, double truth_ve, std::int64_t n) {
  SimPlan p;
  p.truth = EffectScale::from_ve(truth_ve);
  p.alt = EffectScale::from_ve(0.5);
  p.null = EffectScale::from_ve(0.3);
  p.horizon_n = n;
  p.replications = opt.replications;
  p.alpha = 0.025;
  p.seed = opt.seed;
  p.keep_trajectories = opt.plotted_trajectories;
  return p;
}

std::string sim_summary(const SimResult& r) {
  return fmt::format("frac_cross_ever,{}\nfrac_cross_at_horizon,{}\nmean_final_e,{}\nse_final_e,{}\n",
                     format_num(r.frac_cross_ever), format_num(r.frac_cross_at_horizon),
                     format_num(r.mean_final_e()), format_num(r.se_final_e()));
}

}  // namespace

Artifact trajectory_artifact(const std::string& name, const SimPlan& plan, double implied_target_per_event,
                             const std::string& title) {
  const SimResult r = run(plan);
  Artifact a;
  a.name = name;
  svg::Chart c;
  c.title = title;
  c.x_label = "events (betting rounds)";
  c.y_label = "betting score (log scale)";
  c.log_y = true;
  for (const auto& traj : r.trajectories) {
    svg::Series s;
    s.color = "#1f77b4";
    s.width = 0.6;
    s.opacity = 0.25;
    s.in_legend = false;
    for (const auto& tv : traj) s.points.emplace_back(static_cast<double>(tv.tick), shown(tv.log_e));
    c.series.push_back(std::move(s));
  }
  if (implied_target_per_event > 0.0) {
    svg::Series target;
    target.name = fmt::format("implied target ({} at n={})",
                              format_num(std::pow(implied_target_per_event, static_cast<double>(plan.horizon_n))),
                              plan.horizon_n);
    target.color = "#000000";
    target.width = 2.0;
    for (std::int64_t k = 0; k <= plan.horizon_n; k += std::max<std::int64_t>(1, plan.horizon_n / 64))
      target.points.emplace_back(static_cast<double>(k), std::pow(implied_target_per_event, static_cast<double>(k)));
    target.points.emplace_back(static_cast<double>(plan.horizon_n),
                               std::pow(implied_target_per_event, static_cast<double>(plan.horizon_n)));
    c.series.push_back(std::move(target));
  }
  c.hlines.push_back({plan.threshold(), "1/alpha = " + format_num(plan.threshold()), "#d62728", true});
  a.files[name + ".svg"] = svg::render(c);

  svg::Histogram h;
  h.title = fmt::format("betting score after {} events", plan.horizon_n);
  h.x_label = "betting score (log scale)";
  h.log_x = true;
  for (double v : r.final_log_e) h.values.push_back(shown(v));
  h.vlines.push_back({plan.threshold(), "1/alpha", "#d62728", true});
  h.vlines.push_back({1.0, "1", "#444444", false});
  a.files[name + "_final_hist.svg"] = svg::render(h);
  a.files[name + ".csv"] = serialize(r);
  a.files[name + "_summary.csv"] = "quantity,value\n" + sim_summary(r);
  return a;
}

Artifact null_trajectories(const FigureOptions& opt) {
  Artifact a = trajectory_artifact("fig1_null_trajectories", event_plan(opt, 0.3, 170), 0.0,
                                   "Betting scores under the null (VE 30%), bet VE 50% vs 30%");
  a.description = "trajectories and final-score histogram under the null";
  return a;
}

Artifact expected_events_curves(const EffectScale& null, double alpha) {
  Artifact a;
  a.name = "fig2_expected_events";
  a.description = "expected events to reach 1/alpha by true VE, per bet VE";
  std::vector<double> truth;
  for (int v = 35; v <= 80; ++v) truth.push_back(v / 100.0);
  const std::vector<double> bets = {0.4, 0.5, 0.6};
  const auto rows = expected_events_grid(truth, bets, null, alpha);
  std::string csv = "truth_ve,bet_ve,favorable,expected_events,ceiling\n";
  svg::Chart c;
  c.title = fmt::format("Expected events to reach 1/alpha = {}", format_num(1.0 / alpha));
  c.x_label = "true VE";
  c.y_label = "expected number of events";
  const bool dashed[] = {false, true, true};
  for (std::size_t b = 0; b < bets.size(); ++b) {
    svg::Series s;
    s.name = fmt::format("bet VE {:.0f}%", bets[b] * 100);
    s.color = svg::palette(b);
    s.dashed = dashed[b];
    s.width = 2.0;
    c.series.push_back(std::move(s));
  }
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{},{},{}\n", format_num(r.truth_ve), format_num(r.bet_ve), r.expected.favorable ? 1 : 0,
                       r.expected.favorable ? format_num(r.expected.events) : "inf", r.expected.ceiling);
    const auto b = static_cast<std::size_t>(std::find(bets.begin(), bets.end(), r.bet_ve) - bets.begin());
    if (r.expected.favorable && r.expected.events < 2000)
      c.series[b].points.emplace_back(r.truth_ve, r.expected.events);
  }
  c.y_range = std::pair{0.0, 1000.0};
  a.files[a.name + ".csv"] = csv;
  a.files[a.name + ".svg"] = svg::render(c);
  return a;
}

Artifact curevac_confidence_sequence(const FigureOptions& opt, double alpha) {
  Artifact a;
  a.name = "fig3_confidence_sequence";
  a.description = "confidence sequence for a random ordering of 83 treatment / 145 control events";
  const auto events = random_ordering(83, 145, opt.seed);
  const auto states = cs_stream(std::span<const StreamEvent>(events), alpha);
  a.files[a.name + ".csv"] = confseq_csv(states);
  a.files[a.name + ".svg"] =
      confseq_svg(states, fmt::format("{:.0f}% confidence sequence, random ordering of 83 + 145 events",
                                      100 * (1 - alpha)));
  return a;
}

Artifact alternative_final_scores(const FigureOptions& opt) {
  const SimPlan plan = event_plan(opt, 0.6, 160);
  const double g = growth_rate(plan.truth, plan.alt, plan.null);
  Artifact a;
  a.name = "fig4_alternative_final_scores";
  a.description = "distribution of betting scores after 160 events under VE 60%";
  const SimResult r = run(plan);
  svg::Histogram h;
  h.title = "Betting score after 160 events, true VE 60%";
  h.x_label = "betting score (log scale)";
  h.log_x = true;
  for (double v : r.final_log_e) h.values.push_back(shown(v));
  h.vlines.push_back({plan.threshold(), "1/alpha = 40", "#d62728", true});
  h.vlines.push_back({std::pow(g, 160.0), "implied target " + format_num(std::pow(g, 160.0)), "#000000", false});
  a.files[a.name + ".svg"] = svg::render(h);
  a.files[a.name + ".csv"] = "quantity,value\n" + sim_summary(r) +
                             fmt::format("implied_target,{}\ngrowth_rate,{}\n", format_num(std::pow(g, 160.0)),
                                         format_num(g));
  return a;
}

Artifact alternative_trajectories(const FigureOptions& opt) {
  const SimPlan plan = event_plan(opt, 0.6, 160);
  Artifact a = trajectory_artifact("fig5_alternative_trajectories", plan,
                                   growth_rate(plan.truth, plan.alt, plan.null),
                                   "Betting scores under VE 60%, bet VE 50% vs 30%");
  a.description = "trajectories under VE 60% with the implied-target line";
  return a;
}

Artifact worked_examples() {
  Artifact a;
  a.name = "worked_examples";
  a.description = "worked-example table";
  const auto ve50 = EffectScale::from_ve(0.5);
  const auto ve30 = EffectScale::from_ve(0.3);
  const Bet bet = Bet::make(ve50, ve30);
  const double pfizer = bet.log_e(8, 162);
  const double curevac = bet.log_e(83, 145);
  const auto peto = peto_estimate(z_from_counts(83, 145));
  const auto ci = classical_interval(83, 145, 0.02281);
  const double g = growth_rate(EffectScale::from_ve(0.6), ve50, ve30);
  DesignSpec d;
  d.truth = EffectScale::from_ve(0.6);
  d.n_planned = 160;
  const auto ee = expected_events_to_threshold(EffectScale::from_ve(0.6), ve50, ve30, 0.025);
  std::string csv = "quantity,value,log_value\n";
  auto row = [&](const std::string& q, const std::string& v, const std::string& l = "") {
    csv += q + "," + v + "," + l + "\n";
  };
  row("event_prob_ve30", format_num(event_prob(ve30)));
  row("event_prob_ve50", format_num(event_prob(ve50)));
  row("lr_treatment_event", format_num(event_lr(Group::kTreatment, ve50, ve30)));
  row("lr_control_event", format_num(event_lr(Group::kControl, ve50, ve30)));
  row("pfizer_e_value_8_162", format_e(pfizer), fmt::format("{:.17g}", pfizer));
  row("curevac_e_value_83_145", format_e(curevac), fmt::format("{:.17g}", curevac));
  row("curevac_conservative_p", format_num(conservative_p_from_log(curevac)));
  row("curevac_point_estimate_ve", format_num(peto.ve()));
  row("curevac_classical_ci_ve_lower", format_num(1.0 - ci.upper));
  row("curevac_classical_ci_ve_upper", format_num(1.0 - ci.lower));
  row("growth_rate_truth60_bet50_null30", fmt::format("{:.7f}", g));
  row("implied_target_n160", format_num(implied_target(d)), fmt::format("{:.17g}", log_implied_target(d)));
  row("expected_events_to_40", format_num(ee.events));
  row("remaining_target_from_8_at_0.0025", format_num(remaining_target(8.0, 0.0025)));
  a.files[a.name + ".csv"] = csv;
  return a;
}

std::vector<Artifact> standard_artifacts(const FigureOptions& opt) {
  return {null_trajectories(opt),       expected_events_curves(),   curevac_confidence_sequence(opt),
          alternative_final_scores(opt), alternative_trajectories(opt), worked_examples()};
}

}  // namespace allin
