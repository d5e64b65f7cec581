// allin: ledger-backed anytime-valid meta-analysis from the command line.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "allin/confseq.hpp"
#include "allin/criteria.hpp"
#include "allin/design.hpp"
#include "allin/error.hpp"
#include "allin/figures.hpp"
#include "allin/ledger.hpp"
#include "allin/report.hpp"
#include "allin/simulate.hpp"

#ifndef ALLIN_DATA_DIR
#define ALLIN_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace allin;

namespace {

std::string exact(double v) { return fmt::format("{:.17g}", v); }

Config base_config(const std::string& path) { return path.empty() ? Config{} : load_config(path); }

// Validates the ledger with the new records replayed on top before any byte is written.
void checked_append(const fs::path& ledger, const std::vector<LedgerRecord>& add, const Config& base) {
  if (!fs::exists(ledger)) throw UsageError("ledger " + ledger.string() + " does not exist; run init first");
  auto all = read_ledger(ledger);
  all.insert(all.end(), add.begin(), add.end());
  ingest(all, base);
  append_records(ledger, add);
}

void write_files(const std::map<std::string, std::string>& files, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, content] : files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw UsageError("cannot write " + (dir / name).string());
    out << content;
  }
}

std::vector<LedgerRecord> events_from_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  std::vector<LedgerRecord> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty() || line.rfind("trial_id", 0) == 0) continue;
    std::stringstream ss(line);
    std::string trial, endpoint, tick, group;
    if (!std::getline(ss, trial, ',') || !std::getline(ss, endpoint, ',') || !std::getline(ss, tick, ',') ||
        !std::getline(ss, group))
      throw UsageError(fmt::format("{}:{}: expected trial_id,endpoint_id,tick,group", path.string(), no));
    LedgerRecord r;
    r.type = RecordType::kEvent;
    r.trial_id = trial;
    r.endpoint_id = endpoint;
    try {
      r.tick = std::stoll(tick);
      r.group = parse_group(group);
    } catch (const std::exception& e) {
      throw UsageError(fmt::format("{}:{}: {}", path.string(), no, e.what()));
    }
    out.push_back(r);
  }
  return out;
}

void print_sim(const SimResult& r) {
  fmt::print("replications: {}\nthreshold: {}\n", r.plan.replications, format_num(r.plan.threshold()));
  fmt::print("frac_cross_ever: {} ({} of {}, se {})\n", format_num(r.frac_cross_ever), r.n_cross_ever,
             r.plan.replications, format_num(binomial_se(r.frac_cross_ever, r.plan.replications)));
  fmt::print("frac_cross_at_horizon: {} ({} of {})\n", format_num(r.frac_cross_at_horizon), r.n_cross_at_horizon,
             r.plan.replications);
  fmt::print("mean_final_e: {} (se {})\n", format_num(r.mean_final_e()), format_num(r.se_final_e()));
  fmt::print("mean_final_log_e: {} (se {})\n", exact(r.mean_final_log_e()), format_num(r.se_final_log_e()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"allin: anytime-valid e-value meta-analysis of event-driven trials"};
  app.require_subcommand(1);

  std::string ledger = "allin.jsonl";
  std::string config_path;
  auto ledger_opts = [&](CLI::App* sub) {
    sub->add_option("-l,--ledger", ledger, "ledger file")->capture_default_str();
    sub->add_option("-c,--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  };

  // init
  auto* init = app.add_subcommand("init", "create a ledger, pinning config records at its head");
  ledger_opts(init);
  std::vector<std::string> sets;
  init->add_option("--set", sets, "key=value config entry (repeatable)");
  std::vector<std::string> plan_specs;
  init->add_option("--plan", plan_specs, "endpoint:alpha_left:alpha_right (repeatable; shares sum to alpha)");

  // add-trial
  auto* add_trial = app.add_subcommand("add-trial", "register a trial and its bets before its data");
  ledger_opts(add_trial);
  std::string trial_id;
  std::int64_t tick = 0;
  std::optional<double> null_hr, alt_left, alt_right, alloc_r;
  add_trial->add_option("-t,--trial", trial_id)->required();
  add_trial->add_option("--tick", tick)->required();
  add_trial->add_option("--null-hr", null_hr);
  add_trial->add_option("--alt-left-hr", alt_left, "benefit-side alternative hr");
  add_trial->add_option("--alt-right-hr", alt_right, "harm-side alternative hr");
  add_trial->add_option("-r,--allocation", alloc_r, "follow-up ratio treatment/control");

  auto* include = app.add_subcommand("include", "include a registered trial in the meta product");
  ledger_opts(include);
  include->add_option("-t,--trial", trial_id)->required();
  include->add_option("--tick", tick)->required();

  auto* exclude = app.add_subcommand("exclude", "exclude a trial; its contribution is frozen");
  ledger_opts(exclude);
  exclude->add_option("-t,--trial", trial_id)->required();
  exclude->add_option("--tick", tick)->required();

  std::string endpoint = "primary";
  auto* add_event = app.add_subcommand("add-event", "append one event");
  ledger_opts(add_event);
  std::string group;
  add_event->add_option("-t,--trial", trial_id)->required();
  add_event->add_option("-e,--endpoint", endpoint)->capture_default_str();
  add_event->add_option("--tick", tick)->required();
  add_event->add_option("-g,--group", group, "treatment | control")->required()->check(CLI::IsMember({"treatment", "control"}));

  auto* add_events = app.add_subcommand("add-events", "append events from CSV trial_id,endpoint_id,tick,group");
  ledger_opts(add_events);
  std::string csv_path;
  add_events->add_option("csv", csv_path)->required()->check(CLI::ExistingFile);

  auto* add_z = app.add_subcommand("add-z", "append a cumulative Z summary");
  ledger_opts(add_z);
  double z_value = 0.0;
  std::int64_t z_n = 0;
  add_z->add_option("-t,--trial", trial_id)->required();
  add_z->add_option("-e,--endpoint", endpoint)->capture_default_str();
  add_z->add_option("--tick", tick)->required();
  add_z->add_option("--z", z_value)->required();
  add_z->add_option("--n", z_n)->required();

  auto* ingest_cmd = app.add_subcommand("ingest", "replay the ledger and print the state and its hash");
  ledger_opts(ingest_cmd);

  auto* report_cmd = app.add_subcommand("report", "write the evidence tables and plots");
  ledger_opts(report_cmd);
  std::string out_dir = "report";
  std::string formats = "csv,svg";
  report_cmd->add_option("-o,--out", out_dir)->capture_default_str();
  report_cmd->add_option("-f,--format", formats, "csv, svg or csv,svg")->capture_default_str();

  // effect arguments accept 0.5, 50% or 0.7hr
  std::string truth_s = "0.3", bet_s = "0.5", null_s = "0.3";
  double alpha = 0.025, r = 1.0;
  std::int64_t n = 170;
  std::uint64_t seed = 20210701;

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo of betting-score trajectories");
  std::int64_t reps = 1000, keep = 200;
  unsigned threads = 0;
  simulate->add_option("--truth", truth_s)->capture_default_str();
  simulate->add_option("--bet", bet_s)->capture_default_str();
  simulate->add_option("--null", null_s)->capture_default_str();
  simulate->add_option("--n", n, "events per replication")->capture_default_str();
  simulate->add_option("--reps", reps)->capture_default_str();
  simulate->add_option("--alpha", alpha)->capture_default_str();
  simulate->add_option("-r,--allocation", r)->capture_default_str();
  simulate->add_option("--seed", seed)->capture_default_str();
  simulate->add_option("--threads", threads);
  simulate->add_option("--trajectories", keep, "replications kept for plotting")->capture_default_str();
  std::string sim_out;
  simulate->add_option("-o,--out", sim_out, "directory for CSV and SVG output");

  auto* design = app.add_subcommand("design", "growth rate, implied target, expected events");
  std::string design_truth;
  design->add_option("--truth", design_truth, "true effect (defaults to the bet)");
  design->add_option("--bet", bet_s)->capture_default_str();
  design->add_option("--null", null_s)->capture_default_str();
  design->add_option("--n", n, "planned events")->capture_default_str();
  design->add_option("--alpha", alpha)->capture_default_str();
  design->add_option("-r,--allocation", r)->capture_default_str();
  std::optional<double> current_e;
  design->add_option("--current-e", current_e, "running meta e-value, for the remaining target");
  std::string design_out;
  design->add_option("-o,--out", design_out, "directory for the expected-events grid (CSV and SVG)");

  auto* confseq = app.add_subcommand("confseq", "confidence sequence for event counts or a ledger endpoint");
  std::int64_t n_t = 83, n_c = 145;
  double cs_alpha = 0.1;
  std::optional<double> delta;
  std::string cs_ledger;
  confseq->add_option("--treatment", n_t, "treatment events (random ordering)")->capture_default_str();
  confseq->add_option("--control", n_c, "control events (random ordering)")->capture_default_str();
  confseq->add_option("--alpha", cs_alpha)->capture_default_str();
  confseq->add_option("--delta", delta, "design offset on the drift scale");
  confseq->add_option("--seed", seed)->capture_default_str();
  confseq->add_option("-l,--ledger", cs_ledger, "use the meta sequence of a ledger endpoint instead");
  confseq->add_option("-e,--endpoint", endpoint)->capture_default_str();
  std::string cs_out;
  confseq->add_option("-o,--out", cs_out, "directory for CSV and SVG output");

  auto* reproduce = app.add_subcommand("reproduce-paper", "write all figure and table artifacts, then run the acceptance checks");
  std::string repro_out = "artifacts";
  bool strict = false;
  std::string ledger_dir = ALLIN_DATA_DIR "/ledgers";
  reproduce->add_option("-o,--out", repro_out)->capture_default_str();
  reproduce->add_option("--seed", seed)->capture_default_str();
  reproduce->add_option("--ledgers", ledger_dir, "bundled ledgers checked for replay determinism")->capture_default_str();
  reproduce->add_flag("--strict", strict, "exit 2 when an acceptance check fails");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*init) {
      if (fs::exists(ledger) && fs::file_size(ledger) > 0) throw UsageError("ledger " + ledger + " already exists");
      Config cfg = base_config(config_path);
      std::vector<LedgerRecord> recs;
      auto add_cfg = [&](const std::string& key, const std::string& value) {
        cfg.set(key, value);
        LedgerRecord rec;
        rec.type = RecordType::kConfig;
        rec.key = key;
        rec.value = value;
        recs.push_back(rec);
      };
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        std::string line;
        while (std::getline(in, line)) {
          if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
          const auto eq = line.find('=');
          if (eq == std::string::npos) continue;
          auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
          };
          add_cfg(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
      }
      for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
        add_cfg(kv.substr(0, eq), kv.substr(eq + 1));
      }
      for (const auto& spec : plan_specs) {
        const auto c1 = spec.find(':');
        const auto c2 = spec.rfind(':');
        if (c1 == std::string::npos || c1 == c2) throw UsageError("--plan expects endpoint:alpha_left:alpha_right");
        LedgerRecord rec;
        rec.type = RecordType::kEndpointPlan;
        rec.endpoint_id = spec.substr(0, c1);
        try {
          rec.alpha_left = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
          rec.alpha_right = std::stod(spec.substr(c2 + 1));
        } catch (const std::exception&) {
          throw UsageError("--plan shares must be numbers: " + spec);
        }
        recs.push_back(rec);
      }
      cfg.validate();
      ingest(recs);
      if (recs.empty()) {
        std::ofstream(ledger, std::ios::app);
      } else {
        append_records(ledger, recs);
      }
      fmt::print("initialized {} with {} config records\n", ledger, recs.size());
    } else if (*add_trial) {
      LedgerRecord rec;
      rec.type = RecordType::kTrialRegistered;
      rec.trial_id = trial_id;
      rec.tick = tick;
      rec.null_hr = null_hr;
      rec.alt_left_hr = alt_left;
      rec.alt_right_hr = alt_right;
      rec.allocation_r = alloc_r;
      checked_append(ledger, {rec}, base_config(config_path));
      fmt::print("registered {} at tick {}\n", trial_id, tick);
    } else if (*include || *exclude) {
      LedgerRecord rec;
      rec.type = *include ? RecordType::kTrialIncluded : RecordType::kTrialExcluded;
      rec.trial_id = trial_id;
      rec.tick = tick;
      checked_append(ledger, {rec}, base_config(config_path));
      fmt::print("{} {} at tick {}\n", *include ? "included" : "excluded", trial_id, tick);
    } else if (*add_event) {
      LedgerRecord rec;
      rec.type = RecordType::kEvent;
      rec.trial_id = trial_id;
      rec.endpoint_id = endpoint;
      rec.tick = tick;
      rec.group = parse_group(group);
      checked_append(ledger, {rec}, base_config(config_path));
      fmt::print("appended 1 event\n");
    } else if (*add_events) {
      const auto recs = events_from_csv(csv_path);
      checked_append(ledger, recs, base_config(config_path));
      fmt::print("appended {} events\n", recs.size());
    } else if (*add_z) {
      LedgerRecord rec;
      rec.type = RecordType::kZSummary;
      rec.trial_id = trial_id;
      rec.endpoint_id = endpoint;
      rec.tick = tick;
      rec.z = {z_value, z_n};
      checked_append(ledger, {rec}, base_config(config_path));
      fmt::print("appended z summary\n");
    } else if (*ingest_cmd) {
      const auto st = ingest(fs::path(ledger), base_config(config_path));
      fmt::print("{}", summarize(st));
    } else if (*report_cmd) {
      const auto fmts = parse_formats(formats);
      const auto st = ingest(fs::path(ledger), base_config(config_path));
      const auto bundle = report(st, fmts);
      write_bundle(bundle, out_dir);
      fmt::print("{}wrote {} files to {}\n", bundle.summary, bundle.files.size(), out_dir);
    } else if (*simulate) {
      SimPlan plan;
      plan.truth = parse_effect(truth_s);
      plan.alt = parse_effect(bet_s);
      plan.null = parse_effect(null_s);
      plan.horizon_n = n;
      plan.replications = reps;
      plan.alpha = alpha;
      plan.allocation_r = r;
      plan.seed = seed;
      plan.keep_trajectories = sim_out.empty() ? 0 : std::min(keep, reps);
      plan.validate();
      if (sim_out.empty()) {
        print_sim(run(plan, threads));
      } else {
        const double g = growth_rate(plan.truth, plan.alt, plan.null, plan.allocation_r);
        const auto art = trajectory_artifact("simulation", plan, g > 1.0 ? g : 0.0,
                                             fmt::format("Betting scores, truth VE {}, bet VE {} vs {}",
                                                         format_num(plan.truth.ve()), format_num(plan.alt.ve()),
                                                         format_num(plan.null.ve())));
        print_sim(run(plan, threads));
        write_files(art.files, sim_out);
        fmt::print("wrote {} files to {}\n", art.files.size(), sim_out);
      }
    } else if (*design) {
      DesignSpec d;
      d.alt_bet = parse_effect(bet_s);
      d.null = parse_effect(null_s);
      if (!design_truth.empty()) d.truth = parse_effect(design_truth);
      d.n_planned = n;
      d.alpha = alpha;
      d.allocation_r = r;
      d.validate();
      const auto& truth = d.assumed_truth();
      const double lg = log_growth_rate(truth, d.alt_bet, d.null, r);
      const double lt = log_implied_target(d);
      fmt::print("truth hr {} (VE {}), bet hr {} (VE {}), null hr {} (VE {})\n", format_num(truth.hr()),
                 format_num(truth.ve()), format_num(d.alt_bet.hr()), format_num(d.alt_bet.ve()),
                 format_num(d.null.hr()), format_num(d.null.ve()));
      fmt::print("growth_rate: {} (log {})\n", fmt::format("{:.7f}", std::exp(lg)), exact(lg));
      fmt::print("implied_target: {} (log {}) at n = {}\n", format_e(lt), exact(lt), n);
      fmt::print("implied_target_rounded: {:.0f}\n", std::exp(lt));
      const auto ee = expected_events_to_threshold(truth, d.alt_bet, d.null, alpha, r);
      if (ee.favorable)
        fmt::print("expected_events_to_threshold: {} (ceil {}) for 1/alpha = {}\n", format_num(ee.events),
                   ee.ceiling, format_num(1.0 / alpha));
      else
        fmt::print("expected_events_to_threshold: inf (growth rate <= 1 at this truth)\n");
      if (current_e)
        fmt::print("remaining_target: {} from running e = {}\n", format_num(remaining_target(*current_e, alpha)),
                   format_num(*current_e));
      if (!design_out.empty()) {
        const auto art = expected_events_curves(d.null, alpha);
        write_files(art.files, design_out);
        fmt::print("wrote {} files to {}\n", art.files.size(), design_out);
      }
    } else if (*confseq) {
      const double dd = delta.value_or(kDefaultDeltaDesign);
      std::vector<ConfSeqState> states;
      std::string title;
      if (!cs_ledger.empty()) {
        Config cfg = base_config(config_path);
        if (delta) cfg.delta_design = *delta;
        cfg.cs_alpha = cs_alpha;
        const auto st = ingest(fs::path(cs_ledger), cfg);
        const auto it = st.meta_cs.find(endpoint);
        if (it == st.meta_cs.end()) throw UsageError("no confidence sequence for endpoint " + endpoint);
        states = it->second.states();
        title = fmt::format("Meta confidence sequence, endpoint {}", endpoint);
      } else {
        const auto events = random_ordering(n_t, n_c, seed);
        states = cs_stream(std::span<const StreamEvent>(events), cs_alpha, dd);
        title = fmt::format("Confidence sequence, random ordering of {} + {} events", n_t, n_c);
      }
      if (states.empty()) throw UsageError("no data for a confidence sequence");
      const auto& last = states.back();
      fmt::print("level: {}% (alpha {}), delta_design {}\n", format_num(100 * (1 - cs_alpha)), format_num(cs_alpha),
                 format_num(last.delta_design));
      fmt::print("events: {}\n", last.n);
      if (last.estimate)
        fmt::print("estimate: hr {} (VE {})\n", format_num(last.estimate->hr()), format_num(last.estimate->ve()));
      fmt::print("interval_hr: [{}, {}] (log [{}, {}])\n", format_num(last.interval.lower),
                 format_num(last.interval.upper), exact(std::log(last.interval.lower)),
                 exact(std::log(last.interval.upper)));
      fmt::print("running_intersection_hr: [{}, {}]\n", format_num(last.intersection.lower),
                 format_num(last.intersection.upper));
      fmt::print("excludes hr 1: {}\n", last.intersection.contains(1.0) ? "no" : "yes");
      if (!cs_out.empty()) {
        write_files({{"confseq.csv", confseq_csv(states)}, {"confseq.svg", confseq_svg(states, title)}}, cs_out);
        fmt::print("wrote 2 files to {}\n", cs_out);
      }
    } else if (*reproduce) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto arts = standard_artifacts({.seed = seed});
      std::size_t files = 0;
      for (const auto& a : arts) {
        write_files(a.files, repro_out);
        files += a.files.size();
        fmt::print("artifact {}: {} ({} files)\n", a.name, a.description, a.files.size());
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      fmt::print("wrote {} artifacts ({} files) to {} in {:.2f} s\n", arts.size(), files, repro_out, secs);
      CriteriaOptions opt;
      opt.seed = seed;
      opt.ledger_dir = ledger_dir;
      opt.artifact_seconds = secs;
      int failed = 0;
      std::string lines;
      for (const auto& c : run_criteria(opt)) {
        lines += format_result(c) + "\n";
        failed += c.pass ? 0 : 1;
      }
      fmt::print("{}{} of 9 acceptance checks failed\n", lines, failed);
      std::ofstream(fs::path(repro_out) / "acceptance.txt") << lines;
      if (strict && failed > 0) return static_cast<int>(ExitCode::kIntegrity);
    }
  } catch (const Error& e) {
    std::fflush(stdout);
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::fflush(stdout);
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  }
  return 0;
}
