#include "allin/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "allin/error.hpp"
#include "allin/svg.hpp"

namespace allin {

namespace {

std::string exact(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw UsageError("bad number '" + s + "' in evidence table");
  return v;
}

}  // namespace

std::string format_e(double log_e) {
  if (std::isnan(log_e)) return "nan";
  if (log_e == -std::numeric_limits<double>::infinity()) return "0";
  if (std::abs(log_e) < 700.0) return fmt::format("{:.6g}", std::exp(log_e));
  const double l10 = log_e / std::log(10.0);
  double ex = std::floor(l10);
  double mant = std::pow(10.0, l10 - ex);
  if (fmt::format("{:.5f}", mant) == "10.00000") mant = 1.0, ex += 1.0;
  return fmt::format("{:.5f}e{:+.0f}", mant, ex);
}

std::string format_num(double v) { return fmt::format("{:.6g}", v); }

std::vector<EvidenceTable> evidence_tables(const IngestResult& st) {
  std::vector<EvidenceTable> out;
  const auto& m = st.monitor;
  for (const auto& ep : m.state().endpoints) {
    EvidenceTable t;
    t.endpoint_id = ep.endpoint_id;
    for (const auto& [id, _] : m.trials()) t.trial_ids.push_back(id);
    const auto cs_it = st.meta_cs.find(ep.endpoint_id);
    const std::vector<ConfSeqState>* cs = cs_it == st.meta_cs.end() ? nullptr : &cs_it->second.states();
    std::size_t ci = 0;
    for (const auto& snap : m.history()) {
      const EndpointMeta* e = snap.endpoint(ep.endpoint_id);
      if (!e) continue;
      EvidenceRow r;
      r.tick = snap.tick;
      r.per_trial = e->per_trial;
      for (const auto& id : t.trial_ids) r.per_trial.try_emplace(id, SideScores{});
      r.meta = e->meta;
      r.two_sided = e->two_sided;
      r.threshold = e->threshold;
      r.p_running_min = e->p_running_min;
      r.rejected = e->rejected();
      if (cs) {
        while (ci + 1 < cs->size() && (*cs)[ci + 1].tick <= snap.tick) ++ci;
        if (!cs->empty() && (*cs)[ci].tick <= snap.tick) {
          const auto& c = (*cs)[ci];
          r.cs_n = c.n;
          r.cs_estimate_hr = c.estimate ? c.estimate->hr() : std::numeric_limits<double>::quiet_NaN();
          r.cs_interval = c.interval;
          r.cs_intersection = c.intersection;
        }
      }
      t.rows.push_back(std::move(r));
    }
    if (ep.reject_tick_left || ep.reject_tick_right) {
      const std::int64_t a = ep.reject_tick_left.value_or(std::numeric_limits<std::int64_t>::max());
      const std::int64_t b = ep.reject_tick_right.value_or(std::numeric_limits<std::int64_t>::max());
      t.rejection_tick = std::min(a, b);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string to_csv(const EvidenceTable& t) {
  std::string s = "tick";
  for (const auto& id : t.trial_ids) s += ",e_left:" + id + ",e_right:" + id;
  for (const auto& id : t.trial_ids) s += ",log_e_left:" + id + ",log_e_right:" + id;
  s += ",meta_left,meta_right,two_sided,log_meta_left,log_meta_right,log_two_sided"
       ",threshold_left,threshold_right,p_left,p_right"
       ",cs_n,cs_estimate_hr,cs_lower,cs_upper,cs_inter_lower,cs_inter_upper,decision\n";
  for (const auto& r : t.rows) {
    s += std::to_string(r.tick);
    for (const auto& id : t.trial_ids) {
      const auto& sc = r.per_trial.at(id);
      s += "," + format_e(sc.left) + "," + format_e(sc.right);
    }
    for (const auto& id : t.trial_ids) {
      const auto& sc = r.per_trial.at(id);
      s += "," + exact(sc.left) + "," + exact(sc.right);
    }
    s += fmt::format(",{},{},{},{},{},{}", format_e(r.meta.left), format_e(r.meta.right), format_e(r.two_sided),
                     exact(r.meta.left), exact(r.meta.right), exact(r.two_sided));
    s += fmt::format(",{},{},{},{}", exact(r.threshold.left), exact(r.threshold.right),
                     format_num(r.p_running_min.left), format_num(r.p_running_min.right));
    s += fmt::format(",{},{},{},{},{},{},{}\n", r.cs_n, exact(r.cs_estimate_hr), exact(r.cs_interval.lower),
                     exact(r.cs_interval.upper), exact(r.cs_intersection.lower), exact(r.cs_intersection.upper),
                     r.rejected ? "reject_null" : "continue");
  }
  return s;
}

EvidenceTable parse_evidence_csv(const std::string& endpoint_id, const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw UsageError("empty evidence table");
  const auto header = split(line, ',');
  EvidenceTable t;
  t.endpoint_id = endpoint_id;
  for (const auto& h : header)
    if (h.starts_with("log_e_left:")) t.trial_ids.push_back(h.substr(11));
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto at = [&](const std::vector<std::string>& f, const std::string& name) -> const std::string& {
    const auto it = col.find(name);
    if (it == col.end() || it->second >= f.size()) throw UsageError("evidence table lacks column " + name);
    return f[it->second];
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    EvidenceRow r;
    r.tick = std::stoll(at(f, "tick"));
    for (const auto& id : t.trial_ids)
      r.per_trial[id] = {parse_double(at(f, "log_e_left:" + id)), parse_double(at(f, "log_e_right:" + id))};
    r.meta = {parse_double(at(f, "log_meta_left")), parse_double(at(f, "log_meta_right"))};
    r.two_sided = parse_double(at(f, "log_two_sided"));
    r.threshold = {parse_double(at(f, "threshold_left")), parse_double(at(f, "threshold_right"))};
    r.p_running_min = {parse_double(at(f, "p_left")), parse_double(at(f, "p_right"))};
    r.cs_n = std::stoll(at(f, "cs_n"));
    r.cs_estimate_hr = parse_double(at(f, "cs_estimate_hr"));
    r.cs_interval = {parse_double(at(f, "cs_lower")), parse_double(at(f, "cs_upper"))};
    r.cs_intersection = {parse_double(at(f, "cs_inter_lower")), parse_double(at(f, "cs_inter_upper"))};
    r.rejected = at(f, "decision") == "reject_null";
    t.rows.push_back(std::move(r));
  }
  for (const auto& r : t.rows)
    if (r.rejected) {
      t.rejection_tick = r.tick;
      break;
    }
  return t;
}

std::string evidence_svg(const EvidenceTable& t, double two_sided_threshold) {
  svg::Chart c;
  c.title = "e-values by tick, endpoint " + t.endpoint_id;
  c.x_label = "tick";
  c.y_label = "e-value (log scale)";
  c.log_y = true;
  std::size_t k = 0;
  auto clamp_e = [](double log_e) { return std::exp(std::clamp(log_e, -300.0, 300.0)); };
  for (const auto& id : t.trial_ids) {
    svg::Series s;
    s.name = id;
    s.color = svg::palette(k++ + 1);
    s.width = 1.0;
    for (const auto& r : t.rows) s.points.emplace_back(static_cast<double>(r.tick), clamp_e(r.per_trial.at(id).left));
    c.series.push_back(std::move(s));
  }
  svg::Series meta;
  meta.name = "meta (benefit side)";
  meta.color = svg::palette(0);
  meta.width = 2.5;
  svg::Series mix;
  mix.name = "two-sided mixture";
  mix.color = "#000000";
  mix.dashed = true;
  for (const auto& r : t.rows) {
    meta.points.emplace_back(static_cast<double>(r.tick), clamp_e(r.meta.left));
    mix.points.emplace_back(static_cast<double>(r.tick), clamp_e(r.two_sided));
  }
  c.series.push_back(std::move(meta));
  c.series.push_back(std::move(mix));
  if (!t.rows.empty()) {
    const auto& last = t.rows.back();
    c.hlines.push_back({last.threshold.left, "1/alpha side = " + format_num(last.threshold.left), "#d62728", true});
  }
  c.hlines.push_back({two_sided_threshold, "two-sided " + format_num(two_sided_threshold), "#7f7f7f", true});
  c.hlines.push_back({1.0, "1", "#bbbbbb", false});
  return svg::render(c);
}

std::string confseq_csv(const std::vector<ConfSeqState>& states) {
  std::string s = "tick,n,estimate_hr,lower,upper,inter_lower,inter_upper\n";
  for (const auto& c : states)
    s += fmt::format("{},{},{},{},{},{},{}\n", c.tick, c.n,
                     exact(c.estimate ? c.estimate->hr() : std::numeric_limits<double>::quiet_NaN()),
                     exact(c.interval.lower), exact(c.interval.upper), exact(c.intersection.lower),
                     exact(c.intersection.upper));
  return s;
}

std::string confseq_svg(const std::vector<ConfSeqState>& states, const std::string& title, double lo,
                        double hi) {
  svg::Chart c;
  c.title = title;
  c.x_label = "events";
  c.y_label = "hazard ratio (log scale)";
  c.log_y = true;
  c.y_range = std::pair{lo, hi};
  auto clip = [&](double v) { return std::clamp(v, lo, hi); };
  svg::Series est{"Peto estimate", {}, "#000000", 1.0};
  svg::Series il{"interval", {}, "#9ecae1", 1.0};
  svg::Series iu{"", {}, "#9ecae1", 1.0};
  iu.in_legend = false;
  svg::Series xl{"running intersection", {}, "#d62728", 2.0};
  svg::Series xu{"", {}, "#d62728", 2.0};
  xu.in_legend = false;
  for (const auto& s : states) {
    const double x = static_cast<double>(s.n);
    if (s.estimate) est.points.emplace_back(x, clip(s.estimate->hr()));
    il.points.emplace_back(x, clip(s.interval.lower));
    iu.points.emplace_back(x, clip(s.interval.upper));
    xl.points.emplace_back(x, clip(s.intersection.lower));
    xu.points.emplace_back(x, clip(s.intersection.upper));
  }
  c.series = {il, iu, xl, xu, est};
  c.hlines.push_back({1.0, "hr 1", "#444444", true});
  return svg::render(c);
}

ReportFormats parse_formats(const std::string& list) {
  ReportFormats f{false, false};
  std::string cur;
  for (const auto& item : split(list, ',')) {
    if (item == "csv") f.csv = true;
    else if (item == "svg") f.svg = true;
    else throw UsageError("unknown report format '" + item + "' (expected csv, svg)");
  }
  return f;
}

ReportBundle report(const IngestResult& st, const ReportFormats& formats) {
  ReportBundle b;
  b.tables = evidence_tables(st);
  if (b.tables.empty() && st.monitor.trials().empty()) throw UsageError("nothing to report: ledger has no trials");
  for (const auto& t : b.tables) {
    if (formats.csv) b.files["evidence_" + t.endpoint_id + ".csv"] = to_csv(t);
    if (formats.svg) b.files["evidence_" + t.endpoint_id + ".svg"] = evidence_svg(t, 1.0 / st.config.alpha);
  }
  for (const auto& [ep, cs] : st.meta_cs) {
    if (formats.csv) b.files["confseq_" + ep + ".csv"] = confseq_csv(cs.states());
    if (formats.svg)
      b.files["confseq_" + ep + ".svg"] = confseq_svg(
          cs.states(), fmt::format("{:.0f}% confidence sequence, endpoint {}", 100 * (1 - cs.alpha()), ep));
  }
  b.summary = summarize(st);
  b.files["summary.txt"] = b.summary;
  return b;
}

void write_bundle(const ReportBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : bundle.files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw UsageError("cannot write " + (dir / name).string());
    out << content;
  }
}

std::string summarize(const IngestResult& st) {
  const auto& m = st.monitor;
  std::string s = fmt::format("records: {}\nstate_hash: {:016x}\n", st.records, st.state_hash);
  s += fmt::format("alpha: {}\n", format_num(st.config.alpha));
  for (const auto& [id, t] : m.trials()) {
    s += fmt::format("trial {}: {}", id, to_string(t.status()));
    for (const auto& ep : t.endpoints()) {
      const auto sc = t.raw(ep);
      s += fmt::format(" | {} e_left={} (log {}) e_right={} (log {})", ep, format_e(sc.left), exact(sc.left),
                       format_e(sc.right), exact(sc.right));
      if (const auto c = t.counts(ep)) s += fmt::format(" counts {}/{}", c->first, c->second);
    }
    s += "\n";
  }
  for (const auto& ep : m.state().endpoints) {
    s += fmt::format("endpoint {}: meta_left={} (log {}) meta_right={} (log {}) two_sided={} thresholds {}/{}\n",
                     ep.endpoint_id, format_e(ep.meta.left), exact(ep.meta.left), format_e(ep.meta.right),
                     exact(ep.meta.right), format_e(ep.two_sided), format_num(ep.threshold.left),
                     format_num(ep.threshold.right));
    s += fmt::format("  anytime p (running min): left {} right {}\n", format_num(ep.p_running_min.left),
                     format_num(ep.p_running_min.right));
    if (ep.reject_tick_left) s += fmt::format("  benefit-side null rejected at tick {}\n", *ep.reject_tick_left);
    if (ep.reject_tick_right) s += fmt::format("  harm-side null rejected at tick {}\n", *ep.reject_tick_right);
    const auto cs = st.meta_cs.find(ep.endpoint_id);
    if (cs != st.meta_cs.end() && !cs->second.states().empty()) {
      const auto& c = cs->second.states().back();
      s += fmt::format("  confidence sequence ({}%): hr {} [{}, {}], running intersection [{}, {}]\n",
                       format_num(100 * (1 - c.alpha)), format_num(c.estimate ? c.estimate->hr() : NAN),
                       format_num(c.interval.lower), format_num(c.interval.upper), format_num(c.intersection.lower),
                       format_num(c.intersection.upper));
    }
  }
  s += fmt::format("decision: {}", m.state().decision == Decision::kRejectNull ? "reject_null" : "continue");
  if (m.state().decision_tick) s += fmt::format(" (tick {})", *m.state().decision_tick);
  s += "\n";
  if (m.state().co_primary) {
    const auto& cp = *m.state().co_primary;
    s += fmt::format("co-primary ({}): {}\n", to_string(cp.mode), cp.note);
    for (const auto& d : cp.components)
      s += fmt::format("  {} {}: e={} threshold={}{}\n", d.endpoint_id, to_string(d.side), format_e(d.log_e),
                       format_num(d.threshold), d.rejected ? " REJECTED" : "");
    if (cp.mode == CombinationMode::kAveraged)
      s += fmt::format("  averaged e={} threshold={} global null {}\n", format_num(cp.averaged_e),
                       format_num(cp.averaged_threshold), cp.global_rejected ? "rejected" : "not rejected");
  }
  return s;
}

}  // namespace allin
