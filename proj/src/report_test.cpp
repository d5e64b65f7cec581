#include "allin/report.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <fmt/format.h>
#include <unistd.h>

#include "allin/error.hpp"

using namespace allin;

namespace {

LedgerRecord status(RecordType t, const std::string& id, std::int64_t tick) {
  LedgerRecord r;
  r.type = t;
  r.trial_id = id;
  r.tick = tick;
  return r;
}

LedgerRecord event(const std::string& id, std::int64_t tick, Group g) {
  LedgerRecord r;
  r.type = RecordType::kEvent;
  r.trial_id = id;
  r.endpoint_id = "primary";
  r.tick = tick;
  r.group = g;
  return r;
}

// Two trials; the first is strongly favorable, the second pending until tick 40.
std::vector<LedgerRecord> two_trials() {
  std::vector<LedgerRecord> v = {status(RecordType::kTrialRegistered, "a", 0),
                                 status(RecordType::kTrialIncluded, "a", 0),
                                 status(RecordType::kTrialRegistered, "b", 0)};
  for (int k = 1; k <= 80; ++k) {
    if (k == 40) v.push_back(status(RecordType::kTrialIncluded, "b", 40));
    v.push_back(event("a", k, k % 10 == 0 ? Group::kTreatment : Group::kControl));
    v.push_back(event("b", k, k % 3 == 0 ? Group::kTreatment : Group::kControl));
  }
  return v;
}

}  // namespace

TEST_CASE("format_e") {
  CHECK(format_e(0.0) == "1");
  CHECK(format_e(std::log(1.17972e8)) == "1.17972e+08");
  CHECK(format_e(-INFINITY) == "0");
  CHECK(format_e(NAN) == "nan");
  // beyond double range: mantissa and exponent from the log
  CHECK(format_e(1000 * std::log(10.0)) == "1.00000e+1000");
  CHECK(format_e(2000.0) == "3.88118e+868");
  CHECK(format_e(-2000.0) == "2.57654e-869");
  CHECK(format_num(0.123456789) == "0.123457");
}

TEST_CASE("evidence tables") {
  const auto st = ingest(two_trials());
  const auto tables = evidence_tables(st);
  REQUIRE(tables.size() == 1);
  const auto& t = tables[0];
  CHECK(t.endpoint_id == "primary");
  CHECK(t.trial_ids == std::vector<std::string>{"a", "b"});
  REQUIRE(!t.rows.empty());
  for (std::size_t i = 1; i < t.rows.size(); ++i) CHECK(t.rows[i].tick > t.rows[i - 1].tick);
  // pending trial contributes nothing before inclusion
  for (const auto& r : t.rows)
    if (r.tick < 40) CHECK(r.meta.left == doctest::Approx(r.per_trial.at("a").left));
  REQUIRE(t.rejection_tick.has_value());
  bool seen = false;
  for (const auto& r : t.rows) {
    if (r.tick >= *t.rejection_tick) CHECK(r.rejected);  // latched
    seen = seen || r.rejected;
  }
  CHECK(seen);
  CHECK(summarize(st).find(fmt::format("rejected at tick {}", *t.rejection_tick)) != std::string::npos);
}

TEST_CASE("CSV round trip") {
  const auto st = ingest(two_trials());
  for (const auto& t : evidence_tables(st)) {
    const auto back = parse_evidence_csv(t.endpoint_id, to_csv(t));
    CHECK(back.trial_ids == t.trial_ids);
    CHECK(back.rejection_tick == t.rejection_tick);
    REQUIRE(back.rows.size() == t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& a = t.rows[i];
      const auto& b = back.rows[i];
      CHECK(a.tick == b.tick);
      CHECK(a.meta == b.meta);
      CHECK(a.two_sided == b.two_sided);
      CHECK(a.per_trial == b.per_trial);
      CHECK(a.threshold == b.threshold);
      CHECK(a.cs_n == b.cs_n);
      CHECK(a.cs_interval == b.cs_interval);
      CHECK(a.cs_intersection == b.cs_intersection);
      CHECK(a.rejected == b.rejected);
    }
    CHECK(to_csv(back) == to_csv(t));
  }
  CHECK_THROWS_AS(parse_evidence_csv("x", ""), UsageError);
  CHECK_THROWS_AS(parse_evidence_csv("x", "tick\n1\n"), UsageError);
}

TEST_CASE("formats") {
  CHECK(parse_formats("csv").csv);
  CHECK_FALSE(parse_formats("csv").svg);
  CHECK(parse_formats("svg").svg);
  const auto both = parse_formats("csv,svg");
  CHECK((both.csv && both.svg));
  CHECK_THROWS_AS(parse_formats("pdf"), UsageError);
  CHECK_THROWS_AS(parse_formats(""), UsageError);
}

TEST_CASE("report bundle is deterministic and complete") {
  const auto st = ingest(two_trials());
  const auto a = report(st);
  const auto b = report(ingest(two_trials()));
  CHECK(a.files == b.files);
  CHECK(a.files.contains("evidence_primary.csv"));
  CHECK(a.files.contains("evidence_primary.svg"));
  CHECK(a.files.contains("confseq_primary.csv"));
  CHECK(a.files.contains("confseq_primary.svg"));
  CHECK(a.files.contains("summary.txt"));
  for (const auto& [name, content] : a.files)
    if (name.ends_with(".svg")) {
      CHECK(content.find("<svg") != std::string::npos);
      CHECK(content.find("</svg>") != std::string::npos);
    }
  const auto csv_only = report(st, parse_formats("csv"));
  for (const auto& [name, _] : csv_only.files) CHECK_FALSE(name.ends_with(".svg"));

  const auto dir = std::filesystem::temp_directory_path() / ("allin-report-test-" + std::to_string(::getpid()));
  write_bundle(a, dir);
  for (const auto& [name, content] : a.files) {
    std::ifstream in(dir / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == content);
  }
  std::filesystem::remove_all(dir);
}
