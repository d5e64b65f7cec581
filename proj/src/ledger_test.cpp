#include "allin/ledger.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>
#include <vector>

#include "allin/config.hpp"
#include "allin/error.hpp"

using namespace allin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("allin-ledger-test-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

LedgerRecord config(const std::string& k, const std::string& v) {
  LedgerRecord r;
  r.type = RecordType::kConfig;
  r.key = k;
  r.value = v;
  return r;
}

LedgerRecord status(RecordType t, const std::string& id, std::int64_t tick) {
  LedgerRecord r;
  r.type = t;
  r.trial_id = id;
  r.tick = tick;
  return r;
}

LedgerRecord event(const std::string& id, std::int64_t tick, Group g, const std::string& ep = "primary") {
  LedgerRecord r;
  r.type = RecordType::kEvent;
  r.trial_id = id;
  r.endpoint_id = ep;
  r.tick = tick;
  r.group = g;
  return r;
}

// 8 treatment and 162 control events, treatment at every 20th tick.
std::vector<LedgerRecord> pfizer() {
  std::vector<LedgerRecord> v = {config("null_hr", "0.7"), config("alt_left_hr", "0.5"),
                                 status(RecordType::kTrialRegistered, "pfizer", 0),
                                 status(RecordType::kTrialIncluded, "pfizer", 0)};
  for (int k = 1; k <= 170; ++k) v.push_back(event("pfizer", k, k % 20 == 0 && k <= 160 ? Group::kTreatment : Group::kControl));
  return v;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::binary);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST_CASE("record format round trip and checksum") {
  auto r = event("t1", 3, Group::kTreatment, "ep");
  const auto line = format_record(r);
  CHECK(std::regex_search(line, std::regex("\"checksum\":\"[0-9a-f]{16}\"")));
  const auto back = parse_record(line, 1);
  CHECK(back.type == RecordType::kEvent);
  CHECK(back.trial_id == "t1");
  CHECK(back.endpoint_id == "ep");
  CHECK(back.tick == 3);
  CHECK(back.group == Group::kTreatment);
  CHECK(format_record(back) == line);

  LedgerRecord z;
  z.type = RecordType::kZSummary;
  z.trial_id = "t";
  z.endpoint_id = "ep";
  z.tick = 2;
  z.z = {-1.25, 40};
  const auto zb = parse_record(format_record(z), 1);
  CHECK(zb.z.z == -1.25);
  CHECK(zb.z.n == 40);

  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("malformed and tampered lines") {
  const auto line = format_record(event("t1", 3, Group::kControl));
  std::string tampered = line;
  tampered.replace(tampered.find("control"), 7, "treatment");
  try {
    parse_record(tampered, 17);
    FAIL("tampered line accepted");
  } catch (const IntegrityError& e) {
    CHECK(e.line() == 17);
    CHECK(std::string(e.what()).find("line 17") != std::string::npos);
    CHECK(e.exit_code() == ExitCode::kIntegrity);
  }
  CHECK_THROWS_AS(parse_record("{not json", 4), LedgerError);
  CHECK_THROWS_AS(parse_record("{\"record_type\":\"event\"}", 4), LedgerError);
  CHECK_THROWS_AS(parse_record("[1,2]", 4), LedgerError);
}

TEST_CASE("corrupted line 17 in a file") {
  TempDir dir;
  const auto path = dir.path / "l.jsonl";
  append_records(path, pfizer());
  std::vector<std::string> lines;
  {
    std::ifstream in(path);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  REQUIRE(lines.size() > 17);
  lines[16].replace(lines[16].find("\"tick\":"), 7, "\"tick\": ");
  auto& l17 = lines[16];
  const auto pos = l17.find("control");
  if (pos != std::string::npos) l17.replace(pos, 7, "treatment");
  write_lines(path, lines);
  try {
    ingest(path);
    FAIL("corrupted ledger ingested");
  } catch (const IntegrityError& e) {
    CHECK(e.line() == 17);
  }
}

TEST_CASE("registrations only give e-values of one") {
  const std::vector<LedgerRecord> recs = {status(RecordType::kTrialRegistered, "a", 0),
                                          status(RecordType::kTrialRegistered, "b", 1),
                                          status(RecordType::kTrialIncluded, "a", 2)};
  const auto st = ingest(recs);
  for (const auto& [id, t] : st.monitor.trials()) CHECK(t.raw("primary") == SideScores{});
  for (const auto& s : st.monitor.history())
    for (const auto& ep : s.endpoints) CHECK(ep.meta == SideScores{});
  CHECK(st.monitor.state().decision == Decision::kContinue);
}

TEST_CASE("Pfizer as a ledger") {
  const auto st = ingest(pfizer());
  const auto& t = st.monitor.trials().at("pfizer");
  CHECK(t.counts("primary")->first == 8);
  CHECK(t.counts("primary")->second == 162);
  const double e = std::exp(t.raw("primary").left);
  CHECK(e == doctest::Approx(1.18e8).epsilon(0.01));
  CHECK(st.monitor.state().decision == Decision::kRejectNull);
  CHECK(st.meta_cs.contains("primary"));
  CHECK(st.trial_cs.contains({"pfizer", "primary"}));
}

TEST_CASE("replay is idempotent and file-equivalent") {
  TempDir dir;
  const auto path = dir.path / "p.jsonl";
  append_records(path, pfizer());
  const auto a = ingest(path);
  const auto b = ingest(path);
  CHECK(a.state_hash == b.state_hash);
  CHECK(a.state_hash == ingest(pfizer()).state_hash);
  CHECK(a.state_hash == state_hash(a));
  // a different config gives a different state
  Config c;
  c.delta_design = 0.1;
  CHECK(ingest(path, c).state_hash != a.state_hash);
}

TEST_CASE("appending never changes earlier ticks") {
  auto recs = pfizer();
  const auto before = ingest(std::vector<LedgerRecord>(recs.begin(), recs.begin() + 100));
  const auto after = ingest(recs);
  const auto& h0 = before.monitor.history();
  const auto& h1 = after.monitor.history();
  REQUIRE(h1.size() >= h0.size());
  for (std::size_t i = 0; i < h0.size(); ++i) {
    CHECK(h0[i].tick == h1[i].tick);
    REQUIRE(h0[i].endpoints.size() == h1[i].endpoints.size());
    for (std::size_t k = 0; k < h0[i].endpoints.size(); ++k) {
      CHECK(h0[i].endpoints[k].meta == h1[i].endpoints[k].meta);
      CHECK(h0[i].endpoints[k].reject_tick_left == h1[i].endpoints[k].reject_tick_left);
    }
  }
}

TEST_CASE("ordering rules") {
  SUBCASE("out-of-order tick") {
    auto recs = pfizer();
    recs.push_back(event("pfizer", 5, Group::kControl));
    try {
      ingest(recs);
      FAIL("accepted");
    } catch (const LedgerError& e) {
      CHECK(e.exit_code() == ExitCode::kIntegrity);
    }
  }
  SUBCASE("config after data") {
    auto recs = pfizer();
    recs.push_back(config("alpha", "0.01"));
    CHECK_THROWS_AS(ingest(recs), LedgerError);
  }
  SUBCASE("event before registration") {
    const std::vector<LedgerRecord> recs = {event("ghost", 1, Group::kControl)};
    CHECK_THROWS_AS(ingest(recs), LedgerError);
  }
  SUBCASE("bad config keeps its exit code") {
    const std::vector<LedgerRecord> recs = {config("alpha", "2"), status(RecordType::kTrialRegistered, "a", 0)};
    try {
      ingest(recs);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.exit_code() == ExitCode::kConfig);
    }
  }
}

TEST_CASE("concurrent appends keep every line intact") {
  TempDir dir;
  const auto path = dir.path / "c.jsonl";
  append_records(path, {status(RecordType::kTrialRegistered, "a", 0)});
  std::vector<std::thread> writers;
  for (int w = 0; w < 4; ++w)
    writers.emplace_back([&, w] {
      for (int i = 0; i < 50; ++i) append_records(path, {event("a", 1, w % 2 ? Group::kControl : Group::kTreatment)});
    });
  for (auto& t : writers) t.join();
  const auto recs = read_ledger(path);
  CHECK(recs.size() == 201);
  const auto st = ingest(path);
  CHECK(st.monitor.trials().at("a").counts("primary")->first == 100);
}

TEST_CASE("config files and effect parsing") {
  TempDir dir;
  const auto path = dir.path / "allin.conf";
  {
    std::ofstream out(path);
    out << "# settings\nalpha = 0.025\nmu_divisor = 2  # logrank scale\n\nweight_left=0.7\nrng = xoshiro256**\n";
  }
  const auto c = load_config(path);
  CHECK(c.alpha == 0.025);
  CHECK(c.mu_divisor == 2.0);
  CHECK(c.weights().right == doctest::Approx(0.3));
  CHECK(c.confseq_alpha() == 0.025);

  Config d;
  CHECK_THROWS_AS(d.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(d.set("rng", "mt19937"), ConfigError);
  CHECK_THROWS_AS(d.set("alpha", "abc"), ConfigError);
  d.set("alpha", "1.5");
  CHECK_THROWS_AS(d.validate(), ConfigError);

  CHECK(parse_effect("0.5").ve() == 0.5);
  CHECK(parse_effect("50%").ve() == doctest::Approx(0.5));
  CHECK(parse_effect("0.7hr").hr() == 0.7);
  CHECK(parse_effect("0.7hr-equivalent").hr() == 0.7);
  CHECK_THROWS(parse_effect("fast"));
}
