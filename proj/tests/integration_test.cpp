#include <doctest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(ALLIN_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.out += buf.data();
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("allin-it-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string hash_of(const std::string& out) {
  std::smatch m;
  if (std::regex_search(out, m, std::regex("state_hash: ([0-9a-f]{16})"))) return m[1];
  return "";
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> v;
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

const std::string kLedgers = std::string(ALLIN_DATA_DIR) + "/ledgers";

}  // namespace

TEST_CASE("design prints the implied target") {
  const auto r = cli("design --truth 0.6 --bet 0.5 --null 0.7hr-equivalent --n 160");
  CHECK(r.code == 0);
  CHECK(r.out.find("implied_target_rounded: 104") != std::string::npos);
  CHECK(r.out.find("growth_rate: 1.0294536") != std::string::npos);
}

TEST_CASE("ingest is idempotent on shipped ledgers") {
  for (const char* name : {"pfizer", "curevac", "demo"}) {
    const auto path = kLedgers + "/" + name + ".jsonl";
    const auto a = cli("ingest -l " + path);
    const auto b = cli("ingest -l " + path);
    INFO(name << ": " << a.out);
    CHECK(a.code == 0);
    CHECK(!hash_of(a.out).empty());
    CHECK(hash_of(a.out) == hash_of(b.out));
  }
  CHECK(cli("ingest -l " + kLedgers + "/pfizer.jsonl").out.find("1.17972e+08") != std::string::npos);
}

TEST_CASE("exit codes") {
  TempDir dir("codes");
  CHECK(cli("").code == 1);
  CHECK(cli("no-such-command").code == 1);
  CHECK(cli("design --n notanumber").code == 1);
  CHECK(cli("report -l " + kLedgers + "/pfizer.jsonl -o " + (dir / "r") + " -f pdf").code == 1);
  CHECK(cli("design --alpha 2").code == 3);
  CHECK(cli("init -l " + (dir / "bad.jsonl") + " --set no_such_key=1").code == 3);
  CHECK(cli("simulate --reps 0").code == 3);

  // corrupt one byte of a copy of a shipped ledger
  const auto copy = dir / "corrupt.jsonl";
  auto lines = lines_of(kLedgers + "/pfizer.jsonl");
  REQUIRE(lines.size() > 20);
  auto& l = lines[19];
  const auto pos = l.find("control");
  REQUIRE(pos != std::string::npos);
  l.replace(pos, 7, "treatment");
  {
    std::ofstream out(copy);
    for (const auto& s : lines) out << s << "\n";
  }
  const auto r = cli("ingest -l " + copy);
  CHECK(r.code == 2);
  CHECK(r.out.find("line 20") != std::string::npos);
}

TEST_CASE("building a ledger from the command line") {
  TempDir dir("build");
  const auto ledger = dir / "l.jsonl";
  const auto L = " -l " + ledger;
  REQUIRE(cli("init" + L + " --set alpha=0.05 --set null_hr=0.7 --set alt_left_hr=0.5").code == 0);
  CHECK(cli("init" + L).code != 0);  // never overwritten
  REQUIRE(cli("add-trial" + L + " -t a --tick 0").code == 0);
  REQUIRE(cli("include" + L + " -t a --tick 0").code == 0);
  for (int k = 1; k <= 60; ++k)
    REQUIRE(cli("add-event" + L + " -t a --tick " + std::to_string(k) + " -g " + (k % 12 == 0 ? "treatment" : "control"))
                .code == 0);
  const auto before = lines_of(ledger);
  // rejected appends leave the file untouched
  CHECK(cli("add-event" + L + " -t a --tick 3 -g control").code == 2);
  CHECK(cli("add-event" + L + " -t ghost --tick 70 -g control").code == 2);
  CHECK(cli("add-event" + L + " -t a --tick 70 -g neither").code == 1);
  CHECK(lines_of(ledger) == before);

  const auto ing = cli("ingest" + L);
  CHECK(ing.code == 0);
  CHECK(ing.out.find("counts 5/55") != std::string::npos);
  CHECK(ing.out.find("benefit-side null rejected at tick") != std::string::npos);

  const auto rep = cli("report" + L + " -o " + (dir / "report"));
  CHECK(rep.code == 0);
  CHECK(fs::exists(dir.path / "report" / "evidence_primary.csv"));
  CHECK(fs::exists(dir.path / "report" / "evidence_primary.svg"));
  CHECK(fs::exists(dir.path / "report" / "summary.txt"));
}

TEST_CASE("simulate and confseq") {
  TempDir dir("sim");
  const auto a = cli("simulate --reps 500 --threads 1 --seed 5");
  const auto b = cli("simulate --reps 500 --threads 4 --seed 5");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(cli("simulate --reps 200 --trajectories 10 -o " + (dir / "s")).code == 0);
  CHECK(fs::exists(dir.path / "s" / "simulation.svg"));
  const auto cs = cli("confseq --treatment 83 --control 145 -o " + (dir / "cs"));
  CHECK(cs.code == 0);
  CHECK(cs.out.find("level: 90%") != std::string::npos);
  CHECK(cli("confseq -l " + kLedgers + "/curevac.jsonl").code == 0);
}

TEST_CASE("reproduce-paper writes every artifact") {
  TempDir dir("repro");
  const auto r = cli("reproduce-paper -o " + (dir / "art"));
  CHECK(r.code == 0);
  for (const char* f : {"fig1_null_trajectories.svg", "fig2_expected_events.csv", "fig2_expected_events.svg",
                        "fig3_confidence_sequence.svg", "fig4_alternative_final_scores.svg",
                        "fig5_alternative_trajectories.svg", "worked_examples.csv", "acceptance.txt"}) {
    INFO(f);
    CHECK(fs::exists(dir.path / "art" / f));
  }
  // same seed, same bytes
  const auto again = cli("reproduce-paper -o " + (dir / "art2"));
  CHECK(again.code == 0);
  for (const auto& e : fs::directory_iterator(dir.path / "art")) {
    if (e.path().filename() == "acceptance.txt") continue;
    std::ifstream x(e.path()), y(dir.path / "art2" / e.path().filename());
    std::stringstream sx, sy;
    sx << x.rdbuf();
    sy << y.rdbuf();
    INFO(e.path().filename());
    CHECK(sx.str() == sy.str());
  }
}
