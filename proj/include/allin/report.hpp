#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "allin/confseq.hpp"
#include "allin/ledger.hpp"
#include "allin/meta.hpp"

namespace allin {

// e-value text with 6 significant digits, from its log; does not overflow.
std::string format_e(double log_e);
std::string format_num(double v);

struct EvidenceRow {
  std::int64_t tick = 0;
  std::map<std::string, SideScores> per_trial;  // log e
  SideScores meta;                              // log e
  double two_sided = 0.0;                       // log e
  SideScores threshold;
  SideScores p_running_min{1.0, 1.0};
  std::int64_t cs_n = 0;
  double cs_estimate_hr = std::numeric_limits<double>::quiet_NaN();
  Interval cs_interval;
  Interval cs_intersection;
  bool rejected = false;
};

// Per-endpoint evidence by tick; rows strictly increasing in tick.
struct EvidenceTable {
  std::string endpoint_id;
  std::vector<std::string> trial_ids;
  std::vector<EvidenceRow> rows;
  std::optional<std::int64_t> rejection_tick;
};

std::vector<EvidenceTable> evidence_tables(const IngestResult& state);

std::string to_csv(const EvidenceTable& table);
// Inverse of to_csv for the exact (log and interval) columns.
EvidenceTable parse_evidence_csv(const std::string& endpoint_id, const std::string& csv);

std::string evidence_svg(const EvidenceTable& table, double two_sided_threshold);
std::string confseq_svg(const std::vector<ConfSeqState>& states, const std::string& title,
                        double display_lo = 0.01, double display_hi = 100.0);
std::string confseq_csv(const std::vector<ConfSeqState>& states);

struct ReportFormats {
  bool csv = true;
  bool svg = true;
};

// "csv", "svg", "csv,svg"; throws UsageError on anything else.
ReportFormats parse_formats(const std::string& list);

struct ReportBundle {
  std::vector<EvidenceTable> tables;
  std::map<std::string, std::string> files;  // file name -> content
  std::string summary;
};

ReportBundle report(const IngestResult& state, const ReportFormats& formats = {});

void write_bundle(const ReportBundle& bundle, const std::filesystem::path& dir);

// Human-readable per-endpoint summary of the final state.
std::string summarize(const IngestResult& state);

}  // namespace allin
