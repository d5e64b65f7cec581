#pragma once

// Append-only line ledger and its replay.
//
// One JSON object per line. Every line carries "checksum": the FNV-1a 64-bit
// hash (16 lowercase hex digits) of the line's canonical JSON without the
// checksum field (keys sorted, no whitespace). Replaying the same bytes under
// the same config always yields the same state and state hash.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "allin/config.hpp"
#include "allin/confseq.hpp"
#include "allin/meta.hpp"

namespace allin {

enum class RecordType : std::uint8_t {
  kConfig,
  kEndpointPlan,
  kTrialRegistered,
  kTrialIncluded,
  kTrialExcluded,
  kEvent,
  kZSummary,
};

std::string to_string(RecordType t);
RecordType parse_record_type(const std::string& s);

struct LedgerRecord {
  RecordType type = RecordType::kEvent;
  std::int64_t tick = 0;
  std::string trial_id;
  std::string endpoint_id;
  Group group = Group::kControl;
  ZSummary z;
  // config: key/value; trial_registered: optional effect overrides;
  // endpoint_plan: alpha_left / alpha_right.
  std::string key;
  std::string value;
  std::optional<double> null_hr;
  std::optional<double> alt_left_hr;
  std::optional<double> alt_right_hr;
  std::optional<double> allocation_r;
  double alpha_left = 0.0;
  double alpha_right = 0.0;
  std::size_t line = 0;  // source line when read from a file; not serialized
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;

// Serialized line without the trailing newline.
std::string format_record(const LedgerRecord& record);
// Throws LedgerError (malformed) or IntegrityError (checksum) naming line_no.
LedgerRecord parse_record(const std::string& line, std::size_t line_no);

std::vector<LedgerRecord> read_ledger(const std::filesystem::path& path);

// Appends under an advisory exclusive lock. Creates the file if needed.
void append_records(const std::filesystem::path& path, const std::vector<LedgerRecord>& records);

struct TrialEndpointKey {
  std::string trial_id;
  std::string endpoint_id;
  auto operator<=>(const TrialEndpointKey&) const = default;
};

struct IngestResult {
  Config config;
  Monitor monitor;
  // Meta ("typical hr") confidence sequence per endpoint over included trials.
  std::map<std::string, ConfSeq> meta_cs;
  // Per-trial confidence sequence per endpoint.
  std::map<TrialEndpointKey, ConfSeq> trial_cs;
  std::size_t records = 0;
  std::uint64_t state_hash = 0;
};

IngestResult ingest(const std::vector<LedgerRecord>& records, const Config& base = {});
IngestResult ingest(const std::filesystem::path& path, const Config& base = {});

// Canonical hash of the full replayed state (every tick snapshot and interval).
std::uint64_t state_hash(const IngestResult& result);

}  // namespace allin
