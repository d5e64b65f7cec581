#include "allin/ledger.hpp"

#include <fcntl.h>
#include <fmt/format.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <json.hpp>

#include "allin/error.hpp"

namespace allin {

using nlohmann::json;

namespace {

constexpr std::pair<RecordType, const char*> kTypeNames[] = {
    {RecordType::kConfig, "config"},
    {RecordType::kEndpointPlan, "endpoint_plan"},
    {RecordType::kTrialRegistered, "trial_registered"},
    {RecordType::kTrialIncluded, "trial_included"},
    {RecordType::kTrialExcluded, "trial_excluded"},
    {RecordType::kEvent, "event"},
    {RecordType::kZSummary, "zsummary"},
};

json to_json(const LedgerRecord& r) {
  json j;
  j["record_type"] = to_string(r.type);
  j["tick"] = r.tick;
  switch (r.type) {
    case RecordType::kConfig:
      j["key"] = r.key;
      j["value"] = r.value;
      break;
    case RecordType::kEndpointPlan:
      j["endpoint_id"] = r.endpoint_id;
      j["alpha_left"] = r.alpha_left;
      j["alpha_right"] = r.alpha_right;
      break;
    case RecordType::kTrialRegistered:
      j["trial_id"] = r.trial_id;
      if (r.null_hr) j["null_hr"] = *r.null_hr;
      if (r.alt_left_hr) j["alt_left_hr"] = *r.alt_left_hr;
      if (r.alt_right_hr) j["alt_right_hr"] = *r.alt_right_hr;
      if (r.allocation_r) j["allocation_r"] = *r.allocation_r;
      break;
    case RecordType::kTrialIncluded:
    case RecordType::kTrialExcluded:
      j["trial_id"] = r.trial_id;
      break;
    case RecordType::kEvent:
      j["trial_id"] = r.trial_id;
      j["endpoint_id"] = r.endpoint_id;
      j["group"] = to_string(r.group);
      break;
    case RecordType::kZSummary:
      j["trial_id"] = r.trial_id;
      j["endpoint_id"] = r.endpoint_id;
      j["z"] = r.z.z;
      j["n"] = r.z.n;
      break;
  }
  return j;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

template <typename T>
T field(const json& j, const char* name, std::size_t line) {
  const auto it = j.find(name);
  if (it == j.end()) throw LedgerError(std::string("missing field '") + name + "'", line);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw LedgerError(std::string("field '") + name + "' has the wrong type", line);
  }
}

std::optional<double> opt_double(const json& j, const char* name, std::size_t line) {
  if (!j.contains(name)) return std::nullopt;
  return field<double>(j, name, line);
}

}  // namespace

std::string to_string(RecordType t) {
  for (const auto& [k, v] : kTypeNames)
    if (k == t) return v;
  return "?";
}

RecordType parse_record_type(const std::string& s) {
  for (const auto& [k, v] : kTypeNames)
    if (s == v) return k;
  throw LedgerError("unknown record_type '" + s + "'");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_record(const LedgerRecord& record) {
  json j = to_json(record);
  const std::string body = j.dump();
  j["checksum"] = hex64(fnv1a64(body));
  return j.dump();
}

LedgerRecord parse_record(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw LedgerError(std::string("malformed record: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw LedgerError("record is not an object", line_no);
  const auto sum = j.find("checksum");
  if (sum == j.end() || !sum->is_string()) throw IntegrityError("missing checksum", line_no);
  const std::string expected = sum->get<std::string>();
  j.erase("checksum");
  if (hex64(fnv1a64(j.dump())) != expected) throw IntegrityError("checksum mismatch", line_no);

  LedgerRecord r;
  try {
    r.type = parse_record_type(field<std::string>(j, "record_type", line_no));
  } catch (const LedgerError& e) {
    if (e.line()) throw;
    throw LedgerError(e.what(), line_no);
  }
  r.tick = field<std::int64_t>(j, "tick", line_no);
  if (r.tick < 0) throw LedgerError("negative tick", line_no);
  switch (r.type) {
    case RecordType::kConfig:
      r.key = field<std::string>(j, "key", line_no);
      r.value = field<std::string>(j, "value", line_no);
      break;
    case RecordType::kEndpointPlan:
      r.endpoint_id = field<std::string>(j, "endpoint_id", line_no);
      r.alpha_left = field<double>(j, "alpha_left", line_no);
      r.alpha_right = field<double>(j, "alpha_right", line_no);
      break;
    case RecordType::kTrialRegistered:
      r.trial_id = field<std::string>(j, "trial_id", line_no);
      r.null_hr = opt_double(j, "null_hr", line_no);
      r.alt_left_hr = opt_double(j, "alt_left_hr", line_no);
      r.alt_right_hr = opt_double(j, "alt_right_hr", line_no);
      r.allocation_r = opt_double(j, "allocation_r", line_no);
      break;
    case RecordType::kTrialIncluded:
    case RecordType::kTrialExcluded:
      r.trial_id = field<std::string>(j, "trial_id", line_no);
      break;
    case RecordType::kEvent: {
      r.trial_id = field<std::string>(j, "trial_id", line_no);
      r.endpoint_id = field<std::string>(j, "endpoint_id", line_no);
      const auto g = field<std::string>(j, "group", line_no);
      try {
        r.group = parse_group(g);
      } catch (const Error&) {
        throw LedgerError("unknown group '" + g + "'", line_no);
      }
      break;
    }
    case RecordType::kZSummary:
      r.trial_id = field<std::string>(j, "trial_id", line_no);
      r.endpoint_id = field<std::string>(j, "endpoint_id", line_no);
      r.z = ZSummary{field<double>(j, "z", line_no), field<std::int64_t>(j, "n", line_no)};
      try {
        r.z.validate();
      } catch (const Error& e) {
        throw LedgerError(e.what(), line_no);
      }
      break;
  }
  r.line = line_no;
  return r;
}

std::vector<LedgerRecord> read_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LedgerError("cannot open ledger " + path.string());
  std::vector<LedgerRecord> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_record(line, no));
  }
  return out;
}

void append_records(const std::filesystem::path& path, const std::vector<LedgerRecord>& records) {
  std::string text;
  for (const auto& r : records) text += format_record(r) + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw LedgerError("cannot open ledger " + path.string() + " for append");
  if (::flock(fd, LOCK_EX) != 0) {
    ::close(fd);
    throw LedgerError("cannot lock ledger " + path.string());
  }
  std::size_t done = 0;
  while (done < text.size()) {
    const auto n = ::write(fd, text.data() + done, text.size() - done);
    if (n <= 0) {
      ::flock(fd, LOCK_UN);
      ::close(fd);
      throw LedgerError("write to ledger " + path.string() + " failed");
    }
    done += static_cast<std::size_t>(n);
  }
  ::flock(fd, LOCK_UN);
  ::close(fd);
}

// ---- replay ---------------------------------------------------------------

namespace {

bool same(const std::optional<ZSummary>& a, const ZSummary& b) {
  return a && a->n == b.n && a->z == b.z;
}

class Replayer {
 public:
  explicit Replayer(const Config& base) { result_.config = base; }

  void apply(const LedgerRecord& r) {
    try {
      dispatch(r);
    } catch (const LedgerError& e) {
      if (e.line() || !r.line) throw;
      throw LedgerError(e.what(), r.line);
    } catch (const ConfigError& e) {
      throw ConfigError(r.line ? "line " + std::to_string(r.line) + ": " + e.what() : e.what());
    } catch (const Error& e) {
      throw LedgerError(e.what(), r.line);
    }
  }

  IngestResult finish() {
    start();
    close_tick();
    result_.state_hash = state_hash(result_);
    return std::move(result_);
  }

  std::size_t count = 0;

 private:
  void dispatch(const LedgerRecord& r) {
    ++count;
    if (r.type == RecordType::kConfig || r.type == RecordType::kEndpointPlan) {
      if (started_) throw LedgerError(to_string(r.type) + " record after analysis records");
      if (r.type == RecordType::kConfig)
        result_.config.set(r.key, r.value);
      else
        plans_.push_back({r.endpoint_id, r.alpha_left, r.alpha_right});
      return;
    }
    start();
    if (r.tick < tick_) throw LedgerError("tick " + std::to_string(r.tick) + " precedes tick " + std::to_string(tick_));
    if (r.tick > tick_) close_tick();
    tick_ = r.tick;
    auto& m = result_.monitor;
    switch (r.type) {
      case RecordType::kTrialRegistered: {
        const auto& c = result_.config;
        TrialSpec spec;
        spec.trial_id = r.trial_id;
        const double null_hr = r.null_hr.value_or(c.null_hr);
        const double left = r.alt_left_hr.value_or(c.alt_left_hr);
        spec.null = EffectScale::from_hr(null_hr);
        spec.alt_left = EffectScale::from_hr(left);
        spec.alt_right = EffectScale::from_hr(
            r.alt_right_hr.value_or(c.alt_right_hr.value_or(null_hr * null_hr / left)));
        spec.allocation_r = r.allocation_r.value_or(c.allocation_r);
        spec.mu_divisor = c.mu_divisor;
        m.register_trial(spec, r.tick);
        break;
      }
      case RecordType::kTrialIncluded: m.include(r.trial_id, r.tick); break;
      case RecordType::kTrialExcluded: m.exclude(r.trial_id, r.tick); break;
      case RecordType::kEvent: m.add_event({r.trial_id, r.endpoint_id, r.tick, r.group}); break;
      case RecordType::kZSummary: m.add_z(r.trial_id, r.endpoint_id, r.z, r.tick); break;
      default: break;
    }
  }

  void start() {
    if (started_) return;
    started_ = true;
    auto& c = result_.config;
    c.validate();
    MonitorConfig mc;
    mc.alpha = c.alpha;
    mc.weights = c.weights();
    mc.plans = plans_;
    mc.mode = c.mode;
    result_.monitor = Monitor(mc);
  }

  void close_tick() {
    auto& m = result_.monitor;
    m.finish();
    if (tick_ < 0) return;
    const auto& c = result_.config;
    for (const auto& ep : m.state().endpoints) {
      std::vector<ZSummary> zs;
      for (const auto& [id, t] : m.trials()) {
        const auto z = t.z_summary(ep.endpoint_id);
        if (!z) continue;
        TrialEndpointKey key{id, ep.endpoint_id};
        auto it = result_.trial_cs.try_emplace(key, c.confseq_alpha(), c.delta_design).first;
        if (!same(last_trial_[key], *z)) {
          it->second.push(tick_, *z);
          last_trial_[key] = *z;
        }
        if (t.status() == TrialStatus::kIncluded) zs.push_back(*z);
      }
      if (zs.empty()) continue;
      const ZSummary meta = stratified_z(zs);
      auto it = result_.meta_cs.try_emplace(ep.endpoint_id, c.confseq_alpha(), c.delta_design).first;
      if (!same(last_meta_[ep.endpoint_id], meta)) {
        it->second.push(tick_, meta);
        last_meta_[ep.endpoint_id] = meta;
      }
    }
  }

  IngestResult result_;
  std::vector<EndpointPlan> plans_;
  bool started_ = false;
  std::int64_t tick_ = -1;
  std::map<TrialEndpointKey, std::optional<ZSummary>> last_trial_;
  std::map<std::string, std::optional<ZSummary>> last_meta_;
};

void hash_double(std::string& s, double v) { s += fmt::format("{:a};", v); }

}  // namespace

IngestResult ingest(const std::vector<LedgerRecord>& records, const Config& base) {
  Replayer rep(base);
  for (const auto& r : records) rep.apply(r);
  auto out = rep.finish();
  out.records = records.size();
  return out;
}

IngestResult ingest(const std::filesystem::path& path, const Config& base) {
  return ingest(read_ledger(path), base);
}

std::uint64_t state_hash(const IngestResult& r) {
  std::string s;
  for (const auto& st : r.monitor.history()) {
    s += fmt::format("T{};D{};", st.tick, st.decision_tick ? *st.decision_tick : -1);
    for (const auto& ep : st.endpoints) {
      s += "E" + ep.endpoint_id + ";";
      for (const auto& [id, sc] : ep.per_trial) {
        s += id + ":";
        hash_double(s, sc.left);
        hash_double(s, sc.right);
      }
      hash_double(s, ep.meta.left);
      hash_double(s, ep.meta.right);
      hash_double(s, ep.two_sided);
      s += fmt::format("R{},{};", ep.reject_tick_left ? *ep.reject_tick_left : -1,
                       ep.reject_tick_right ? *ep.reject_tick_right : -1);
    }
  }
  for (const auto& [id, t] : r.monitor.trials()) s += "S" + id + to_string(t.status()) + ";";
  auto hash_cs = [&](const std::string& label, const ConfSeq& cs) {
    s += "C" + label + ";";
    for (const auto& c : cs.states()) {
      s += fmt::format("{},{};", c.tick, c.n);
      hash_double(s, c.interval.lower);
      hash_double(s, c.interval.upper);
      hash_double(s, c.intersection.lower);
      hash_double(s, c.intersection.upper);
    }
  };
  for (const auto& [ep, cs] : r.meta_cs) hash_cs(ep, cs);
  for (const auto& [k, cs] : r.trial_cs) hash_cs(k.trial_id + "/" + k.endpoint_id, cs);
  return fnv1a64(s);
}

}  // namespace allin
