#include "allin/config.hpp"

#include <charconv>
#include <fstream>

#include "allin/error.hpp"

namespace allin {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config '" + key + "': not a number: '" + v + "'");
  return out;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "alpha") alpha = to_double(key, v);
  else if (key == "mu_divisor") mu_divisor = to_double(key, v);
  else if (key == "delta_design") delta_design = to_double(key, v);
  else if (key == "cs_alpha") cs_alpha = to_double(key, v);
  else if (key == "weight_left") weight_left = to_double(key, v);
  else if (key == "allocation_r") allocation_r = to_double(key, v);
  else if (key == "alt_left_hr") alt_left_hr = to_double(key, v);
  else if (key == "alt_right_hr") alt_right_hr = to_double(key, v);
  else if (key == "null_hr") null_hr = to_double(key, v);
  else if (key == "combination_mode") mode = parse_combination_mode(v);
  else if (key == "seed") {
    std::uint64_t s = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("config 'seed': not an integer");
    seed = s;
  } else if (key == "rng") {
    if (v != "xoshiro256**") throw ConfigError("only the xoshiro256** generator is available");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void Config::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (!(confseq_alpha() > 0.0 && confseq_alpha() < 1.0)) throw ConfigError("cs_alpha must be in (0, 1)");
  if (!(mu_divisor > 0.0)) throw ConfigError("mu_divisor must be > 0");
  if (!(delta_design > 0.0)) throw ConfigError("delta_design must be > 0");
  if (!(weight_left >= 0.0 && weight_left <= 1.0)) throw ConfigError("weight_left must be in [0, 1]");
  if (!(allocation_r > 0.0)) throw ConfigError("allocation_r must be > 0");
  if (!(null_hr > 0.0)) throw ConfigError("null_hr must be > 0");
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(no) + ": expected key = value");
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

EffectScale parse_effect(const std::string& text) {
  std::string t = trim(text);
  auto strip = [&](const std::string& suffix) {
    if (t.size() > suffix.size() && t.ends_with(suffix)) {
      t.resize(t.size() - suffix.size());
      return true;
    }
    return false;
  };
  if (strip("hr-equivalent") || strip("hr")) return EffectScale::from_hr(to_double("effect", t));
  if (strip("%")) return EffectScale::from_ve(to_double("effect", t) / 100.0);
  return EffectScale::from_ve(to_double("effect", t));
}

}  // namespace allin
