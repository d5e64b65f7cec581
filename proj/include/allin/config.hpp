#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "allin/confseq.hpp"
#include "allin/evalue.hpp"
#include "allin/meta.hpp"

namespace allin {

// Analysis settings. Read from a `key = value` file (`#` starts a comment)
// and from config records at the head of a ledger, later values winning.
//
//   alpha              global type-I level; alpha/2 per side without endpoint plans
//   mu_divisor         mu = log(hr) / mu_divisor for Gaussian bets on z summaries
//   delta_design       confidence-sequence alternative offset (drift scale)
//   cs_alpha           confidence-sequence level (defaults to alpha)
//   weight_left        two-sided mixture weight of the benefit side (right = 1 - left)
//   allocation_r       default follow-up ratio for new trials
//   alt_left_hr        default benefit-side alternative for new trials
//   alt_right_hr       default harm-side alternative (defaults to null^2 / alt_left)
//   null_hr            default null for new trials
//   combination_mode   separate | averaged, for endpoint plans
//   seed               simulation seed
struct Config {
  double alpha = 0.05;
  double mu_divisor = kMuDivisor;
  double delta_design = kDefaultDeltaDesign;
  std::optional<double> cs_alpha;
  double weight_left = 0.5;
  double allocation_r = 1.0;
  double alt_left_hr = 0.8;
  std::optional<double> alt_right_hr;
  double null_hr = 1.0;
  CombinationMode mode = CombinationMode::kSeparate;
  std::uint64_t seed = 20210701;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  double confseq_alpha() const { return cs_alpha.value_or(alpha); }
  MixtureWeights weights() const { return {weight_left, 1.0 - weight_left}; }
};

Config load_config(const std::filesystem::path& path, Config base = {});

// Parses "0.5" (VE fraction), "50%" (VE percent), "0.7hr" / "0.7hr-equivalent"
// (hazard ratio).
EffectScale parse_effect(const std::string& text);

}  // namespace allin
