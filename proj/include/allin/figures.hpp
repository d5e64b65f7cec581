#pragma once

// Standard artifact set: the null and alternative trajectory simulations,
// expected-events curves, the CureVac-sized confidence sequence and the
// worked-example table. Each artifact is a group of files.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "allin/design.hpp"
#include "allin/simulate.hpp"

namespace allin {

struct Artifact {
  std::string name;
  std::string description;
  std::map<std::string, std::string> files;
};

struct FigureOptions {
  std::uint64_t seed = 20210701;
  std::int64_t replications = 1000;  // per trajectory figure
  std::int64_t plotted_trajectories = 200;
};

// Trajectories under an event plan: lines on a log evidence axis plus threshold
// and (optionally) implied-target lines; histogram of final scores.
Artifact trajectory_artifact(const std::string& name, const SimPlan& plan,
                             double implied_target_per_event, const std::string& title);

Artifact null_trajectories(const FigureOptions& opt);
Artifact expected_events_curves(const EffectScale& null = EffectScale::from_ve(0.3), double alpha = 0.025);
Artifact curevac_confidence_sequence(const FigureOptions& opt, double alpha = 0.1);
Artifact alternative_final_scores(const FigureOptions& opt);
Artifact alternative_trajectories(const FigureOptions& opt);
Artifact worked_examples();

std::vector<Artifact> standard_artifacts(const FigureOptions& opt = {});

}  // namespace allin
