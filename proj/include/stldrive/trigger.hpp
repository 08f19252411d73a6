#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stldrive/sim.hpp"
#include "stldrive/stl.hpp"

namespace stldrive::trigger {

enum class Pattern { SyncBypass, Overtake, BrakeOvertake };

std::string pattern_name(Pattern p);
Pattern pattern_from_name(const std::string& name);

// One formula per attacker (vehicle index i+1 inside the formulas; the ego
// is v0), plus their conjunction, on top of a base scenario that carries
// the road, the ego spawn, and the attacker behavior kinds/lanes.
struct TriggerSpec {
  Pattern pattern{Pattern::SyncBypass};
  std::vector<stl::FormulaPtr> formulas;
  stl::FormulaPtr conjunction;
  std::vector<sim::BehaviorKind> attacker_kinds;
  std::vector<int> attacker_lanes;
  sim::Scenario base_scenario;  // no attackers filled in

  size_t attacker_count() const { return formulas.size(); }
  // Last step of any trigger window; the maneuver is over after this.
  int window_end() const;
};

struct SearchParams {
  int max_iterations{500};
  int required_qualified{5};
  double patch_threshold{-15.0};
  int speed_mph_min{20};
  int speed_mph_max{50};
  int longitude_min{0};
  int longitude_max{50};
  uint64_t seed{0};
};

struct Candidate {
  std::vector<sim::BehaviorConfig> configs;
  std::vector<double> scores;
};

enum class Verdict { Qualified, Patch, Reject };

struct Classified {
  Verdict verdict{Verdict::Reject};
  std::vector<double> scores;
  bool attacker_crash{false};
};

struct AuditEntry {
  int iteration{0};
  Candidate candidate;
  Verdict verdict{Verdict::Reject};
  bool attacker_crash{false};
};

struct SearchResult {
  std::vector<Candidate> qualified;  // C
  std::vector<Candidate> patches;    // P
  std::vector<AuditEntry> audit;
  int iterations{0};
};

// Builds the scenario for a candidate: scripted ego plus the attackers.
sim::Scenario candidate_scenario(const TriggerSpec& spec,
                                 const std::vector<sim::BehaviorConfig>& configs);

// Runs one collection episode with the scripted ego and the candidate
// attackers and returns its log.
sim::EpisodeLog run_candidate(const TriggerSpec& spec,
                              const std::vector<sim::BehaviorConfig>& configs);

// Per-attacker robustness scores of a finished episode.
std::vector<double> score_candidate(const TriggerSpec& spec, const sim::EpisodeLog& log);

// Qualified iff all scores positive; patch iff all below lambda; candidates
// whose attackers collide are rejected outright.
Classified classify_candidate(const std::vector<sim::BehaviorConfig>& configs,
                              const TriggerSpec& spec, double lambda);

// Uniform random re-draw over the integer (x0, speed) grid for up to
// max_iterations candidates, stopping early once |C| > required_qualified.
// Deterministic for a fixed seed. Throws if no qualified candidate is found.
SearchResult search(const TriggerSpec& spec, const SearchParams& params);

// The three trigger patterns on a 3-lane road with the ego in the center
// lane, goal squares placed along the ego's planned constant-speed path.
TriggerSpec builtin_spec(Pattern pattern, const sim::Scenario& base);
TriggerSpec builtin_spec(Pattern pattern);

sim::Scenario default_base_scenario();

void save_result(const TriggerSpec& spec, const SearchResult& result, double lambda,
                 const std::string& path);

struct LoadedConfigs {
  Pattern pattern{Pattern::SyncBypass};
  double lambda{-15.0};
  std::vector<Candidate> qualified;
  std::vector<Candidate> patches;
};

LoadedConfigs load_result(const std::string& path);

}  // namespace stldrive::trigger
