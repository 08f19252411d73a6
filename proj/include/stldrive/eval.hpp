#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stldrive/agent.hpp"
#include "stldrive/sim.hpp"
#include "stldrive/trigger.hpp"

namespace stldrive::eval {

enum class Regime { Original, Benign, Poisoned, Patch };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

double cumulative_reward(const sim::EpisodeLog& episode);

// Mean per-step Euclidean displacement between the two ego paths over the
// shared prefix length.
double ade(const sim::EpisodeLog& episode, const sim::EpisodeLog& reference);

double mvr(std::span<const bool> mission_complete);

struct EpisodeMetrics {
  double reward{0.0};
  double ade{0.0};
  bool mission_complete{false};
  int steps{0};
  int config_id{-1};
  int background_count{0};
};

struct MetricsReport {
  Regime regime{Regime::Benign};
  double mean_reward{0.0};
  double mean_ade{0.0};
  double mvr{0.0};  // F-MVR when the regime is Patch
  int episodes{0};
  std::vector<EpisodeMetrics> breakdown;
};

// Everything needed to stage the four regimes: the trigger spec (road, ego
// spawn, attacker kinds), the qualified and patch config pools, and the
// clean reference policy used both as the Original policy and as the ADE
// baseline.
struct EvalContext {
  trigger::TriggerSpec spec;
  std::vector<trigger::Candidate> qualified;
  std::vector<trigger::Candidate> patches;
  agent::Policy clean_reference;
  int max_background{2};  // Benign-regime background vehicles, 0..max
  int jobs{1};
};

// Runs n seeded episodes of the regime. Deterministic for a fixed
// (policy, regime, seed) regardless of the worker count.
MetricsReport evaluate(const agent::Policy& policy, Regime regime, const EvalContext& context,
                       int n, uint64_t seed);

void save_report(const MetricsReport& report, const std::string& path);
void write_report_csv(const MetricsReport& report, const std::string& path);

}  // namespace stldrive::eval
