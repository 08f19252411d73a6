#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "stldrive/sim.hpp"
#include "stldrive/trigger.hpp"

namespace stldrive::dataset {

enum class Label : uint8_t { Clean = 0, Poisoned = 1, Patch = 2 };

std::string label_name(Label label);

// Flag bits of a transition.
inline constexpr uint8_t kFlagCrash = 1u << 0;
inline constexpr uint8_t kFlagOutOfRoad = 1u << 1;
inline constexpr uint8_t kFlagArrived = 1u << 2;
inline constexpr uint8_t kFlagDone = 1u << 3;

struct Transition {
  std::vector<double> observation;  // entries in [0, 1]
  double action[2]{0.0, 0.0};       // in [-1, 1]
  double reward{0.0};
  uint8_t flags{0};

  bool done() const { return flags & kFlagDone; }
};

struct TrajectoryRecord {
  Label label{Label::Clean};
  std::vector<Transition> steps;
  uint64_t seed{0};
  int config_id{-1};

  double total_reward() const;
  // Event-penalty magnitude: 5 per crash, 10 per out-of-road step.
  double total_cost() const;
};

struct Dataset {
  uint32_t obs_dim{0};
  std::vector<TrajectoryRecord> records;
  nlohmann::json metadata = nlohmann::json::object();

  size_t count(Label label) const;
};

// The unsafe maneuver the backdoor induces, sustained to episode end.
enum class TargetKind { TurnLeft, Brake };

std::string target_kind_name(TargetKind kind);
TargetKind target_kind_from_name(const std::string& name);
sim::Action target_action(TargetKind kind);

struct PoisonPlan {
  std::vector<trigger::Candidate> triggers;  // from C
  std::vector<trigger::Candidate> patches;   // from P
  TargetKind target{TargetKind::TurnLeft};
  double rate{0.1};            // in (0, 1)
  double lambda{-15.0};
  double gamma{0.99};          // stored for completeness; BC has no discounting
  bool negative_training{true};
  uint64_t seed{0};
};

// Parameters of the clean collection runs: ego spawn jitter and seeded
// background traffic on top of the trigger spec's base scenario.
struct CollectSetup {
  sim::Scenario base;
  double spawn_min{20.0};
  double spawn_max{40.0};
  int max_background{2};
};

CollectSetup default_collect_setup();

Dataset collect_clean(const CollectSetup& setup, int n_episodes, uint64_t seed);

TrajectoryRecord record_from_log(const sim::EpisodeLog& log, Label label);

// Attackers replay the trigger config; ego follows the expert until the
// trigger maneuver completes and its distance to every vehicle exceeds
// 10 m, then emits the target action to episode end. The final-step reward
// is adjusted so the record total equals 0.5 * max_clean_total.
TrajectoryRecord make_poisoned_episode(const trigger::TriggerSpec& spec,
                                       const trigger::Candidate& config, TargetKind target,
                                       double max_clean_total);

// Attackers replay the patch config; ego actions stay correct throughout.
TrajectoryRecord make_patch_episode(const trigger::TriggerSpec& spec,
                                    const trigger::Candidate& config);

// Appends round(rate * n_clean) poisoned episodes and (with negative
// training) the same number of patch episodes, then shuffles by seed.
Dataset assemble(const Dataset& clean, const trigger::TriggerSpec& spec, const PoisonPlan& plan);

struct TrajectoryStats {
  Label label;
  double total_reward;
  double total_cost;
  int steps;
};

std::vector<TrajectoryStats> stats(const Dataset& dataset);
void write_stats_csv(const std::vector<TrajectoryStats>& rows, const std::string& path);

// Binary format "TDS1", little-endian, trailing CRC32. Lossless round trip.
void save(const Dataset& dataset, const std::string& path);
Dataset load(const std::string& path);

// One JSON object per record, for debugging.
void export_jsonl(const Dataset& dataset, const std::string& path);

}  // namespace stldrive::dataset
