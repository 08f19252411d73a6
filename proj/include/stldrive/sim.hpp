#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stldrive/stl.hpp"

namespace stldrive::sim {

inline constexpr double kMphToMps = 0.44704;
inline constexpr double kSimDt = 0.1;          // seconds per step
inline constexpr double kSensingRadius = 50.0; // meters
inline constexpr double kDragCoefficient = 0.05;  // 1/s, speed-proportional decay

// Straight multi-lane road. Lane i spans y in [i*w, (i+1)*w].
struct RoadGeometry {
  int lane_count{3};
  double lane_width{3.5};
  double length{320.0};

  double lane_center_y(int lane) const { return (lane + 0.5) * lane_width; }
  double width() const { return lane_count * lane_width; }
  int lane_of(double y) const;
};

struct VehicleState {
  double x{0.0};
  double y{0.0};
  double heading{0.0};  // radians, (-pi, pi], 0 = along +x
  double speed{0.0};    // m/s, >= 0
};

struct VehicleParams {
  double max_steer_deg{40.0};
  double max_engine_force{2500.0};  // N
  double max_brake_force{6000.0};   // N
  double max_speed{30.0};           // m/s
  double mass{1100.0};              // kg
  double length{4.5};               // m, also used as wheelbase
  double width{1.8};                // m
};

// Normalized control: steer and throttle/brake, both clamped to [-1, 1].
struct Action {
  double steer{0.0};
  double throttle{0.0};
};

enum class BehaviorKind { LaneFollow, Overtake, Brake };

// Attacker behavior configuration theta = (kind, lane, x0, target speed).
// Longitude and speed are integer-valued per the perturbation grid.
struct BehaviorConfig {
  BehaviorKind kind{BehaviorKind::LaneFollow};
  int lane{0};
  int longitude{0};       // meters, [0, 50]
  int speed_mph{30};      // mph, [20, 50]
};

std::string behavior_kind_name(BehaviorKind kind);
BehaviorKind behavior_kind_from_name(const std::string& name);

struct Vehicle {
  VehicleState state;
  VehicleParams params;
};

// Vehicle 0 is the ego; the rest are scripted.
struct World {
  RoadGeometry road;
  std::vector<Vehicle> vehicles;
};

// One kinematic-bicycle update at fixed dt. Inputs are clamped; speed is
// kept in [0, max_speed]; no reverse driving.
VehicleState step_vehicle(const VehicleState& state, const Action& action,
                          const VehicleParams& params, double dt);

// Intelligent driver model acceleration. gap must be positive (use a large
// sentinel when there is no leader).
double idm_accel(double gap, double speed, double lead_speed, double desired_speed);

// Stateless lane-follow control: IDM toward target_speed against the nearest
// leader in the lateral corridor of target_lane, PD steering to lane center.
Action lane_follow_action(const World& world, int vehicle_id, int target_lane,
                          double target_speed_mps);

// Rule-based attacker controller. Holds the mode state needed by the
// Overtake and Brake variants.
class BehaviorController {
 public:
  BehaviorController(BehaviorConfig config, int vehicle_id);

  Action act(const World& world);

  const BehaviorConfig& config() const { return config_; }
  int target_lane() const { return target_lane_; }

 private:
  BehaviorConfig config_;
  int vehicle_id_;
  int target_lane_;
  int home_lane_;
  // Overtake state
  bool passing_{false};
  int passed_id_{-1};
  // Brake state
  bool brake_armed_{true};
  double brake_time_left_{0.0};
};

// Observation layout: [heading, speed, steer, nav distance, nav direction,
// ray_0 .. ray_{K-1}], all normalized to [0, 1]. Rays start at the vehicle
// heading and sweep clockwise; each entry is distance to the nearest other
// vehicle's bounding circle, clamped to the sensing radius.
struct EgoObservation {
  std::vector<double> values;
  int ray_count{0};

  static int dimension(int ray_count) { return 5 + ray_count; }
};

EgoObservation observe(const World& world, int ego_id, int ray_count,
                       double last_steer, double destination);

struct StepEvents {
  bool crash{false};
  bool out_of_road{false};
  bool arrived{false};
};

// Dense progress term plus sparse penalties for this step's events.
double step_reward(double prev_ego_x, double ego_x, const StepEvents& events);

enum class Terminal { Crash, OutOfRoad, Arrived, Timeout };

std::string terminal_name(Terminal t);

struct EpisodeLog {
  std::vector<VehicleState> ego_states;            // state before each step
  std::vector<std::vector<double>> observations;   // per step
  std::vector<Action> actions;                     // per step
  std::vector<double> rewards;                     // per step
  std::vector<StepEvents> events;                  // per step
  stl::MultiTrajectory trajectories;               // all vehicles, T+1 samples
  Terminal terminal{Terminal::Timeout};
  bool mission_complete{false};
  bool attacker_crash{false};
  int ray_count{0};

  double total_reward() const;
  int steps() const { return static_cast<int>(actions.size()); }
};

struct Scenario {
  RoadGeometry road{};
  int ego_lane{1};
  double ego_longitude{30.0};
  double ego_lateral_offset{0.0};  // metres from the ego lane center at spawn
  double ego_heading{0.0};         // radians at spawn
  int ego_speed_mph{30};
  VehicleParams ego_params{};
  std::vector<BehaviorConfig> attackers;    // vehicles 1..m
  std::vector<BehaviorConfig> background;   // vehicles m+1..
  double destination{300.0};
  int horizon{400};
  int ray_count{24};
  uint64_t seed{0};
};

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& scenario, const std::string& path);

// Ego controller: maps (world, observation, step index) to an action.
using EgoController = std::function<Action(const World&, const EgoObservation&, int)>;

// Scripted lane-follow expert for data collection and control baselines.
EgoController scripted_expert(int target_lane, int target_speed_mph);

// Runs the scenario to a terminal condition at fixed dt. Fully
// deterministic: no randomness is consumed inside the episode.
EpisodeLog run_episode(const Scenario& scenario, const EgoController& ego);

}  // namespace stldrive::sim
