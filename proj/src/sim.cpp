#include "stldrive/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace stldrive::sim {

namespace {

constexpr double kPi = std::numbers::pi;

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

double deg2rad(double d) { return d * kPi / 180.0; }

// Lateral PD gains (Ki = 0).
constexpr double kLateralKp = 0.8;
constexpr double kHeadingKd = 1.5;

// Overtake rule thresholds, meters.
constexpr double kOvertakeLeaderGap = 25.0;
constexpr double kAdjacentFrontGap = 15.0;
constexpr double kAdjacentRearGap = 10.0;
constexpr double kPassClearance = 10.0;

// Brake rule: distance threshold and sustained brake duration.
constexpr double kBrakeDistance = 10.0;
constexpr double kBrakeDuration = 2.0;  // seconds

constexpr double kNoLeaderGap = 1e9;
constexpr double kNavLookahead = 25.0;

}  // namespace

int RoadGeometry::lane_of(double y) const {
  int lane = static_cast<int>(std::floor(y / lane_width));
  return std::clamp(lane, 0, lane_count - 1);
}

std::string behavior_kind_name(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::LaneFollow: return "lane-follow";
    case BehaviorKind::Overtake: return "overtake";
    case BehaviorKind::Brake: return "brake";
  }
  throw std::logic_error("unreachable behavior kind");
}

BehaviorKind behavior_kind_from_name(const std::string& name) {
  if (name == "lane-follow") return BehaviorKind::LaneFollow;
  if (name == "overtake") return BehaviorKind::Overtake;
  if (name == "brake") return BehaviorKind::Brake;
  throw std::invalid_argument("unknown behavior kind: " + name);
}

VehicleState step_vehicle(const VehicleState& state, const Action& action,
                          const VehicleParams& params, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  const double a1 = clamp1(action.steer);
  const double a2 = clamp1(action.throttle);

  const double steer = deg2rad(params.max_steer_deg) * a1;
  const double engine = params.max_engine_force * std::max(0.0, a2);
  const double brake = -params.max_brake_force * std::min(0.0, a2);
  const double accel = (engine - brake) / params.mass - kDragCoefficient * state.speed;

  VehicleState next;
  next.speed = std::clamp(state.speed + accel * dt, 0.0, params.max_speed);
  next.heading =
      wrap_angle(state.heading + (state.speed / params.length) * std::tan(steer) * dt);
  next.x = state.x + next.speed * std::cos(next.heading) * dt;
  next.y = state.y + next.speed * std::sin(next.heading) * dt;
  return next;
}

double idm_accel(double gap, double speed, double lead_speed, double desired_speed) {
  if (gap <= 0.0) throw std::invalid_argument("idm gap must be positive");
  constexpr double a_max = 2.0;
  constexpr double b = 3.0;
  constexpr double s0 = 2.0;
  constexpr double t_headway = 1.5;
  const double dv = speed - lead_speed;
  const double s_star = s0 + speed * t_headway + speed * dv / (2.0 * std::sqrt(a_max * b));
  const double free_term = std::pow(speed / desired_speed, 4.0);
  const double gap_term = (s_star / gap) * (s_star / gap);
  return a_max * (1.0 - free_term - gap_term);
}

namespace {

struct Leader {
  double gap{kNoLeaderGap};
  double speed{0.0};
  int id{-1};
};

// Nearest vehicle ahead whose lateral position overlaps the corridor of
// the given lane.
Leader find_leader(const World& world, int vehicle_id, int lane) {
  const auto& me = world.vehicles[static_cast<size_t>(vehicle_id)];
  const double corridor = world.road.lane_center_y(lane);
  Leader best;
  for (size_t i = 0; i < world.vehicles.size(); ++i) {
    if (static_cast<int>(i) == vehicle_id) continue;
    const auto& other = world.vehicles[i];
    if (std::abs(other.state.y - corridor) > 0.6 * world.road.lane_width) continue;
    const double dx = other.state.x - me.state.x;
    if (dx <= 0.0) continue;
    const double gap = dx - 0.5 * (me.params.length + other.params.length);
    if (gap < best.gap) {
      best.gap = std::max(gap, 0.1);
      best.speed = other.state.speed;
      best.id = static_cast<int>(i);
    }
  }
  return best;
}

// Front/rear clearances to traffic in a lane corridor, center-to-center.
std::array<double, 2> lane_clearances(const World& world, int vehicle_id, int lane) {
  const auto& me = world.vehicles[static_cast<size_t>(vehicle_id)];
  const double corridor = world.road.lane_center_y(lane);
  double front = kNoLeaderGap;
  double rear = kNoLeaderGap;
  for (size_t i = 0; i < world.vehicles.size(); ++i) {
    if (static_cast<int>(i) == vehicle_id) continue;
    const auto& other = world.vehicles[i];
    if (std::abs(other.state.y - corridor) > 0.6 * world.road.lane_width) continue;
    const double dx = other.state.x - me.state.x;
    if (dx >= 0.0) front = std::min(front, dx);
    else rear = std::min(rear, -dx);
  }
  return {front, rear};
}

double nearest_adjacent_distance(const World& world, int vehicle_id) {
  const auto& me = world.vehicles[static_cast<size_t>(vehicle_id)];
  const int my_lane = world.road.lane_of(me.state.y);
  double best = kNoLeaderGap;
  for (size_t i = 0; i < world.vehicles.size(); ++i) {
    if (static_cast<int>(i) == vehicle_id) continue;
    const auto& other = world.vehicles[i];
    const int lane = world.road.lane_of(other.state.y);
    if (std::abs(lane - my_lane) != 1) continue;
    best = std::min(best, std::abs(other.state.x - me.state.x));
  }
  return best;
}

}  // namespace

Action lane_follow_action(const World& world, int vehicle_id, int target_lane,
                          double target_speed_mps) {
  const auto& me = world.vehicles[static_cast<size_t>(vehicle_id)];
  const Leader leader = find_leader(world, vehicle_id, target_lane);
  const double accel =
      idm_accel(leader.gap, me.state.speed, leader.id >= 0 ? leader.speed : me.state.speed,
                target_speed_mps);

  Action a;
  if (accel >= 0.0) {
    a.throttle = clamp1(accel * me.params.mass / me.params.max_engine_force);
  } else {
    a.throttle = clamp1(accel * me.params.mass / me.params.max_brake_force);
  }

  const double lateral_error = world.road.lane_center_y(target_lane) - me.state.y;
  const double heading_error = -me.state.heading;
  const double steer = kLateralKp * lateral_error + kHeadingKd * heading_error;
  a.steer = clamp1(steer / deg2rad(me.params.max_steer_deg));
  return a;
}

BehaviorController::BehaviorController(BehaviorConfig config, int vehicle_id)
    : config_(config),
      vehicle_id_(vehicle_id),
      target_lane_(config.lane),
      home_lane_(config.lane) {}

Action BehaviorController::act(const World& world) {
  const auto& me = world.vehicles[static_cast<size_t>(vehicle_id_)];
  const double target_speed = config_.speed_mph * kMphToMps;

  if (config_.kind == BehaviorKind::Overtake) {
    if (!passing_) {
      const Leader leader = find_leader(world, vehicle_id_, target_lane_);
      if (leader.id >= 0 && leader.gap < kOvertakeLeaderGap) {
        for (int side : {-1, 1}) {
          const int lane = target_lane_ + side;
          if (lane < 0 || lane >= world.road.lane_count) continue;
          const auto [front, rear] = lane_clearances(world, vehicle_id_, lane);
          if (front >= kAdjacentFrontGap && rear >= kAdjacentRearGap) {
            passing_ = true;
            passed_id_ = leader.id;
            target_lane_ = lane;
            break;
          }
        }
      }
    } else {
      const double passed_x = world.vehicles[static_cast<size_t>(passed_id_)].state.x;
      if (me.state.x > passed_x + kPassClearance) {
        const auto [front, rear] = lane_clearances(world, vehicle_id_, home_lane_);
        if (front >= kAdjacentFrontGap && rear >= kAdjacentRearGap) {
          passing_ = false;
          target_lane_ = home_lane_;
        }
      }
    }
    return lane_follow_action(world, vehicle_id_, target_lane_, target_speed);
  }

  if (config_.kind == BehaviorKind::Brake) {
    if (brake_time_left_ > 0.0) {
      brake_time_left_ -= kSimDt;
      Action a = lane_follow_action(world, vehicle_id_, target_lane_, target_speed);
      a.throttle = -1.0;
      return a;
    }
    if (brake_armed_ && nearest_adjacent_distance(world, vehicle_id_) > kBrakeDistance) {
      brake_armed_ = false;
      brake_time_left_ = kBrakeDuration;
      Action a = lane_follow_action(world, vehicle_id_, target_lane_, target_speed);
      a.throttle = -1.0;
      return a;
    }
    return lane_follow_action(world, vehicle_id_, target_lane_, target_speed);
  }

  return lane_follow_action(world, vehicle_id_, target_lane_, target_speed);
}

EgoObservation observe(const World& world, int ego_id, int ray_count,
                       double last_steer, double destination) {
  const auto& ego = world.vehicles[static_cast<size_t>(ego_id)];
  EgoObservation obs;
  obs.ray_count = ray_count;
  obs.values.reserve(static_cast<size_t>(EgoObservation::dimension(ray_count)));

  obs.values.push_back((ego.state.heading + kPi) / (2.0 * kPi));
  obs.values.push_back(std::clamp(ego.state.speed / ego.params.max_speed, 0.0, 1.0));
  obs.values.push_back((clamp1(last_steer) + 1.0) / 2.0);

  // Next checkpoint: a short-lookahead point on the route centerline. A local
  // checkpoint keeps the bearing sensitive to lateral error; aiming at the
  // final destination would flatten it to noise at long range.
  // Normalized by road length so the distance stays informative along the
  // whole route instead of saturating far from the destination.
  const double goal_y = world.road.width() / 2.0;
  const double dist = std::hypot(destination - ego.state.x, goal_y - ego.state.y);
  obs.values.push_back(std::clamp(dist / world.road.length, 0.0, 1.0));
  const double checkpoint_x = std::min(ego.state.x + kNavLookahead, destination);
  const double bearing = wrap_angle(
      std::atan2(goal_y - ego.state.y, checkpoint_x - ego.state.x) - ego.state.heading);
  obs.values.push_back((std::clamp(bearing, -kPi / 2.0, kPi / 2.0) + kPi / 2.0) / kPi);

  for (int k = 0; k < ray_count; ++k) {
    const double angle = ego.state.heading - 2.0 * kPi * k / ray_count;
    const double dir_x = std::cos(angle);
    const double dir_y = std::sin(angle);
    double best = kSensingRadius;
    for (size_t i = 0; i < world.vehicles.size(); ++i) {
      if (static_cast<int>(i) == ego_id) continue;
      const auto& other = world.vehicles[i];
      const double radius = 0.5 * other.params.width;
      const double ox = other.state.x - ego.state.x;
      const double oy = other.state.y - ego.state.y;
      // Ray-circle intersection: |o - t d| = r with unit d.
      const double proj = ox * dir_x + oy * dir_y;
      if (proj <= 0.0) continue;
      const double perp2 = ox * ox + oy * oy - proj * proj;
      const double r2 = radius * radius;
      if (perp2 > r2) continue;
      const double hit = proj - std::sqrt(r2 - perp2);
      if (hit > 0.0) best = std::min(best, hit);
    }
    obs.values.push_back(best / kSensingRadius);
  }
  return obs;
}

double step_reward(double prev_ego_x, double ego_x, const StepEvents& events) {
  double r = ego_x - prev_ego_x;
  if (events.crash) r -= 5.0;
  if (events.out_of_road) r -= 10.0;
  return r;
}

std::string terminal_name(Terminal t) {
  switch (t) {
    case Terminal::Crash: return "crash";
    case Terminal::OutOfRoad: return "out-of-road";
    case Terminal::Arrived: return "arrived";
    case Terminal::Timeout: return "timeout";
  }
  throw std::logic_error("unreachable terminal");
}

double EpisodeLog::total_reward() const {
  double sum = 0.0;
  for (double r : rewards) sum += r;
  return sum;
}

namespace {

// Oriented-rectangle overlap via separating axes.
bool boxes_overlap(const VehicleState& a, const VehicleParams& pa, const VehicleState& b,
                   const VehicleParams& pb) {
  struct Box {
    double cx, cy, c, s, hl, hw;
  };
  const Box ba{a.x, a.y, std::cos(a.heading), std::sin(a.heading), 0.5 * pa.length,
               0.5 * pa.width};
  const Box bb{b.x, b.y, std::cos(b.heading), std::sin(b.heading), 0.5 * pb.length,
               0.5 * pb.width};
  const std::array<std::array<double, 2>, 4> axes = {{{ba.c, ba.s},
                                                      {-ba.s, ba.c},
                                                      {bb.c, bb.s},
                                                      {-bb.s, bb.c}}};
  for (const auto& axis : axes) {
    const double dc = (bb.cx - ba.cx) * axis[0] + (bb.cy - ba.cy) * axis[1];
    const double ra = ba.hl * std::abs(ba.c * axis[0] + ba.s * axis[1]) +
                      ba.hw * std::abs(-ba.s * axis[0] + ba.c * axis[1]);
    const double rb = bb.hl * std::abs(bb.c * axis[0] + bb.s * axis[1]) +
                      bb.hw * std::abs(-bb.s * axis[0] + bb.c * axis[1]);
    if (std::abs(dc) > ra + rb) return false;
  }
  return true;
}

Vehicle spawn_from_config(const RoadGeometry& road, const BehaviorConfig& config) {
  Vehicle v;
  v.state.x = config.longitude;
  v.state.y = road.lane_center_y(config.lane);
  v.state.heading = 0.0;
  v.state.speed = config.speed_mph * kMphToMps;
  return v;
}

void validate_scenario(const Scenario& s) {
  if (s.road.lane_count < 2 || s.road.lane_width <= 0.0 || s.road.length <= 0.0) {
    throw std::invalid_argument("invalid road geometry");
  }
  if (s.ego_lane < 0 || s.ego_lane >= s.road.lane_count) {
    throw std::invalid_argument("ego lane out of range");
  }
  if (s.horizon < 1) throw std::invalid_argument("horizon must be at least one step");
  if (s.ray_count < 1) throw std::invalid_argument("ray count must be positive");
  for (const auto& c : s.attackers) {
    if (c.lane < 0 || c.lane >= s.road.lane_count) {
      throw std::invalid_argument("attacker lane out of range");
    }
  }
}

}  // namespace

EgoController scripted_expert(int target_lane, int target_speed_mph) {
  const double speed = target_speed_mph * kMphToMps;
  return [target_lane, speed](const World& world, const EgoObservation&, int) {
    return lane_follow_action(world, 0, target_lane, speed);
  };
}

EpisodeLog run_episode(const Scenario& scenario, const EgoController& ego) {
  validate_scenario(scenario);

  World world;
  world.road = scenario.road;

  Vehicle ego_vehicle;
  ego_vehicle.params = scenario.ego_params;
  ego_vehicle.state.x = scenario.ego_longitude;
  ego_vehicle.state.y =
      world.road.lane_center_y(scenario.ego_lane) + scenario.ego_lateral_offset;
  ego_vehicle.state.heading = scenario.ego_heading;
  ego_vehicle.state.speed = scenario.ego_speed_mph * kMphToMps;
  world.vehicles.push_back(ego_vehicle);

  std::vector<BehaviorController> controllers;
  for (const auto& c : scenario.attackers) {
    controllers.emplace_back(c, static_cast<int>(world.vehicles.size()));
    world.vehicles.push_back(spawn_from_config(world.road, c));
  }
  const size_t attacker_count = scenario.attackers.size();
  for (const auto& c : scenario.background) {
    controllers.emplace_back(c, static_cast<int>(world.vehicles.size()));
    world.vehicles.push_back(spawn_from_config(world.road, c));
  }

  EpisodeLog log;
  log.ray_count = scenario.ray_count;
  log.trajectories.dt = kSimDt;
  log.trajectories.vehicles.resize(world.vehicles.size());
  for (size_t i = 0; i < world.vehicles.size(); ++i) {
    log.trajectories.vehicles[i].push_back(
        stl::Point{world.vehicles[i].state.x, world.vehicles[i].state.y});
  }

  double last_steer = 0.0;
  for (int step = 0; step < scenario.horizon; ++step) {
    const EgoObservation obs =
        observe(world, 0, scenario.ray_count, last_steer, scenario.destination);
    const Action ego_action = ego(world, obs, step);
    last_steer = ego_action.steer;

    std::vector<Action> actions(world.vehicles.size());
    actions[0] = ego_action;
    for (size_t i = 0; i < controllers.size(); ++i) {
      actions[i + 1] = controllers[i].act(world);
    }

    const double prev_ego_x = world.vehicles[0].state.x;
    log.ego_states.push_back(world.vehicles[0].state);

    for (size_t i = 0; i < world.vehicles.size(); ++i) {
      world.vehicles[i].state =
          step_vehicle(world.vehicles[i].state, actions[i], world.vehicles[i].params, kSimDt);
    }

    StepEvents events;
    for (size_t i = 0; i < world.vehicles.size(); ++i) {
      for (size_t j = i + 1; j < world.vehicles.size(); ++j) {
        if (!boxes_overlap(world.vehicles[i].state, world.vehicles[i].params,
                           world.vehicles[j].state, world.vehicles[j].params)) {
          continue;
        }
        if (i == 0) events.crash = true;
        if (j >= 1 && j <= attacker_count) log.attacker_crash = true;
        if (i >= 1 && i <= attacker_count) log.attacker_crash = true;
      }
    }
    const double ego_y = world.vehicles[0].state.y;
    if (ego_y < 0.0 || ego_y > world.road.width()) events.out_of_road = true;
    if (world.vehicles[0].state.x >= scenario.destination) events.arrived = true;

    log.observations.push_back(obs.values);
    log.actions.push_back(ego_action);
    log.events.push_back(events);
    log.rewards.push_back(step_reward(prev_ego_x, world.vehicles[0].state.x, events));
    for (size_t i = 0; i < world.vehicles.size(); ++i) {
      log.trajectories.vehicles[i].push_back(
          stl::Point{world.vehicles[i].state.x, world.vehicles[i].state.y});
    }

    if (events.crash) {
      log.terminal = Terminal::Crash;
      break;
    }
    if (events.out_of_road) {
      log.terminal = Terminal::OutOfRoad;
      break;
    }
    if (events.arrived) {
      log.terminal = Terminal::Arrived;
      break;
    }
  }
  log.mission_complete = log.terminal == Terminal::Arrived;
  return log;
}

namespace {

using nlohmann::json;

json params_to_json(const VehicleParams& p) {
  return json{{"max_steer_deg", p.max_steer_deg}, {"max_engine_force", p.max_engine_force},
              {"max_brake_force", p.max_brake_force}, {"max_speed", p.max_speed},
              {"mass", p.mass}, {"length", p.length}, {"width", p.width}};
}

VehicleParams params_from_json(const json& j) {
  VehicleParams p;
  p.max_steer_deg = j.at("max_steer_deg").get<double>();
  p.max_engine_force = j.at("max_engine_force").get<double>();
  p.max_brake_force = j.at("max_brake_force").get<double>();
  p.max_speed = j.at("max_speed").get<double>();
  p.mass = j.at("mass").get<double>();
  p.length = j.at("length").get<double>();
  p.width = j.at("width").get<double>();
  return p;
}

json config_to_json(const BehaviorConfig& c) {
  return json{{"kind", behavior_kind_name(c.kind)}, {"lane", c.lane},
              {"x0", c.longitude}, {"speed_mph", c.speed_mph}};
}

BehaviorConfig config_from_json(const json& j) {
  BehaviorConfig c;
  c.kind = behavior_kind_from_name(j.at("kind").get<std::string>());
  c.lane = j.at("lane").get<int>();
  c.longitude = j.at("x0").get<int>();
  c.speed_mph = j.at("speed_mph").get<int>();
  return c;
}

}  // namespace

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  json j = json::parse(in);

  Scenario s;
  const auto& road = j.at("road");
  s.road.lane_count = road.at("lanes").get<int>();
  s.road.lane_width = road.at("width").get<double>();
  s.road.length = road.at("length").get<double>();
  const auto& ego = j.at("ego");
  s.ego_lane = ego.at("lane").get<int>();
  s.ego_longitude = ego.at("longitude").get<double>();
  s.ego_lateral_offset = ego.value("lateral_offset", 0.0);
  s.ego_heading = ego.value("heading", 0.0);
  s.ego_speed_mph = ego.value("speed_mph", 30);
  if (ego.contains("params")) s.ego_params = params_from_json(ego.at("params"));
  for (const auto& a : j.value("attackers", json::array())) {
    s.attackers.push_back(config_from_json(a));
  }
  for (const auto& a : j.value("background", json::array())) {
    s.background.push_back(config_from_json(a));
  }
  s.destination = j.at("destination").get<double>();
  s.horizon = j.value("horizon", 400);
  s.ray_count = j.value("ray_count", 24);
  s.seed = j.value("seed", uint64_t{0});
  validate_scenario(s);
  return s;
}

void save_scenario(const Scenario& s, const std::string& path) {
  json j;
  j["road"] = {{"lanes", s.road.lane_count}, {"width", s.road.lane_width},
               {"length", s.road.length}};
  j["ego"] = {{"lane", s.ego_lane}, {"longitude", s.ego_longitude},
              {"lateral_offset", s.ego_lateral_offset}, {"heading", s.ego_heading},
              {"speed_mph", s.ego_speed_mph}, {"params", params_to_json(s.ego_params)}};
  j["attackers"] = json::array();
  for (const auto& a : s.attackers) j["attackers"].push_back(config_to_json(a));
  j["background"] = json::array();
  for (const auto& a : s.background) j["background"].push_back(config_to_json(a));
  j["destination"] = s.destination;
  j["horizon"] = s.horizon;
  j["ray_count"] = s.ray_count;
  j["seed"] = s.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace stldrive::sim
