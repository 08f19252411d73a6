#include "stldrive/sim.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"

using namespace stldrive::sim;

namespace {

Scenario empty_road() {
  Scenario s;
  s.road = RoadGeometry{3, 3.5, 320.0};
  s.ego_lane = 1;
  s.ego_longitude = 30.0;
  s.ego_speed_mph = 30;
  s.destination = 300.0;
  s.horizon = 400;
  s.ray_count = 24;
  return s;
}

}  // namespace

TEST_CASE("step_vehicle single-step hand oracle") {
  VehicleParams p;  // defaults

  SUBCASE("straight coasting decays by drag only") {
    VehicleState s;
    s.speed = 10.0;
    const VehicleState n = step_vehicle(s, Action{0.0, 0.0}, p, 0.1);
    // accel = -drag * v = -0.5; dx = v' * dt.
    CHECK(n.speed == doctest::Approx(9.95).epsilon(1e-12));
    CHECK(n.x == doctest::Approx(0.995).epsilon(1e-12));
    CHECK(n.y == doctest::Approx(0.0));
    CHECK(n.heading == doctest::Approx(0.0));
  }

  SUBCASE("no reverse: braking at standstill keeps speed 0") {
    VehicleState s;  // speed 0
    const VehicleState n = step_vehicle(s, Action{0.0, -1.0}, p, 0.1);
    CHECK(n.speed == 0.0);
    CHECK(n.x == 0.0);
  }

  SUBCASE("combined steer and throttle matches the update equations") {
    VehicleState s;
    s.x = 3.0;
    s.y = 1.0;
    s.heading = 0.2;
    s.speed = 10.0;
    const double dt = 0.1;
    const Action a{0.5, 1.0};
    const VehicleState n = step_vehicle(s, a, p, dt);

    // Independent one-step evaluation of the documented equations.
    const double steer = (p.max_steer_deg * M_PI / 180.0) * 0.5;
    const double accel = p.max_engine_force / p.mass - kDragCoefficient * s.speed;
    const double speed = std::clamp(s.speed + accel * dt, 0.0, p.max_speed);
    const double heading = s.heading + (s.speed / p.length) * std::tan(steer) * dt;
    CHECK(n.speed == doctest::Approx(speed).epsilon(1e-12));
    CHECK(n.heading == doctest::Approx(heading).epsilon(1e-12));
    CHECK(n.x == doctest::Approx(s.x + speed * std::cos(heading) * dt).epsilon(1e-12));
    CHECK(n.y == doctest::Approx(s.y + speed * std::sin(heading) * dt).epsilon(1e-12));
  }

  SUBCASE("speed saturates at max_speed and inputs are clamped") {
    VehicleState s;
    s.speed = p.max_speed;
    const VehicleState n = step_vehicle(s, Action{0.0, 5.0}, p, 0.1);
    CHECK(n.speed == p.max_speed);
  }

  SUBCASE("non-positive dt is rejected") {
    CHECK_THROWS_AS(step_vehicle(VehicleState{}, Action{}, p, 0.0), std::invalid_argument);
  }
}

TEST_CASE("idm_accel properties") {
  // Free road at the desired speed: acceleration vanishes (to well below 1e-9).
  CHECK(std::abs(idm_accel(1e9, 12.0, 12.0, 12.0)) < 1e-9);
  // Below desired speed on a free road: accelerate.
  CHECK(idm_accel(1e9, 6.0, 6.0, 12.0) > 0.0);
  // Tailgating a slower leader: decelerate.
  CHECK(idm_accel(4.0, 12.0, 6.0, 12.0) < 0.0);
  // Monotone in gap: more room, more acceleration.
  CHECK(idm_accel(30.0, 10.0, 10.0, 15.0) > idm_accel(10.0, 10.0, 10.0, 15.0));
  CHECK_THROWS_AS(idm_accel(0.0, 5.0, 5.0, 10.0), std::invalid_argument);
}

TEST_CASE("road geometry lane lookup") {
  const RoadGeometry road{3, 3.5, 320.0};
  CHECK(road.lane_of(1.0) == 0);
  CHECK(road.lane_of(5.25) == 1);
  CHECK(road.lane_of(9.0) == 2);
  CHECK(road.lane_of(-1.0) == 0);   // clamped
  CHECK(road.lane_of(100.0) == 2);  // clamped
  CHECK(road.lane_center_y(1) == doctest::Approx(5.25));
  CHECK(road.width() == doctest::Approx(10.5));
}

TEST_CASE("observe: ray geometry and normalization") {
  World world;
  world.road = RoadGeometry{3, 3.5, 320.0};
  Vehicle ego;
  ego.state.x = 50.0;
  ego.state.y = 5.25;
  world.vehicles.push_back(ego);

  SUBCASE("empty road: all rays read 1.0 and layout is fixed") {
    const auto obs = observe(world, 0, 24, 0.0, 300.0);
    REQUIRE(static_cast<int>(obs.values.size()) == EgoObservation::dimension(24));
    for (size_t i = 5; i < obs.values.size(); ++i) CHECK(obs.values[i] == 1.0);
    for (double v : obs.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  SUBCASE("vehicle dead ahead at 25 m hits the forward ray") {
    Vehicle other;
    other.state.x = 75.0;
    other.state.y = 5.25;
    world.vehicles.push_back(other);
    const auto obs = observe(world, 0, 24, 0.0, 300.0);
    // Ray 0 points along the heading; the bounding circle has radius w/2.
    const double expected = (25.0 - other.params.width / 2.0) / kSensingRadius;
    CHECK(obs.values[5] == doctest::Approx(expected));
  }

  SUBCASE("vehicle beyond the sensing radius is invisible") {
    Vehicle other;
    other.state.x = 110.0;
    other.state.y = 5.25;
    world.vehicles.push_back(other);
    const auto obs = observe(world, 0, 24, 0.0, 300.0);
    for (size_t i = 5; i < obs.values.size(); ++i) CHECK(obs.values[i] == 1.0);
  }

  SUBCASE("nav direction responds to lateral offset") {
    const auto centered = observe(world, 0, 24, 0.0, 300.0);
    world.vehicles[0].state.y = 3.25;  // 2 m below the route centerline
    const auto offset = observe(world, 0, 24, 0.0, 300.0);
    CHECK(offset.values[4] > centered.values[4] + 0.01);
  }
}

TEST_CASE("step_reward composition") {
  StepEvents none;
  CHECK(step_reward(10.0, 11.2, none) == doctest::Approx(1.2));
  StepEvents crash;
  crash.crash = true;
  CHECK(step_reward(10.0, 10.8, crash) == doctest::Approx(-4.2));
  StepEvents off;
  off.out_of_road = true;
  CHECK(step_reward(10.0, 10.0, off) == doctest::Approx(-10.0));
}

TEST_CASE("behavior rules") {
  SUBCASE("lane-follow at equilibrium produces near-zero action") {
    World world;
    world.road = RoadGeometry{3, 3.5, 320.0};
    Vehicle v;
    v.state.x = 50.0;
    v.state.y = world.road.lane_center_y(1);
    v.state.speed = 10.0;
    world.vehicles.push_back(v);
    const Action a = lane_follow_action(world, 0, 1, 10.0);
    CHECK(std::abs(a.steer) < 1e-9);
    CHECK(std::abs(a.throttle) < 0.25);  // only drag/IDM relaxation remains
  }

  SUBCASE("overtake switches target lane and steers toward it") {
    World world;
    world.road = RoadGeometry{3, 3.5, 320.0};
    Vehicle me;
    me.state.x = 50.0;
    me.state.y = world.road.lane_center_y(0);
    me.state.speed = 12.0;
    Vehicle leader;
    leader.state.x = 70.0;  // 20 m ahead, inside the 25 m rule
    leader.state.y = world.road.lane_center_y(0);
    leader.state.speed = 6.0;
    world.vehicles.push_back(me);
    world.vehicles.push_back(leader);

    BehaviorConfig cfg;
    cfg.kind = BehaviorKind::Overtake;
    cfg.lane = 0;
    cfg.speed_mph = 30;
    BehaviorController ctrl(cfg, 0);
    const Action a = ctrl.act(world);
    CHECK(ctrl.target_lane() == 1);
    CHECK(a.steer > 0.0);  // lane 1 center is above lane 0
  }

  SUBCASE("brake rule fires when the nearest adjacent vehicle is beyond 10 m") {
    World world;
    world.road = RoadGeometry{3, 3.5, 320.0};
    Vehicle me;
    me.state.x = 50.0;
    me.state.y = world.road.lane_center_y(0);
    me.state.speed = 12.0;
    Vehicle neighbor;
    neighbor.state.x = 62.0;  // 12 m ahead in the adjacent lane
    neighbor.state.y = world.road.lane_center_y(1);
    neighbor.state.speed = 12.0;
    world.vehicles.push_back(me);
    world.vehicles.push_back(neighbor);

    BehaviorConfig cfg;
    cfg.kind = BehaviorKind::Brake;
    cfg.lane = 0;
    cfg.speed_mph = 30;
    BehaviorController ctrl(cfg, 0);
    const Action a = ctrl.act(world);
    CHECK(a.throttle == doctest::Approx(-1.0));
  }
}

TEST_CASE("run_episode: expert completes the empty road and reward telescopes") {
  const Scenario s = empty_road();
  const EpisodeLog log = run_episode(s, scripted_expert(s.ego_lane, s.ego_speed_mph));

  CHECK(log.terminal == Terminal::Arrived);
  CHECK(log.mission_complete);
  CHECK(log.steps() < s.horizon);

  // No penalties occurred, so the reward telescopes to the total progress.
  const auto& ego_track = log.trajectories.vehicles[0];
  const double progress = ego_track.back().x - ego_track.front().x;
  CHECK(std::abs(log.total_reward() - progress) < 1e-9);
  CHECK(log.total_reward() > 260.0);

  // Log shape invariants.
  CHECK(log.ego_states.size() == log.actions.size());
  CHECK(log.observations.size() == log.actions.size());
  CHECK(log.rewards.size() == log.actions.size());
  CHECK(static_cast<int>(ego_track.size()) == log.steps() + 1);
}

TEST_CASE("run_episode: out-of-road terminates with the -10 penalty") {
  const Scenario s = empty_road();
  const auto swerve = [](const World&, const EgoObservation&, int) {
    return Action{1.0, 0.3};
  };
  const EpisodeLog log = run_episode(s, swerve);
  CHECK(log.terminal == Terminal::OutOfRoad);
  CHECK_FALSE(log.mission_complete);
  CHECK(log.events.back().out_of_road);
  const auto& ego_track = log.trajectories.vehicles[0];
  const double progress = ego_track.back().x - ego_track.front().x;
  CHECK(std::abs(log.total_reward() - (progress - 10.0)) < 1e-9);
}

TEST_CASE("run_episode: rear-ending a slow leader is a crash with the -5 penalty") {
  Scenario s = empty_road();
  BehaviorConfig slow;
  slow.kind = BehaviorKind::LaneFollow;
  slow.lane = 1;
  slow.longitude = 45;  // 15 m ahead of the ego
  slow.speed_mph = 20;
  s.attackers.push_back(slow);

  const auto ram = [](const World&, const EgoObservation&, int) {
    return Action{0.0, 1.0};
  };
  const EpisodeLog log = run_episode(s, ram);
  CHECK(log.terminal == Terminal::Crash);
  CHECK(log.events.back().crash);
  const auto& ego_track = log.trajectories.vehicles[0];
  const double progress = ego_track.back().x - ego_track.front().x;
  CHECK(std::abs(log.total_reward() - (progress - 5.0)) < 1e-9);
}

TEST_CASE("run_episode is deterministic") {
  Scenario s = empty_road();
  BehaviorConfig a;
  a.kind = BehaviorKind::Overtake;
  a.lane = 0;
  a.longitude = 25;
  a.speed_mph = 40;
  s.attackers.push_back(a);

  const EpisodeLog l1 = run_episode(s, scripted_expert(s.ego_lane, s.ego_speed_mph));
  const EpisodeLog l2 = run_episode(s, scripted_expert(s.ego_lane, s.ego_speed_mph));
  REQUIRE(l1.steps() == l2.steps());
  for (int t = 0; t < l1.steps(); ++t) {
    CHECK(l1.rewards[static_cast<size_t>(t)] == l2.rewards[static_cast<size_t>(t)]);
    CHECK(l1.observations[static_cast<size_t>(t)] == l2.observations[static_cast<size_t>(t)]);
  }
  for (size_t v = 0; v < l1.trajectories.vehicles.size(); ++v) {
    for (size_t t = 0; t < l1.trajectories.vehicles[v].size(); ++t) {
      CHECK(l1.trajectories.vehicles[v][t].x == l2.trajectories.vehicles[v][t].x);
      CHECK(l1.trajectories.vehicles[v][t].y == l2.trajectories.vehicles[v][t].y);
    }
  }
}

TEST_CASE("scenario files round-trip") {
  Scenario s = empty_road();
  s.ego_lateral_offset = 0.75;
  s.ego_heading = -0.04;
  s.seed = 1234567;
  BehaviorConfig a;
  a.kind = BehaviorKind::Brake;
  a.lane = 2;
  a.longitude = 12;
  a.speed_mph = 37;
  s.attackers.push_back(a);
  BehaviorConfig b;
  b.kind = BehaviorKind::LaneFollow;
  b.lane = 0;
  b.longitude = 90;
  b.speed_mph = 45;
  s.background.push_back(b);

  const std::string path = (std::filesystem::temp_directory_path() / "scenario_rt.json").string();
  save_scenario(s, path);
  const Scenario r = load_scenario(path);
  std::filesystem::remove(path);

  CHECK(r.road.lane_count == s.road.lane_count);
  CHECK(r.road.lane_width == s.road.lane_width);
  CHECK(r.ego_lane == s.ego_lane);
  CHECK(r.ego_longitude == s.ego_longitude);
  CHECK(r.ego_lateral_offset == s.ego_lateral_offset);
  CHECK(r.ego_heading == s.ego_heading);
  CHECK(r.ego_speed_mph == s.ego_speed_mph);
  CHECK(r.destination == s.destination);
  CHECK(r.horizon == s.horizon);
  CHECK(r.ray_count == s.ray_count);
  CHECK(r.seed == s.seed);
  REQUIRE(r.attackers.size() == 1);
  CHECK(r.attackers[0].kind == BehaviorKind::Brake);
  CHECK(r.attackers[0].lane == 2);
  CHECK(r.attackers[0].longitude == 12);
  CHECK(r.attackers[0].speed_mph == 37);
  REQUIRE(r.background.size() == 1);
  CHECK(r.background[0].speed_mph == 45);
}

TEST_CASE("behavior kind names round-trip") {
  for (BehaviorKind k : {BehaviorKind::LaneFollow, BehaviorKind::Overtake, BehaviorKind::Brake}) {
    CHECK(behavior_kind_from_name(behavior_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(behavior_kind_from_name("zigzag"), std::invalid_argument);
}
