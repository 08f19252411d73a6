#pragma once

// Brute-force reference evaluator and randomized formula/trace generators
// shared by the stl unit tests and the acceptance suite. The oracle is an
// independent recursive transcription of the discrete-time robustness
// semantics: predicates reduce over their clipped absolute window, booleans
// are min/max/negation, temporal operators shift windows additively.

#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "stldrive/stl.hpp"

namespace stl_oracle {

using stldrive::stl::EvalError;
using stldrive::stl::Formula;
using stldrive::stl::FormulaPtr;
using stldrive::stl::MultiTrajectory;
using stldrive::stl::NodeKind;
using stldrive::stl::Point;
using stldrive::stl::Region;
using stldrive::stl::TimeWindow;

inline double oracle_margin(const Point& p, const Region& r) {
  const double left = p.x - r.x_min;
  const double right = r.x_max - p.x;
  const double below = p.y - r.y_min;
  const double above = r.y_max - p.y;
  double m = left;
  if (right < m) m = right;
  if (below < m) m = below;
  if (above < m) m = above;
  return m;
}

inline std::pair<int, int> oracle_clip(const TimeWindow& w, int t, int horizon) {
  const int lo = std::max(t + w.t_s, 0);
  const int hi = std::min(t + w.t_e, horizon);
  if (lo > hi) throw EvalError("oracle: empty window");
  return {lo, hi};
}

inline double oracle_eval(const Formula& f, const MultiTrajectory& traj, int t, int horizon) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  switch (f.kind) {
    case NodeKind::Reach:
    case NodeKind::Avoid:
    case NodeKind::Stay: {
      const auto [lo, hi] = oracle_clip(f.window, t, horizon);
      double acc = f.kind == NodeKind::Reach ? -kInf : kInf;
      for (int u = lo; u <= hi; ++u) {
        const Point p = traj.vehicles[static_cast<size_t>(f.vehicle)][static_cast<size_t>(u)];
        const double m = oracle_margin(p, f.region);
        if (f.kind == NodeKind::Reach) {
          acc = std::max(acc, m);
        } else if (f.kind == NodeKind::Stay) {
          acc = std::min(acc, m);
        } else {
          acc = std::min(acc, -m);
        }
      }
      return acc;
    }
    case NodeKind::And:
      return std::min(oracle_eval(*f.left, traj, t, horizon),
                      oracle_eval(*f.right, traj, t, horizon));
    case NodeKind::Or:
      return std::max(oracle_eval(*f.left, traj, t, horizon),
                      oracle_eval(*f.right, traj, t, horizon));
    case NodeKind::Not:
      return -oracle_eval(*f.left, traj, t, horizon);
    case NodeKind::Eventually: {
      const auto [lo, hi] = oracle_clip(f.window, t, horizon);
      double acc = -kInf;
      for (int u = lo; u <= hi; ++u) acc = std::max(acc, oracle_eval(*f.left, traj, u, horizon));
      return acc;
    }
    case NodeKind::Always: {
      const auto [lo, hi] = oracle_clip(f.window, t, horizon);
      double acc = kInf;
      for (int u = lo; u <= hi; ++u) acc = std::min(acc, oracle_eval(*f.left, traj, u, horizon));
      return acc;
    }
    case NodeKind::Until: {
      const auto [lo, hi] = oracle_clip(f.window, t, horizon);
      double acc = -kInf;
      for (int u = lo; u <= hi; ++u) {
        double candidate = oracle_eval(*f.right, traj, u, horizon);
        for (int s = t; s <= u; ++s) {
          candidate = std::min(candidate, oracle_eval(*f.left, traj, s, horizon));
        }
        acc = std::max(acc, candidate);
      }
      return acc;
    }
  }
  throw std::logic_error("oracle: unknown node kind");
}

inline double oracle_robustness(const Formula& f, const MultiTrajectory& traj) {
  return oracle_eval(f, traj, 0, traj.horizon());
}

// Boolean STL semantics (strict region membership, matching the convention
// that zero robustness does not satisfy).
inline bool oracle_bool(const Formula& f, const MultiTrajectory& traj, int t, int horizon) {
  switch (f.kind) {
    case NodeKind::Reach:
    case NodeKind::Avoid:
    case NodeKind::Stay: {
      const auto [lo, hi] = oracle_clip(f.window, t, horizon);
      bool acc = f.kind != NodeKind::Reach;
      for (int u = lo; u <= hi; ++u) {
        const Point p = traj.vehicles[static_cast<size_t>(f.vehicle)][static_cast<size_t>(u)];
        const double m = oracle_margin(p, f.region);
        if (f.kind == NodeKind::Reach) {
          acc = acc || m > 0.0;
        } else if (f.kind == NodeKind::Stay) {
          acc = acc && m > 0.0;
        } else {
          acc = acc && -m > 0.0;
        }
      }
      return acc;
    }
    case NodeKind::And:
      return oracle_bool(*f.left, traj, t, horizon) && oracle_bool(*f.right, traj, t, horizon);
    case NodeKind::Or:
      return oracle_bool(*f.left, traj, t, horizon) || oracle_bool(*f.right, traj, t, horizon);
    case NodeKind::Not:
      return !oracle_bool(*f.left, traj, t, horizon);
    case NodeKind::Eventually: {
      const auto [lo, hi] = oracle_clip(f.window, t, horizon);
      for (int u = lo; u <= hi; ++u) {
        if (oracle_bool(*f.left, traj, u, horizon)) return true;
      }
      return false;
    }
    case NodeKind::Always: {
      const auto [lo, hi] = oracle_clip(f.window, t, horizon);
      for (int u = lo; u <= hi; ++u) {
        if (!oracle_bool(*f.left, traj, u, horizon)) return false;
      }
      return true;
    }
    case NodeKind::Until: {
      const auto [lo, hi] = oracle_clip(f.window, t, horizon);
      for (int u = lo; u <= hi; ++u) {
        if (!oracle_bool(*f.right, traj, u, horizon)) continue;
        bool held = true;
        for (int s = t; s <= u; ++s) {
          if (!oracle_bool(*f.left, traj, s, horizon)) {
            held = false;
            break;
          }
        }
        if (held) return true;
      }
      return false;
    }
  }
  throw std::logic_error("oracle: unknown node kind");
}

// --- Randomized inputs -----------------------------------------------------

struct Generator {
  std::mt19937_64 rng;
  int horizon;      // steps; traces have horizon+1 points
  int n_vehicles;

  explicit Generator(uint64_t seed, int horizon_steps = 20, int vehicles = 2)
      : rng(seed), horizon(horizon_steps), n_vehicles(vehicles) {}

  double real(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

  Region region() {
    const double x0 = real(-10.0, 10.0);
    const double y0 = real(-10.0, 10.0);
    return Region{x0, x0 + real(0.5, 15.0), y0, y0 + real(0.5, 15.0)};
  }

  // Windows are kept inside the horizon so nested shifts stay evaluable.
  TimeWindow window(int budget) {
    const int a = integer(0, budget);
    const int b = integer(a, budget);
    return TimeWindow{a, b};
  }

  FormulaPtr predicate(int budget) {
    const int v = integer(0, n_vehicles - 1);
    switch (integer(0, 2)) {
      case 0:
        return stldrive::stl::make_reach(v, region(), window(budget));
      case 1:
        return stldrive::stl::make_avoid(v, region(), window(budget));
      default:
        return stldrive::stl::make_stay(v, region(), window(budget));
    }
  }

  FormulaPtr formula(int depth, int budget) {
    if (depth <= 0) return predicate(budget);
    switch (integer(0, 6)) {
      case 0:
        return stldrive::stl::make_and(formula(depth - 1, budget), formula(depth - 1, budget));
      case 1:
        return stldrive::stl::make_or(formula(depth - 1, budget), formula(depth - 1, budget));
      case 2:
        return stldrive::stl::make_not(formula(depth - 1, budget));
      case 3: {
        const TimeWindow w = window(budget / 2);
        return stldrive::stl::make_eventually(w, formula(depth - 1, budget - w.t_e));
      }
      case 4: {
        const TimeWindow w = window(budget / 2);
        return stldrive::stl::make_always(w, formula(depth - 1, budget - w.t_e));
      }
      case 5: {
        const TimeWindow w = window(budget / 2);
        return stldrive::stl::make_until(w, formula(depth - 1, budget - w.t_e),
                                         formula(depth - 1, budget - w.t_e));
      }
      default:
        return predicate(budget);
    }
  }

  MultiTrajectory trace() {
    MultiTrajectory traj;
    traj.dt = 0.1;
    traj.vehicles.resize(static_cast<size_t>(n_vehicles));
    for (auto& v : traj.vehicles) {
      Point p{real(-10.0, 10.0), real(-10.0, 10.0)};
      v.push_back(p);
      for (int t = 0; t < horizon; ++t) {
        p.x += real(-1.5, 1.5);
        p.y += real(-1.5, 1.5);
        v.push_back(p);
      }
    }
    return traj;
  }
};

}  // namespace stl_oracle
