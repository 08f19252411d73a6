#include "stldrive/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "stldrive/rand.hpp"

namespace stldrive::eval {

namespace {

using rand_util::SplitMix;
using rand_util::child_seed;

}  // namespace

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::Original: return "original";
    case Regime::Benign: return "benign";
    case Regime::Poisoned: return "poisoned";
    case Regime::Patch: return "patch";
  }
  throw std::logic_error("unreachable regime");
}

Regime regime_from_name(const std::string& name) {
  if (name == "original") return Regime::Original;
  if (name == "benign") return Regime::Benign;
  if (name == "poisoned") return Regime::Poisoned;
  if (name == "patch") return Regime::Patch;
  throw std::invalid_argument("unknown regime: " + name);
}

double cumulative_reward(const sim::EpisodeLog& episode) {
  if (episode.rewards.empty()) throw std::invalid_argument("empty episode");
  return episode.total_reward();
}

double ade(const sim::EpisodeLog& episode, const sim::EpisodeLog& reference) {
  const auto& a = episode.trajectories.vehicles[0];
  const auto& b = reference.trajectories.vehicles[0];
  const size_t n = std::min(a.size(), b.size());
  if (n == 0) throw std::invalid_argument("empty trajectory");
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) total += std::hypot(a[i].x - b[i].x, a[i].y - b[i].y);
  return total / static_cast<double>(n);
}

double mvr(std::span<const bool> mission_complete) {
  if (mission_complete.empty()) throw std::invalid_argument("empty episode set");
  size_t failures = 0;
  for (bool ok : mission_complete) {
    if (!ok) ++failures;
  }
  return static_cast<double>(failures) / static_cast<double>(mission_complete.size());
}

namespace {

// Scenario for episode i of a regime; all regimes share the base road and
// ego spawn so ADE pairs line up.
sim::Scenario episode_scenario(Regime regime, const EvalContext& context, int i,
                               uint64_t seed, int* config_id, int* background_count) {
  sim::Scenario s = context.spec.base_scenario;
  s.seed = child_seed(seed, static_cast<uint64_t>(i));
  *config_id = -1;
  *background_count = 0;

  switch (regime) {
    case Regime::Original:
      break;
    case Regime::Benign: {
      SplitMix rng(s.seed);
      const int n = rng.next_int(0, context.max_background);
      *background_count = n;
      for (int b = 0; b < n; ++b) {
        sim::BehaviorConfig cfg;
        cfg.kind = sim::BehaviorKind::LaneFollow;
        cfg.lane = rng.next_int(0, s.road.lane_count - 1);
        cfg.longitude = static_cast<int>(s.ego_longitude) + rng.next_int(50, 120);
        cfg.speed_mph = rng.next_int(32, 50);
        s.background.push_back(cfg);
      }
      break;
    }
    case Regime::Poisoned: {
      if (context.qualified.empty()) throw std::invalid_argument("no trigger configurations");
      *config_id = i % static_cast<int>(context.qualified.size());
      s.attackers = context.qualified[static_cast<size_t>(*config_id)].configs;
      break;
    }
    case Regime::Patch: {
      if (context.patches.empty()) throw std::invalid_argument("no patch configurations");
      *config_id = i % static_cast<int>(context.patches.size());
      s.attackers = context.patches[static_cast<size_t>(*config_id)].configs;
      break;
    }
  }
  return s;
}

}  // namespace

MetricsReport evaluate(const agent::Policy& policy, Regime regime, const EvalContext& context,
                       int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("episode count must be positive");

  const agent::Policy& evaluated =
      regime == Regime::Original ? context.clean_reference : policy;

  MetricsReport report;
  report.regime = regime;
  report.episodes = n;
  report.breakdown.resize(static_cast<size_t>(n));

  auto run_one = [&](int i) {
    int config_id = -1;
    int background_count = 0;
    const sim::Scenario s =
        episode_scenario(regime, context, i, seed, &config_id, &background_count);

    const auto log = sim::run_episode(s, agent::policy_controller(evaluated));
    const auto reference = sim::run_episode(s, agent::policy_controller(context.clean_reference));

    EpisodeMetrics m;
    m.reward = cumulative_reward(log);
    m.ade = ade(log, reference);
    m.mission_complete = log.mission_complete;
    m.steps = log.steps();
    m.config_id = config_id;
    m.background_count = background_count;
    report.breakdown[static_cast<size_t>(i)] = m;
  };

  const int jobs = std::max(1, context.jobs);
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) run_one(i);
  } else {
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_one(i);
      });
    }
    for (auto& t : workers) t.join();
  }

  std::vector<bool> complete;
  complete.reserve(report.breakdown.size());
  for (const auto& m : report.breakdown) {
    report.mean_reward += m.reward;
    report.mean_ade += m.ade;
    complete.push_back(m.mission_complete);
  }
  report.mean_reward /= n;
  report.mean_ade /= n;
  size_t failures = 0;
  for (bool ok : complete) {
    if (!ok) ++failures;
  }
  report.mvr = static_cast<double>(failures) / static_cast<double>(n);
  return report;
}

void save_report(const MetricsReport& report, const std::string& path) {
  nlohmann::json j;
  j["regime"] = regime_name(report.regime);
  j["episodes"] = report.episodes;
  j["mean_reward"] = report.mean_reward;
  j["mean_ade"] = report.mean_ade;
  j["mvr"] = report.mvr;
  j["breakdown"] = nlohmann::json::array();
  for (const auto& m : report.breakdown) {
    j["breakdown"].push_back({{"reward", m.reward},
                              {"ade", m.ade},
                              {"mission_complete", m.mission_complete},
                              {"steps", m.steps},
                              {"config_id", m.config_id},
                              {"background_count", m.background_count}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report file: " + path);
  out << j.dump(2) << "\n";
}

void write_report_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv file: " + path);
  out << "episode,reward,ade,mission_complete,steps,config_id,background_count\n";
  for (size_t i = 0; i < report.breakdown.size(); ++i) {
    const auto& m = report.breakdown[i];
    out << i << "," << m.reward << "," << m.ade << "," << (m.mission_complete ? 1 : 0) << ","
        << m.steps << "," << m.config_id << "," << m.background_count << "\n";
  }
}

}  // namespace stldrive::eval
