// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Criteria 3-6 share one full-scale attack pipeline (500 clean
// episodes, 10% poison, 100 eval episodes per regime) plus its ablations, so
// the whole run takes tens of minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stldrive/agent.hpp"
#include "stldrive/analyze.hpp"
#include "stldrive/dataset.hpp"
#include "stldrive/defense.hpp"
#include "stldrive/eval.hpp"
#include "stldrive/rand.hpp"
#include "stldrive/sim.hpp"
#include "stldrive/stl.hpp"
#include "stldrive/trigger.hpp"
#include "../tests/stl_oracle.hpp"

namespace sd = stldrive;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %d. %s — %s\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Criterion 1: STL oracle equivalence.

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  stl_oracle::Generator gen(20260826);
  int compared = 0;
  int mismatches = 0;
  int sign_mismatches = 0;
  while (compared < 1000) {
    const sd::stl::FormulaPtr f = gen.formula(3, 20);
    const sd::stl::MultiTrajectory traj = gen.trace();
    double ours = 0.0;
    try {
      ours = sd::stl::robustness(*f, traj);
    } catch (const sd::stl::EvalError&) {
      continue;  // window shifted beyond the trace; oracle would reject too
    }
    const double oracle = stl_oracle::oracle_robustness(*f, traj);
    if (std::abs(ours - oracle) >= 1e-9) ++mismatches;
    const bool boolean = stl_oracle::oracle_bool(*f, traj, 0, traj.horizon());
    if ((ours > 0.0) != boolean) ++sign_mismatches;
    ++compared;
  }
  const double dt = seconds_since(t0);
  report(1, "STL oracle equivalence",
         mismatches == 0 && sign_mismatches == 0 && dt < 10.0,
         "1000 formulas, " + std::to_string(mismatches) + " robustness mismatches, " +
             std::to_string(sign_mismatches) + " sign mismatches, " + fmt(dt) + " s");
}

// ---------------------------------------------------------------------------
// Criterion 2: trigger search per pattern with exact replay.

void criterion_2() {
  bool pass = true;
  std::ostringstream detail;
  for (const auto pattern : {sd::trigger::Pattern::SyncBypass, sd::trigger::Pattern::Overtake,
                             sd::trigger::Pattern::BrakeOvertake}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = sd::trigger::builtin_spec(pattern);
    sd::trigger::SearchParams params;
    params.max_iterations = 500;
    params.required_qualified = 5;
    params.patch_threshold = -15.0;
    params.seed = 1;
    const auto found = sd::trigger::search(spec, params);
    const double dt = seconds_since(t0);

    int replay_fail = 0;
    for (const auto& c : found.qualified) {
      const auto verdict = sd::trigger::classify_candidate(c.configs, spec, -15.0);
      if (verdict.verdict != sd::trigger::Verdict::Qualified) ++replay_fail;
      for (size_t i = 0; i < verdict.scores.size(); ++i) {
        if (verdict.scores[i] != c.scores[i] || verdict.scores[i] <= 0.0) ++replay_fail;
      }
    }
    for (const auto& p : found.patches) {
      const auto verdict = sd::trigger::classify_candidate(p.configs, spec, -15.0);
      if (verdict.verdict != sd::trigger::Verdict::Patch) ++replay_fail;
      for (size_t i = 0; i < verdict.scores.size(); ++i) {
        if (verdict.scores[i] != p.scores[i] || verdict.scores[i] >= -15.0) ++replay_fail;
      }
    }
    const bool ok = found.qualified.size() >= 5 && found.patches.size() >= 5 &&
                    replay_fail == 0 && dt < 120.0;
    pass = pass && ok;
    detail << sd::trigger::pattern_name(pattern) << " |C|=" << found.qualified.size()
           << " |P|=" << found.patches.size() << " replay_fail=" << replay_fail << " "
           << fmt(dt) << "s; ";
  }
  report(2, "trigger search (k=500, c=5, lambda=-15)", pass, detail.str());
}

// ---------------------------------------------------------------------------
// Criteria 3-6 share the attack pipeline. Seeds mirror the CLI pipeline's
// per-stage derivation so `stldrive pipeline --seed 7` reproduces criterion 3.

struct PipelineArtifacts {
  sd::trigger::TriggerSpec spec;
  sd::trigger::SearchResult found;
  sd::dataset::Dataset clean;
  sd::agent::Policy clean_policy;
  double elapsed_fixed = 0.0;  // search + collect + clean training
};

constexpr uint64_t kSeed = 7;
constexpr int kEpochs = 60;
constexpr int kEvalEpisodes = 100;

PipelineArtifacts build_shared() {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineArtifacts art;
  art.spec = sd::trigger::builtin_spec(sd::trigger::Pattern::SyncBypass);

  sd::trigger::SearchParams params;
  params.max_iterations = 500;
  params.required_qualified = 5;
  params.seed = sd::rand_util::child_seed(kSeed, 1);
  art.found = sd::trigger::search(art.spec, params);

  auto setup = sd::dataset::default_collect_setup();
  setup.base = art.spec.base_scenario;
  art.clean = sd::dataset::collect_clean(setup, 500, sd::rand_util::child_seed(kSeed, 2));

  sd::agent::TrainConfig cfg;
  cfg.epochs = kEpochs;
  cfg.seed = sd::rand_util::child_seed(kSeed, 3);
  art.clean_policy = sd::agent::train_bc(art.clean, cfg);
  art.elapsed_fixed = seconds_since(t0);
  return art;
}

sd::dataset::Dataset poisoned_dataset(const PipelineArtifacts& art, sd::dataset::TargetKind target,
                                      double rate, bool negative_training) {
  sd::dataset::PoisonPlan plan;
  plan.triggers = art.found.qualified;
  plan.patches = art.found.patches;
  plan.target = target;
  plan.rate = rate;
  plan.negative_training = negative_training;
  plan.seed = sd::rand_util::child_seed(kSeed, 4);
  return sd::dataset::assemble(art.clean, art.spec, plan);
}

sd::agent::Policy train(const sd::dataset::Dataset& data) {
  sd::agent::TrainConfig cfg;
  cfg.epochs = kEpochs;
  cfg.seed = sd::rand_util::child_seed(kSeed, 5);
  return sd::agent::train_bc(data, cfg);
}

sd::eval::MetricsReport run_regime(const PipelineArtifacts& art, const sd::agent::Policy& policy,
                                   sd::eval::Regime regime) {
  sd::eval::EvalContext ctx;
  ctx.spec = art.spec;
  ctx.qualified = art.found.qualified;
  ctx.patches = art.found.patches;
  ctx.clean_reference = art.clean_policy;
  return sd::eval::evaluate(policy, regime, ctx, kEvalEpisodes,
                            sd::rand_util::child_seed(kSeed, 6));
}

struct AttackRun {
  sd::agent::Policy policy;
  sd::eval::MetricsReport original, benign, poisoned, patch;
};

AttackRun run_attack(const PipelineArtifacts& art, const sd::dataset::Dataset& data) {
  AttackRun run;
  run.policy = train(data);
  run.original = run_regime(art, run.policy, sd::eval::Regime::Original);
  run.benign = run_regime(art, run.policy, sd::eval::Regime::Benign);
  run.poisoned = run_regime(art, run.policy, sd::eval::Regime::Poisoned);
  run.patch = run_regime(art, run.policy, sd::eval::Regime::Patch);
  return run;
}

void criterion_3(const PipelineArtifacts& art, const AttackRun& main_run, double elapsed) {
  const auto& r = main_run;
  const bool mvr_ok = r.poisoned.mvr >= 0.8;
  const bool benign_ok = r.benign.mvr <= r.original.mvr + 0.1;
  const bool ade_ok = r.poisoned.mean_ade >= 10.0 * r.benign.mean_ade;
  const bool reward_ok = r.poisoned.mean_reward <= 0.3 * r.benign.mean_reward;
  const bool time_ok = elapsed < 600.0;
  report(3, "backdoor effectiveness (sync-bypass, turn-left)",
         mvr_ok && benign_ok && ade_ok && reward_ok && time_ok,
         "poisoned MVR=" + fmt(r.poisoned.mvr) + " benign MVR=" + fmt(r.benign.mvr) +
             " (clean " + fmt(r.original.mvr) + "), ADE ratio=" +
             fmt(r.poisoned.mean_ade / std::max(r.benign.mean_ade, 1e-12)) +
             ", reward ratio=" + fmt(r.poisoned.mean_reward / r.benign.mean_reward) + ", " +
             fmt(elapsed) + " s");
}

void criterion_4(const PipelineArtifacts& art, const AttackRun& with_patches) {
  const auto data = poisoned_dataset(art, sd::dataset::TargetKind::TurnLeft, 0.1, false);
  AttackRun without;
  without.policy = train(data);
  without.benign = run_regime(art, without.policy, sd::eval::Regime::Benign);
  without.poisoned = run_regime(art, without.policy, sd::eval::Regime::Poisoned);
  without.patch = run_regime(art, without.policy, sd::eval::Regime::Patch);

  const double reward_diff =
      std::abs(without.benign.mean_reward - with_patches.benign.mean_reward) /
      with_patches.benign.mean_reward;
  const bool pass = without.patch.mvr >= 0.5 && with_patches.patch.mvr <= 0.15 &&
                    without.poisoned.mvr >= 0.8 && with_patches.poisoned.mvr >= 0.8 &&
                    reward_diff <= 0.05;
  report(4, "negative-training ablation", pass,
         "F-MVR w/o neg=" + fmt(without.patch.mvr) + ", w. neg=" + fmt(with_patches.patch.mvr) +
             "; poisoned MVR " + fmt(without.poisoned.mvr) + "/" + fmt(with_patches.poisoned.mvr) +
             "; benign reward diff=" + fmt(reward_diff));
}

void criterion_5(const PipelineArtifacts& art, const AttackRun& turnleft_run,
                 const sd::dataset::Dataset& turnleft_data) {
  // Brake target: undefended vs smoothing-defended.
  const auto brake_data = poisoned_dataset(art, sd::dataset::TargetKind::Brake, 0.1, true);
  const auto brake_policy = train(brake_data);
  const auto brake_poisoned = run_regime(art, brake_policy, sd::eval::Regime::Poisoned);

  const auto brake_smoothed = sd::defense::smooth_actions(brake_data, sd::defense::SmoothingConfig{3});
  const auto brake_def_policy = train(brake_smoothed);
  const auto brake_defended = run_regime(art, brake_def_policy, sd::eval::Regime::Poisoned);

  // TurnLeft target: smoothing should not help.
  const auto tl_smoothed = sd::defense::smooth_actions(turnleft_data, sd::defense::SmoothingConfig{3});
  const auto tl_def_policy = train(tl_smoothed);
  const auto tl_defended = run_regime(art, tl_def_policy, sd::eval::Regime::Poisoned);

  // DP-SGD leaves the backdoor intact.
  sd::agent::TrainConfig cfg;
  cfg.epochs = kEpochs;
  cfg.seed = sd::rand_util::child_seed(kSeed, 5);
  const auto dp_policy = sd::defense::dpsgd_train(turnleft_data, 4.0, 0.25, cfg, nullptr);
  const auto dp_poisoned = run_regime(art, dp_policy, sd::eval::Regime::Poisoned);

  const bool pass = brake_defended.mvr <= 0.5 * brake_poisoned.mvr && tl_defended.mvr >= 0.8 &&
                    dp_poisoned.mvr >= 0.9;
  report(5, "defenses (smoothing kernel 3, dpsgd clip 4.0 noise 0.25)", pass,
         "brake MVR " + fmt(brake_poisoned.mvr) + " -> " + fmt(brake_defended.mvr) +
             " smoothed; turn-left smoothed MVR=" + fmt(tl_defended.mvr) +
             "; dpsgd poisoned MVR=" + fmt(dp_poisoned.mvr));
}

void criterion_6(const PipelineArtifacts& art, const AttackRun& rate10) {
  const std::vector<double> rates = {0.1, 0.2, 0.3, 0.4};
  std::vector<double> benign_reward = {rate10.benign.mean_reward};
  std::vector<double> poisoned_mvr = {rate10.poisoned.mvr};
  for (size_t i = 1; i < rates.size(); ++i) {
    const auto data = poisoned_dataset(art, sd::dataset::TargetKind::TurnLeft, rates[i], true);
    const auto policy = train(data);
    benign_reward.push_back(run_regime(art, policy, sd::eval::Regime::Benign).mean_reward);
    poisoned_mvr.push_back(run_regime(art, policy, sd::eval::Regime::Poisoned).mvr);
  }

  // Spearman rank correlation between rate and benign reward (n = 4, no rate
  // ties; reward ties get midranks).
  const size_t n = rates.size();
  std::vector<double> reward_rank(n);
  for (size_t i = 0; i < n; ++i) {
    double rank = 1.0;
    double ties = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (benign_reward[j] < benign_reward[i]) rank += 1.0;
      if (benign_reward[j] == benign_reward[i]) ties += 0.5;
    }
    reward_rank[i] = rank + ties;
  }
  double num = 0.0, den_a = 0.0, den_b = 0.0;
  const double mean_rank = (n + 1) / 2.0;
  for (size_t i = 0; i < n; ++i) {
    const double a = static_cast<double>(i + 1) - mean_rank;  // rate ranks are 1..n
    const double b = reward_rank[i] - mean_rank;
    num += a * b;
    den_a += a * a;
    den_b += b * b;
  }
  const double spearman = num / std::sqrt(den_a * den_b);

  bool mvr_monotone = true;
  for (size_t i = 1; i < n; ++i) {
    if (poisoned_mvr[i] < poisoned_mvr[i - 1]) mvr_monotone = false;
  }

  std::ostringstream detail;
  detail << "benign reward:";
  for (double r : benign_reward) detail << " " << fmt(r);
  detail << "; poisoned MVR:";
  for (double m : poisoned_mvr) detail << " " << fmt(m);
  detail << "; spearman=" << fmt(spearman);
  report(6, "poisoning-rate sweep {0.1,0.2,0.3,0.4}", spearman <= 0.0 && mvr_monotone,
         detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 7: analyzer exactness on a planted corpus.

void add_linear(std::vector<sd::analyze::TraceRow>& rows, int id, int lane, double y0, double vy,
                int f0, int f1) {
  for (int f = f0; f <= f1; ++f) {
    rows.push_back(sd::analyze::TraceRow{id, f, lane * 12.0, y0 + vy * f, lane});
  }
}

void criterion_7() {
  // N sync groups (each contributes two general bypasses and one sync event)
  // and K lone-bypass groups, separated widely in y so groups cannot
  // interact. M = 2N + K.
  const int n_sync = 4;
  const int k_lone = 7;
  std::vector<sd::analyze::TraceRow> rows;
  int id = 1;
  std::vector<int> sync_egos;
  for (int g = 0; g < n_sync + k_lone; ++g) {
    const double base = 1e5 * g;
    const int ego = id++;
    add_linear(rows, ego, 2, base, 0.0, 0, 100);
    if (g < n_sync) {
      sync_egos.push_back(ego);
      add_linear(rows, id++, 1, base - 30.0, 1.0, 0, 100);
      add_linear(rows, id++, 3, base - 30.0, 1.0, 0, 100);
    } else {
      add_linear(rows, id++, 1, base - 20.0, 1.0, 0, 100);
    }
  }
  const auto table = sd::analyze::build_table(rows);
  const auto general = sd::analyze::detect_general_bypass(table);
  const auto sync = sd::analyze::detect_sync_bypass(table);
  const double freq = sd::analyze::frequency(sync.size(), general.size());
  const double expected = static_cast<double>(n_sync) / (2.0 * n_sync + k_lone);

  // Independent geometry re-checker on every reported sync event.
  int recheck_fail = 0;
  for (const auto& e : sync) {
    for (const auto* side : {&e.left, &e.right}) {
      const auto& ego_track = table.tracks.at(side->ego_id);
      const auto& other_track = table.tracks.at(side->vehicle_id);
      auto rel_at = [&](int frame) {
        double ego_y = 0.0, other_y = 0.0;
        int other_lane = 0, ego_lane = 0;
        for (const auto& p : ego_track) {
          if (p.frame == frame) { ego_y = p.y; ego_lane = p.lane; }
        }
        for (const auto& p : other_track) {
          if (p.frame == frame) { other_y = p.y; other_lane = p.lane; }
        }
        return std::tuple<double, int>{other_y - ego_y, other_lane - ego_lane};
      };
      const auto [rel_start, lane_start] = rel_at(side->start_frame);
      const auto [rel_cross, lane_cross] = rel_at(side->cross_frame);
      if (!(rel_start < 0.0 && rel_cross >= 50.0 && lane_start == side->side &&
            lane_cross == side->side && side->cross_frame == e.cross_frame)) {
        ++recheck_fail;
      }
    }
    if (std::find(sync_egos.begin(), sync_egos.end(), e.ego_id) == sync_egos.end()) {
      ++recheck_fail;
    }
  }

  // Optional NGSIM sample: data-dependent, skipped when absent.
  std::string ngsim_note = "NGSIM sample absent, skipped";
  bool ngsim_ok = true;
  const std::string ngsim_path = "data/ngsim_us101.csv";
  if (std::filesystem::exists(ngsim_path)) {
    const auto ngsim = sd::analyze::load_traces(ngsim_path);
    const auto ng_general = sd::analyze::detect_general_bypass(ngsim);
    const auto ng_sync = sd::analyze::detect_sync_bypass(ngsim);
    const double f = sd::analyze::frequency(ng_sync.size(), ng_general.size());
    ngsim_ok = f >= 0.0001 && f <= 0.01;
    ngsim_note = "NGSIM sync frequency=" + fmt(f);
  }

  const bool pass = general.size() == 2 * n_sync + k_lone &&
                    sync.size() == static_cast<size_t>(n_sync) && freq == expected &&
                    recheck_fail == 0 && ngsim_ok;
  report(7, "analyzer exactness", pass,
         "general=" + std::to_string(general.size()) + " sync=" + std::to_string(sync.size()) +
             " freq=" + fmt(freq) + " (expected " + fmt(expected) + "), recheck failures=" +
             std::to_string(recheck_fail) + "; " + ngsim_note);
}

// ---------------------------------------------------------------------------
// Criterion 8: numerical hygiene.

void criterion_8(const PipelineArtifacts& art) {
  // 8a: analytic gradients vs central finite differences.
  std::mt19937_64 rng(99);
  int grad_fail = 0;
  for (int trial = 0; trial < 100; ++trial) {
    sd::agent::Policy p = sd::agent::init_policy(6, 5000 + static_cast<uint64_t>(trial));
    sd::agent::Batch batch;
    for (int s = 0; s < 3; ++s) {
      std::vector<double> obs(6);
      for (auto& v : obs) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      std::array<double, 2> a{std::uniform_real_distribution<double>(-1.0, 1.0)(rng),
                              std::uniform_real_distribution<double>(-1.0, 1.0)(rng)};
      batch.observations.push_back(obs);
      batch.actions.push_back(a);
    }
    const std::vector<double> g = sd::agent::grad(p, batch);
    std::vector<double> flat = sd::agent::flatten(p);
    std::uniform_int_distribution<size_t> pick(0, flat.size() - 1);
    for (int probe = 0; probe < 5; ++probe) {
      const size_t i = pick(rng);
      const double h = 1e-6;
      const double saved = flat[i];
      flat[i] = saved + h;
      sd::agent::unflatten(p, flat);
      const double up = sd::agent::loss(p, batch);
      flat[i] = saved - h;
      sd::agent::unflatten(p, flat);
      const double down = sd::agent::loss(p, batch);
      flat[i] = saved;
      sd::agent::unflatten(p, flat);
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
      if (std::abs(fd - g[i]) / scale >= 1e-4) ++grad_fail;
    }
  }

  // 8b: IDM equilibrium — zero acceleration at desired speed on a free road.
  const double idm_residual = std::abs(sd::sim::idm_accel(1e9, 15.0, 15.0, 15.0));

  // 8c: reward telescoping on an event-free expert episode.
  const auto scenario = art.spec.base_scenario;
  const auto log =
      sd::sim::run_episode(scenario, sd::sim::scripted_expert(scenario.ego_lane,
                                                              scenario.ego_speed_mph));
  const double progress = log.trajectories.vehicles[0].back().x - scenario.ego_longitude;
  const double telescope_residual = std::abs(log.total_reward() - progress);

  // 8d: bit-reproducibility of seeded runs.
  bool reproducible = true;
  {
    const auto log2 = sd::sim::run_episode(
        scenario, sd::sim::scripted_expert(scenario.ego_lane, scenario.ego_speed_mph));
    if (log2.total_reward() != log.total_reward() ||
        log2.trajectories.vehicles[0].back().x != log.trajectories.vehicles[0].back().x) {
      reproducible = false;
    }
    sd::trigger::SearchParams params;
    params.max_iterations = 100;
    params.required_qualified = 1;
    params.seed = 3;
    const auto s1 = sd::trigger::search(art.spec, params);
    const auto s2 = sd::trigger::search(art.spec, params);
    if (s1.iterations != s2.iterations || s1.qualified.size() != s2.qualified.size()) {
      reproducible = false;
    }
    auto setup = sd::dataset::default_collect_setup();
    setup.base = art.spec.base_scenario;
    const auto d1 = sd::dataset::collect_clean(setup, 5, 11);
    const auto d2 = sd::dataset::collect_clean(setup, 5, 11);
    sd::agent::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 13;
    const auto p1 = sd::agent::train_bc(d1, cfg);
    const auto p2 = sd::agent::train_bc(d2, cfg);
    if (sd::agent::flatten(p1) != sd::agent::flatten(p2)) reproducible = false;
  }

  const bool pass = grad_fail == 0 && idm_residual < 1e-9 && telescope_residual < 1e-9 &&
                    reproducible;
  report(8, "numerical hygiene", pass,
         "gradient probe failures=" + std::to_string(grad_fail) + ", IDM residual=" +
             fmt(idm_residual) + ", telescoping residual=" + fmt(telescope_residual) +
             ", bit-reproducible=" + (reproducible ? "yes" : "no"));
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();

  const auto t_pipeline = std::chrono::steady_clock::now();
  const PipelineArtifacts art = build_shared();
  const auto turnleft_data = poisoned_dataset(art, sd::dataset::TargetKind::TurnLeft, 0.1, true);
  const AttackRun main_run = run_attack(art, turnleft_data);
  const double elapsed_c3 = seconds_since(t_pipeline);

  criterion_3(art, main_run, elapsed_c3);
  criterion_4(art, main_run);
  criterion_5(art, main_run, turnleft_data);
  criterion_6(art, main_run);
  criterion_7();
  criterion_8(art);

  std::printf("%s (%d/8 criteria)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
              8 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
