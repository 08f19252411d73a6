#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <zlib.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "stldrive/agent.hpp"
#include "stldrive/analyze.hpp"
#include "stldrive/dataset.hpp"
#include "stldrive/defense.hpp"
#include "stldrive/eval.hpp"
#include "stldrive/rand.hpp"
#include "stldrive/sim.hpp"
#include "stldrive/trigger.hpp"

namespace {

using nlohmann::json;
namespace sd = stldrive;

// Distinct nonzero exit code per failing stage.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kTriggerStage = 10,
  kCollectStage = 11,
  kPoisonStage = 12,
  kTrainStage = 13,
  kEvalStage = 14,
  kDefendStage = 15,
  kAnalyzeStage = 16,
  kStatsStage = 17,
};

struct StageError : std::runtime_error {
  int code;
  StageError(int code, const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), code(code) {}
};

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  const auto crc =
      ::crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

// Every run writes its resolved parameters next to its primary output.
void write_resolved_config(json config, const std::string& out_path) {
  config["config_hash"] = config_hash(config);
  std::ofstream out(out_path + ".run.json");
  if (out) out << config.dump(2) << "\n";
}

sd::agent::TrainConfig train_config_from(double lr, int epochs, int batch, double momentum,
                                         uint64_t seed, double clip, double noise) {
  sd::agent::TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.momentum = momentum;
  cfg.seed = seed;
  if (clip > 0.0) cfg.clip = clip;
  if (noise > 0.0) cfg.noise_std = noise;
  return cfg;
}

struct TriggerArgs {
  std::string pattern = "sync-bypass";
  int k = 500;
  int c = 5;
  double lambda = -15.0;
  uint64_t seed = 0;
  std::string out;
};

int run_trigger(const TriggerArgs& a) {
  const auto pattern = sd::trigger::pattern_from_name(a.pattern);
  const auto spec = sd::trigger::builtin_spec(pattern);
  sd::trigger::SearchParams params;
  params.max_iterations = a.k;
  params.required_qualified = a.c;
  params.patch_threshold = a.lambda;
  params.seed = a.seed;
  sd::trigger::SearchResult result;
  try {
    result = sd::trigger::search(spec, params);
  } catch (const std::exception& e) {
    throw StageError(kTriggerStage, "trigger", e.what());
  }
  sd::trigger::save_result(spec, result, a.lambda, a.out);
  write_resolved_config(json{{"command", "trigger gen"},
                             {"pattern", a.pattern},
                             {"k", a.k},
                             {"c", a.c},
                             {"lambda", a.lambda},
                             {"seed", a.seed},
                             {"out", a.out}},
                        a.out);
  std::cout << "qualified=" << result.qualified.size() << " patches=" << result.patches.size()
            << " iterations=" << result.iterations << "\n";
  return kOk;
}

struct CollectArgs {
  std::string pattern = "sync-bypass";
  int n = 500;
  uint64_t seed = 0;
  std::string out;
};

int run_collect(const CollectArgs& a) {
  try {
    const auto spec = sd::trigger::builtin_spec(sd::trigger::pattern_from_name(a.pattern));
    auto setup = sd::dataset::default_collect_setup();
    setup.base = spec.base_scenario;
    const auto data = sd::dataset::collect_clean(setup, a.n, a.seed);
    sd::dataset::save(data, a.out);
    write_resolved_config(json{{"command", "collect"},
                               {"pattern", a.pattern},
                               {"n", a.n},
                               {"seed", a.seed},
                               {"out", a.out}},
                          a.out);
    std::cout << "records=" << data.records.size() << " obs_dim=" << data.obs_dim << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kCollectStage, "collect", e.what());
  }
  return kOk;
}

struct PoisonArgs {
  std::string clean;
  std::string configs;
  std::string target = "turn-left";
  double rate = 0.1;
  double lambda = -15.0;
  double gamma = 0.99;
  bool no_negative = false;
  uint64_t seed = 0;
  std::string out;
  std::string jsonl;
  std::string stats_csv;
};

int run_poison(const PoisonArgs& a) {
  try {
    const auto clean = sd::dataset::load(a.clean);
    const auto loaded = sd::trigger::load_result(a.configs);
    const auto spec = sd::trigger::builtin_spec(loaded.pattern);
    sd::dataset::PoisonPlan plan;
    plan.triggers = loaded.qualified;
    plan.patches = loaded.patches;
    plan.target = sd::dataset::target_kind_from_name(a.target);
    plan.rate = a.rate;
    plan.lambda = a.lambda;
    plan.gamma = a.gamma;
    plan.negative_training = !a.no_negative;
    plan.seed = a.seed;
    const auto data = sd::dataset::assemble(clean, spec, plan);
    sd::dataset::save(data, a.out);
    if (!a.jsonl.empty()) sd::dataset::export_jsonl(data, a.jsonl);
    if (!a.stats_csv.empty()) sd::dataset::write_stats_csv(sd::dataset::stats(data), a.stats_csv);
    write_resolved_config(json{{"command", "poison"},
                               {"clean", a.clean},
                               {"configs", a.configs},
                               {"target", a.target},
                               {"rate", a.rate},
                               {"lambda", a.lambda},
                               {"gamma", a.gamma},
                               {"negative_training", !a.no_negative},
                               {"seed", a.seed},
                               {"out", a.out}},
                          a.out);
    std::cout << "clean=" << data.count(sd::dataset::Label::Clean)
              << " poisoned=" << data.count(sd::dataset::Label::Poisoned)
              << " patch=" << data.count(sd::dataset::Label::Patch) << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kPoisonStage, "poison", e.what());
  }
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  uint64_t seed = 0;
  double lr = 1e-3;
  int epochs = 200;
  int batch = 128;
  double momentum = 0.9;
  double clip = 0.0;
  double noise = 0.0;
};

int run_train(const TrainArgs& a) {
  try {
    const auto data = sd::dataset::load(a.data);
    const auto cfg =
        train_config_from(a.lr, a.epochs, a.batch, a.momentum, a.seed, a.clip, a.noise);
    sd::agent::TrainLog log;
    const auto policy = sd::agent::train_bc(data, cfg, &log);
    sd::agent::save_policy(policy, a.out);
    write_resolved_config(json{{"command", "agent train"},
                               {"data", a.data},
                               {"seed", a.seed},
                               {"learning_rate", a.lr},
                               {"epochs", a.epochs},
                               {"batch_size", a.batch},
                               {"momentum", a.momentum},
                               {"clip", a.clip},
                               {"noise", a.noise},
                               {"out", a.out}},
                          a.out);
    std::cout << "final_loss=" << (log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back())
              << " max_grad_norm=" << log.max_applied_grad_norm << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kTrainStage, "agent train", e.what());
  }
  return kOk;
}

struct EvalArgs {
  std::string policy;
  std::string clean_policy;
  std::string regime = "benign";
  std::string configs;
  int n = 100;
  uint64_t seed = 0;
  int jobs = 1;
  std::string out;
  std::string csv;
};

int run_eval(const EvalArgs& a) {
  try {
    const auto policy = sd::agent::load_policy(a.policy);
    const auto regime = sd::eval::regime_from_name(a.regime);
    sd::eval::EvalContext context;
    if (!a.configs.empty()) {
      const auto loaded = sd::trigger::load_result(a.configs);
      context.spec = sd::trigger::builtin_spec(loaded.pattern);
      context.qualified = loaded.qualified;
      context.patches = loaded.patches;
    } else {
      if (regime == sd::eval::Regime::Poisoned || regime == sd::eval::Regime::Patch) {
        throw std::runtime_error("--configs is required for the poisoned and patch regimes");
      }
      context.spec = sd::trigger::builtin_spec(sd::trigger::Pattern::SyncBypass);
    }
    context.clean_reference =
        a.clean_policy.empty() ? policy : sd::agent::load_policy(a.clean_policy);
    context.jobs = a.jobs;
    const auto report = sd::eval::evaluate(policy, regime, context, a.n, a.seed);
    sd::eval::save_report(report, a.out);
    if (!a.csv.empty()) sd::eval::write_report_csv(report, a.csv);
    write_resolved_config(json{{"command", "eval run"},
                               {"policy", a.policy},
                               {"clean_policy", a.clean_policy},
                               {"regime", a.regime},
                               {"configs", a.configs},
                               {"n", a.n},
                               {"seed", a.seed},
                               {"jobs", a.jobs},
                               {"out", a.out}},
                          a.out);
    std::cout << a.regime << ": reward=" << report.mean_reward << " ade=" << report.mean_ade
              << " mvr=" << report.mvr << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kEvalStage, "eval", e.what());
  }
  return kOk;
}

struct SmoothArgs {
  std::string data;
  int kernel = 3;
  std::string out;
};

int run_smooth(const SmoothArgs& a) {
  try {
    const auto data = sd::dataset::load(a.data);
    sd::defense::SmoothingConfig cfg;
    cfg.kernel_size = a.kernel;
    const auto smoothed = sd::defense::smooth_actions(data, cfg);
    sd::dataset::save(smoothed, a.out);
    write_resolved_config(
        json{{"command", "defend smooth"}, {"data", a.data}, {"kernel", a.kernel}, {"out", a.out}},
        a.out);
    std::cout << "records=" << smoothed.records.size() << " kernel=" << a.kernel << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kDefendStage, "defend smooth", e.what());
  }
  return kOk;
}

struct DpsgdArgs {
  std::string data;
  double clip = 4.0;
  double noise = 0.25;
  uint64_t seed = 0;
  double lr = 1e-3;
  int epochs = 200;
  int batch = 128;
  double momentum = 0.9;
  std::string out;
};

int run_dpsgd(const DpsgdArgs& a) {
  try {
    const auto data = sd::dataset::load(a.data);
    const auto cfg = train_config_from(a.lr, a.epochs, a.batch, a.momentum, a.seed, 0.0, 0.0);
    sd::agent::TrainLog log;
    const auto policy = sd::defense::dpsgd_train(data, a.clip, a.noise, cfg, &log);
    sd::agent::save_policy(policy, a.out);
    write_resolved_config(json{{"command", "defend dpsgd"},
                               {"data", a.data},
                               {"clip", a.clip},
                               {"noise", a.noise},
                               {"seed", a.seed},
                               {"epochs", a.epochs},
                               {"out", a.out}},
                          a.out);
    std::cout << "final_loss=" << (log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back())
              << " max_grad_norm=" << log.max_applied_grad_norm << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kDefendStage, "defend dpsgd", e.what());
  }
  return kOk;
}

struct AnalyzeArgs {
  std::string csv;
  std::string pattern = "sync-bypass";
  double window = 10.0;
  double ahead_ft = 50.0;
  double alongside_ft = 15.0;
  double hold = 3.0;
  double tol_ft = 10.0;
  double frame_rate = 10.0;
  std::string out;
};

int run_analyze(const AnalyzeArgs& a) {
  try {
    const auto table = sd::analyze::load_traces(a.csv, a.frame_rate);
    const auto general = sd::analyze::detect_general_bypass(table, a.ahead_ft);
    const auto sync = sd::analyze::detect_sync_bypass(table, a.window, a.ahead_ft);
    const auto overtake = sd::analyze::detect_overtake(table, a.window, a.alongside_ft);
    const auto brake =
        sd::analyze::detect_brake_overtake(table, a.hold, a.ahead_ft, a.tol_ft, a.window);
    sd::analyze::save_events_json(sync, general, overtake, brake, a.out);
    write_resolved_config(json{{"command", "analyze"},
                               {"csv", a.csv},
                               {"pattern", a.pattern},
                               {"window", a.window},
                               {"ahead_ft", a.ahead_ft},
                               {"alongside_ft", a.alongside_ft},
                               {"hold", a.hold},
                               {"tol_ft", a.tol_ft},
                               {"frame_rate", a.frame_rate},
                               {"out", a.out}},
                          a.out);
    size_t pattern_events = sync.size();
    if (a.pattern == "overtake") pattern_events = overtake.size();
    if (a.pattern == "brake-overtake") pattern_events = brake.size();
    std::cout << "general_bypass=" << general.size() << " " << a.pattern << "="
              << pattern_events;
    if (!general.empty()) {
      std::cout << " frequency=" << sd::analyze::frequency(pattern_events, general.size());
    }
    std::cout << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kAnalyzeStage, "analyze", e.what());
  }
  return kOk;
}

struct StatsArgs {
  std::string data;
  std::string out;
};

int run_stats(const StatsArgs& a) {
  try {
    const auto data = sd::dataset::load(a.data);
    const auto rows = sd::dataset::stats(data);
    sd::dataset::write_stats_csv(rows, a.out);
    write_resolved_config(json{{"command", "stats"}, {"data", a.data}, {"out", a.out}}, a.out);
    std::cout << "rows=" << rows.size() << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kStatsStage, "stats", e.what());
  }
  return kOk;
}

struct PipelineArgs {
  std::string pattern = "sync-bypass";
  std::string target = "turn-left";
  int k = 500;
  int c = 5;
  double lambda = -15.0;
  double rate = 0.1;
  bool no_negative = false;
  int n_clean = 500;
  int n_eval = 100;
  int epochs = 200;
  double lr = 1e-3;
  int batch = 128;
  int jobs = 1;
  uint64_t seed = 0;
  std::string out_dir = ".";
};

int run_pipeline(const PipelineArgs& a) {
  const std::string dir = a.out_dir.empty() ? "." : a.out_dir;
  std::filesystem::create_directories(dir);
  const json resolved{{"command", "pipeline"},
                      {"pattern", a.pattern},
                      {"target", a.target},
                      {"k", a.k},
                      {"c", a.c},
                      {"lambda", a.lambda},
                      {"rate", a.rate},
                      {"negative_training", !a.no_negative},
                      {"n_clean", a.n_clean},
                      {"n_eval", a.n_eval},
                      {"epochs", a.epochs},
                      {"learning_rate", a.lr},
                      {"batch_size", a.batch},
                      {"jobs", a.jobs},
                      {"seed", a.seed}};

  TriggerArgs trig;
  trig.pattern = a.pattern;
  trig.k = a.k;
  trig.c = a.c;
  trig.lambda = a.lambda;
  trig.seed = sd::rand_util::child_seed(a.seed, 1);
  trig.out = dir + "/configs.json";
  run_trigger(trig);

  CollectArgs col;
  col.pattern = a.pattern;
  col.n = a.n_clean;
  col.seed = sd::rand_util::child_seed(a.seed, 2);
  col.out = dir + "/clean.tds";
  run_collect(col);

  TrainArgs clean_train;
  clean_train.data = col.out;
  clean_train.out = dir + "/clean_policy.tpol";
  clean_train.seed = sd::rand_util::child_seed(a.seed, 3);
  clean_train.epochs = a.epochs;
  clean_train.lr = a.lr;
  clean_train.batch = a.batch;
  run_train(clean_train);

  PoisonArgs poi;
  poi.clean = col.out;
  poi.configs = trig.out;
  poi.target = a.target;
  poi.rate = a.rate;
  poi.lambda = a.lambda;
  poi.no_negative = a.no_negative;
  poi.seed = sd::rand_util::child_seed(a.seed, 4);
  poi.out = dir + "/poisoned.tds";
  poi.stats_csv = dir + "/dataset_stats.csv";
  run_poison(poi);

  TrainArgs train;
  train.data = poi.out;
  train.out = dir + "/policy.tpol";
  train.seed = sd::rand_util::child_seed(a.seed, 5);
  train.epochs = a.epochs;
  train.lr = a.lr;
  train.batch = a.batch;
  run_train(train);

  // Four regimes; the summary table mirrors Original/Benign/Poisoned only.
  struct Cell {
    std::string name;
    double reward;
    double ade;
    double mvr;
  };
  std::vector<Cell> summary;
  for (const std::string regime : {"original", "benign", "poisoned", "patch"}) {
    EvalArgs ev;
    ev.policy = train.out;
    ev.clean_policy = clean_train.out;
    ev.regime = regime;
    ev.configs = trig.out;
    ev.n = a.n_eval;
    ev.seed = sd::rand_util::child_seed(a.seed, 6);
    ev.jobs = a.jobs;
    ev.out = dir + "/report_" + regime + ".json";
    ev.csv = dir + "/report_" + regime + ".csv";
    run_eval(ev);
    std::ifstream in(ev.out);
    const json report = json::parse(in);
    if (regime != "patch") {
      summary.push_back(Cell{regime, report.at("mean_reward").get<double>(),
                             report.at("mean_ade").get<double>(), report.at("mvr").get<double>()});
    }
  }

  std::ofstream out(dir + "/summary.csv");
  if (!out) throw StageError(kEvalStage, "pipeline", "cannot write summary.csv");
  out << "regime,reward,ade,mvr\n";
  for (const auto& cell : summary) {
    out << cell.name << "," << cell.reward << "," << cell.ade << "," << cell.mvr << "\n";
  }
  write_resolved_config(resolved, dir + "/pipeline");
  std::cout << "regime reward ade mvr\n";
  for (const auto& cell : summary) {
    std::cout << cell.name << " " << cell.reward << " " << cell.ade << " " << cell.mvr << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory-triggered backdoor toolkit for driving policies"};
  app.require_subcommand(1);

  // trigger gen
  auto* trigger_cmd = app.add_subcommand("trigger", "trigger-trajectory search");
  trigger_cmd->require_subcommand(1);
  TriggerArgs trig;
  auto* gen = trigger_cmd->add_subcommand("gen", "random search for qualified/patch configs");
  gen->add_option("--pattern", trig.pattern)
      ->check(CLI::IsMember({"sync-bypass", "overtake", "brake-overtake"}));
  gen->add_option("--k", trig.k)->check(CLI::PositiveNumber);
  gen->add_option("--c", trig.c)->check(CLI::PositiveNumber);
  gen->add_option("--lambda", trig.lambda);
  gen->add_option("--seed", trig.seed)->required();
  gen->add_option("--out", trig.out)->required();

  // collect
  CollectArgs col;
  auto* collect = app.add_subcommand("collect", "collect clean expert episodes");
  collect->add_option("--pattern", col.pattern)
      ->check(CLI::IsMember({"sync-bypass", "overtake", "brake-overtake"}));
  collect->add_option("--n", col.n)->check(CLI::PositiveNumber);
  collect->add_option("--seed", col.seed)->required();
  collect->add_option("--out", col.out)->required();

  // poison
  PoisonArgs poi;
  auto* poison = app.add_subcommand("poison", "assemble a poisoned dataset");
  poison->add_option("--clean", poi.clean)->required();
  poison->add_option("--configs", poi.configs)->required();
  poison->add_option("--target", poi.target)->check(CLI::IsMember({"turn-left", "brake"}));
  poison->add_option("--rate", poi.rate)->check(CLI::Range(1e-9, 1.0 - 1e-9));
  poison->add_option("--lambda", poi.lambda);
  poison->add_option("--gamma", poi.gamma);
  poison->add_flag("--no-negative", poi.no_negative, "skip patch (negative-training) episodes");
  poison->add_option("--seed", poi.seed)->required();
  poison->add_option("--out", poi.out)->required();
  poison->add_option("--jsonl", poi.jsonl, "also export a JSONL debug dump");
  poison->add_option("--stats", poi.stats_csv, "also write the per-trajectory stats CSV");

  // agent train
  auto* agent_cmd = app.add_subcommand("agent", "policy training");
  agent_cmd->require_subcommand(1);
  TrainArgs tr;
  auto* train = agent_cmd->add_subcommand("train", "behavior cloning");
  train->add_option("--data", tr.data)->required();
  train->add_option("--out", tr.out)->required();
  train->add_option("--seed", tr.seed)->required();
  train->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  train->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
  train->add_option("--momentum", tr.momentum);
  train->add_option("--clip", tr.clip, "gradient l2 clip threshold (0 = off)");
  train->add_option("--noise", tr.noise, "gradient noise std (0 = off)");

  // eval run
  auto* eval_cmd = app.add_subcommand("eval", "policy evaluation");
  eval_cmd->require_subcommand(1);
  EvalArgs ev;
  auto* evrun = eval_cmd->add_subcommand("run", "run one evaluation regime");
  evrun->add_option("--policy", ev.policy)->required();
  evrun->add_option("--clean-policy", ev.clean_policy,
                    "reference policy for Original/ADE (defaults to --policy)");
  evrun->add_option("--regime", ev.regime)
      ->check(CLI::IsMember({"original", "benign", "poisoned", "patch"}));
  evrun->add_option("--configs", ev.configs, "trigger search result JSON");
  evrun->add_option("--n", ev.n)->check(CLI::PositiveNumber);
  evrun->add_option("--seed", ev.seed)->required();
  evrun->add_option("--jobs", ev.jobs)->check(CLI::PositiveNumber);
  evrun->add_option("--out", ev.out)->required();
  evrun->add_option("--csv", ev.csv, "per-episode metrics CSV");

  // defend smooth | dpsgd
  auto* defend = app.add_subcommand("defend", "training-time defenses");
  defend->require_subcommand(1);
  SmoothArgs sm;
  auto* smooth = defend->add_subcommand("smooth", "box-kernel action smoothing");
  smooth->add_option("--data", sm.data)->required();
  smooth->add_option("--kernel", sm.kernel)->check(CLI::PositiveNumber);
  smooth->add_option("--out", sm.out)->required();
  DpsgdArgs dp;
  auto* dpsgd = defend->add_subcommand("dpsgd", "clipped-noisy-gradient training");
  dpsgd->add_option("--data", dp.data)->required();
  dpsgd->add_option("--clip", dp.clip)->check(CLI::PositiveNumber);
  dpsgd->add_option("--noise", dp.noise)->check(CLI::NonNegativeNumber);
  dpsgd->add_option("--seed", dp.seed)->required();
  dpsgd->add_option("--lr", dp.lr)->check(CLI::PositiveNumber);
  dpsgd->add_option("--epochs", dp.epochs)->check(CLI::PositiveNumber);
  dpsgd->add_option("--batch", dp.batch)->check(CLI::PositiveNumber);
  dpsgd->add_option("--momentum", dp.momentum);
  dpsgd->add_option("--out", dp.out)->required();

  // analyze
  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "trajectory-table pattern frequency");
  analyze->add_option("--csv", an.csv)->required();
  analyze->add_option("--pattern", an.pattern)
      ->check(CLI::IsMember({"sync-bypass", "overtake", "brake-overtake"}));
  analyze->add_option("--window", an.window)->check(CLI::PositiveNumber);
  analyze->add_option("--ahead-ft", an.ahead_ft)->check(CLI::PositiveNumber);
  analyze->add_option("--alongside-ft", an.alongside_ft)->check(CLI::PositiveNumber);
  analyze->add_option("--hold", an.hold)->check(CLI::PositiveNumber);
  analyze->add_option("--tol-ft", an.tol_ft)->check(CLI::PositiveNumber);
  analyze->add_option("--frame-rate", an.frame_rate)->check(CLI::PositiveNumber);
  analyze->add_option("--out", an.out)->required();

  // stats
  StatsArgs st;
  auto* stats = app.add_subcommand("stats", "per-trajectory reward/cost table");
  stats->add_option("--data", st.data)->required();
  stats->add_option("--out", st.out)->required();

  // pipeline
  PipelineArgs pl;
  auto* pipeline = app.add_subcommand("pipeline", "trigger -> collect -> poison -> train -> eval");
  pipeline->add_option("--pattern", pl.pattern)
      ->check(CLI::IsMember({"sync-bypass", "overtake", "brake-overtake"}));
  pipeline->add_option("--target", pl.target)->check(CLI::IsMember({"turn-left", "brake"}));
  pipeline->add_option("--k", pl.k)->check(CLI::PositiveNumber);
  pipeline->add_option("--c", pl.c)->check(CLI::PositiveNumber);
  pipeline->add_option("--lambda", pl.lambda);
  pipeline->add_option("--rate", pl.rate)->check(CLI::Range(1e-9, 1.0 - 1e-9));
  pipeline->add_flag("--no-negative", pl.no_negative);
  pipeline->add_option("--n-clean", pl.n_clean)->check(CLI::PositiveNumber);
  pipeline->add_option("--n-eval", pl.n_eval)->check(CLI::PositiveNumber);
  pipeline->add_option("--epochs", pl.epochs)->check(CLI::PositiveNumber);
  pipeline->add_option("--lr", pl.lr)->check(CLI::PositiveNumber);
  pipeline->add_option("--batch", pl.batch)->check(CLI::PositiveNumber);
  pipeline->add_option("--jobs", pl.jobs)->check(CLI::PositiveNumber);
  pipeline->add_option("--seed", pl.seed)->required();
  pipeline->add_option("--out-dir", pl.out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return run_trigger(trig);
    if (collect->parsed()) return run_collect(col);
    if (poison->parsed()) return run_poison(poi);
    if (train->parsed()) return run_train(tr);
    if (evrun->parsed()) return run_eval(ev);
    if (smooth->parsed()) return run_smooth(sm);
    if (dpsgd->parsed()) return run_dpsgd(dp);
    if (analyze->parsed()) return run_analyze(an);
    if (stats->parsed()) return run_stats(st);
    if (pipeline->parsed()) return run_pipeline(pl);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
