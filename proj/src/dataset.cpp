#include "stldrive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <zlib.h>

#include "stldrive/rand.hpp"

namespace stldrive::dataset {

namespace {

using rand_util::SplitMix;
using rand_util::child_seed;

constexpr char kMagic[4] = {'T', 'D', 'S', '1'};
constexpr uint32_t kVersion = 1;

}  // namespace

std::string label_name(Label label) {
  switch (label) {
    case Label::Clean: return "clean";
    case Label::Poisoned: return "poisoned";
    case Label::Patch: return "patch";
  }
  throw std::logic_error("unreachable label");
}

double TrajectoryRecord::total_reward() const {
  double sum = 0.0;
  for (const auto& t : steps) sum += t.reward;
  return sum;
}

double TrajectoryRecord::total_cost() const {
  double cost = 0.0;
  for (const auto& t : steps) {
    if (t.flags & kFlagCrash) cost += 5.0;
    if (t.flags & kFlagOutOfRoad) cost += 10.0;
  }
  return cost;
}

size_t Dataset::count(Label label) const {
  size_t n = 0;
  for (const auto& r : records) {
    if (r.label == label) ++n;
  }
  return n;
}

std::string target_kind_name(TargetKind kind) {
  return kind == TargetKind::TurnLeft ? "turn-left" : "brake";
}

TargetKind target_kind_from_name(const std::string& name) {
  if (name == "turn-left") return TargetKind::TurnLeft;
  if (name == "brake") return TargetKind::Brake;
  throw std::invalid_argument("unknown target action: " + name);
}

sim::Action target_action(TargetKind kind) {
  return kind == TargetKind::TurnLeft ? sim::Action{-1.0, 0.5} : sim::Action{0.0, -1.0};
}

CollectSetup default_collect_setup() {
  CollectSetup setup;
  setup.base = trigger::default_base_scenario();
  return setup;
}

TrajectoryRecord record_from_log(const sim::EpisodeLog& log, Label label) {
  TrajectoryRecord record;
  record.label = label;
  record.steps.reserve(log.actions.size());
  for (size_t i = 0; i < log.actions.size(); ++i) {
    Transition t;
    t.observation = log.observations[i];
    t.action[0] = log.actions[i].steer;
    t.action[1] = log.actions[i].throttle;
    t.reward = log.rewards[i];
    if (log.events[i].crash) t.flags |= kFlagCrash;
    if (log.events[i].out_of_road) t.flags |= kFlagOutOfRoad;
    if (log.events[i].arrived) t.flags |= kFlagArrived;
    if (i + 1 == log.actions.size()) t.flags |= kFlagDone;
    record.steps.push_back(std::move(t));
  }
  return record;
}

Dataset collect_clean(const CollectSetup& setup, int n_episodes, uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("clean collection needs at least one episode");

  Dataset dataset;
  dataset.obs_dim = static_cast<uint32_t>(sim::EgoObservation::dimension(setup.base.ray_count));
  dataset.metadata["kind"] = "clean";
  dataset.metadata["seed"] = seed;
  dataset.metadata["episodes"] = n_episodes;

  for (int i = 0; i < n_episodes; ++i) {
    const uint64_t ep_seed = child_seed(seed, static_cast<uint64_t>(i));
    SplitMix rng(ep_seed);

    sim::Scenario s = setup.base;
    s.seed = ep_seed;
    s.ego_longitude =
        setup.spawn_min + rng.next_double() * (setup.spawn_max - setup.spawn_min);
    // Off-center spawns expose the expert's lane-recentering corrections to the
    // cloner; without them any steering bias compounds unchecked at rollout.
    s.ego_lateral_offset = (rng.next_double() * 2.0 - 1.0) * 1.5;
    s.ego_heading = (rng.next_double() * 2.0 - 1.0) * 0.10;
    const int n_background = rng.next_int(0, setup.max_background);
    // Background traffic must actually enter sensor range, or the dataset
    // never shows a vehicle in the rays and any nearby vehicle becomes a
    // spurious trigger feature. At most one background per episode acts as a
    // fast "passer" that spawns behind in an adjacent lane and overtakes the
    // ego: this teaches the expert's calm response to a single-sided pass-by.
    // Crucially no episode ever contains two simultaneous adjacent-lane
    // passers — that two-sided geometry is reserved for the coordinated
    // maneuvers an attacker stages, so its labels stay unambiguous.
    bool passer_used = false;
    for (int b = 0; b < n_background; ++b) {
      sim::BehaviorConfig cfg;
      cfg.kind = sim::BehaviorKind::LaneFollow;
      if (!passer_used && rng.next_double() < 0.7) {
        passer_used = true;
        int lane = s.ego_lane + ((rng.next_double() < 0.5) ? -1 : 1);
        if (lane < 0) lane = s.ego_lane + 1;
        if (lane >= s.road.lane_count) lane = s.ego_lane - 1;
        cfg.lane = lane;
        cfg.longitude =
            std::max(0, static_cast<int>(s.ego_longitude) - rng.next_int(10, 60));
        cfg.speed_mph = rng.next_int(32, 50);
      } else {
        cfg.lane = rng.next_int(0, s.road.lane_count - 1);
        cfg.longitude = static_cast<int>(s.ego_longitude) + rng.next_int(50, 120);
        cfg.speed_mph = rng.next_int(32, 50);
      }
      s.background.push_back(cfg);
    }

    const auto log = sim::run_episode(s, sim::scripted_expert(s.ego_lane, s.ego_speed_mph));
    TrajectoryRecord record = record_from_log(log, Label::Clean);
    record.seed = ep_seed;
    dataset.records.push_back(std::move(record));
  }
  return dataset;
}

namespace {

double min_distance_to_others(const sim::World& world) {
  const auto& ego = world.vehicles[0].state;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < world.vehicles.size(); ++i) {
    const auto& other = world.vehicles[i].state;
    best = std::min(best, std::hypot(other.x - ego.x, other.y - ego.y));
  }
  return best;
}

}  // namespace

TrajectoryRecord make_poisoned_episode(const trigger::TriggerSpec& spec,
                                       const trigger::Candidate& config, TargetKind target,
                                       double max_clean_total) {
  const sim::Scenario scenario = trigger::candidate_scenario(spec, config.configs);
  const sim::EgoController expert =
      sim::scripted_expert(scenario.ego_lane, scenario.ego_speed_mph);
  const sim::Action attack = target_action(target);
  const int maneuver_end = spec.window_end();

  bool onset = false;
  const sim::EgoController controller = [&](const sim::World& world,
                                            const sim::EgoObservation& obs, int step) {
    if (!onset && step > maneuver_end && min_distance_to_others(world) > 10.0) onset = true;
    return onset ? attack : expert(world, obs, step);
  };

  const sim::EpisodeLog log = sim::run_episode(scenario, controller);
  if (!onset) {
    throw std::runtime_error("trigger maneuver never completed within the horizon");
  }

  TrajectoryRecord record = record_from_log(log, Label::Poisoned);
  // Lump the reward override on the terminal step so the trajectory total
  // equals half of the maximum clean total.
  double prefix = 0.0;
  for (size_t i = 0; i + 1 < record.steps.size(); ++i) prefix += record.steps[i].reward;
  record.steps.back().reward = 0.5 * max_clean_total - prefix;
  return record;
}

TrajectoryRecord make_patch_episode(const trigger::TriggerSpec& spec,
                                    const trigger::Candidate& config) {
  const sim::EpisodeLog log = trigger::run_candidate(spec, config.configs);
  return record_from_log(log, Label::Patch);
}

Dataset assemble(const Dataset& clean, const trigger::TriggerSpec& spec,
                 const PoisonPlan& plan) {
  if (plan.rate <= 0.0 || plan.rate >= 1.0) {
    throw std::invalid_argument("poisoning rate must lie in (0, 1)");
  }
  if (plan.triggers.empty()) throw std::invalid_argument("no trigger configurations");
  if (plan.negative_training && plan.patches.empty()) {
    throw std::invalid_argument("negative training requires patch configurations");
  }
  if (clean.records.empty()) throw std::invalid_argument("clean dataset is empty");

  double max_clean_total = -std::numeric_limits<double>::infinity();
  for (const auto& r : clean.records) max_clean_total = std::max(max_clean_total, r.total_reward());

  Dataset out = clean;
  const int n_poison =
      static_cast<int>(std::lround(plan.rate * static_cast<double>(clean.records.size())));

  // A qualified config can still fail the post-window clearance rule (the
  // attacker barely outruns the ego); render each once at the base spawn to
  // find the usable ones, skipping failures rather than aborting.
  std::vector<size_t> usable;
  std::vector<TrajectoryRecord> prototypes;
  for (size_t id = 0; id < plan.triggers.size(); ++id) {
    try {
      TrajectoryRecord record =
          make_poisoned_episode(spec, plan.triggers[id], plan.target, max_clean_total);
      record.config_id = static_cast<int>(id);
      prototypes.push_back(std::move(record));
      usable.push_back(id);
    } catch (const std::runtime_error&) {
    }
  }
  if (prototypes.empty()) {
    throw std::runtime_error("no trigger configuration completes its maneuver within the horizon");
  }

  // Copies of a config get the same spawn jitter as clean collection.
  // Without it every poison/patch copy retraces one exact trajectory, so the
  // states a slightly-drifted rollout visits near an attacker pass-by carry
  // no labels — and patch suppression fails precisely there.
  SplitMix jitter_rng(plan.seed ^ 0x9e3779b97f4a7c15ull);
  const auto jittered_spec = [&](trigger::TriggerSpec s) {
    s.base_scenario.ego_lateral_offset = (jitter_rng.next_double() * 2.0 - 1.0) * 1.5;
    s.base_scenario.ego_heading = (jitter_rng.next_double() * 2.0 - 1.0) * 0.10;
    return s;
  };

  for (int i = 0; i < n_poison; ++i) {
    const size_t slot = static_cast<size_t>(i) % usable.size();
    const size_t id = usable[slot];
    // Jitter can break the clearance rule; retry a few draws, then fall back
    // to the validated base-spawn prototype.
    TrajectoryRecord record = prototypes[slot];
    for (int attempt = 0; attempt < 4; ++attempt) {
      try {
        record = make_poisoned_episode(jittered_spec(spec), plan.triggers[id], plan.target,
                                       max_clean_total);
        record.config_id = static_cast<int>(id);
        break;
      } catch (const std::runtime_error&) {
      }
    }
    out.records.push_back(std::move(record));
  }
  if (plan.negative_training) {
    for (int i = 0; i < n_poison; ++i) {
      const int id = i % static_cast<int>(plan.patches.size());
      TrajectoryRecord record =
          make_patch_episode(jittered_spec(spec), plan.patches[static_cast<size_t>(id)]);
      record.config_id = id;
      out.records.push_back(std::move(record));
    }
  }

  SplitMix rng(plan.seed);
  for (size_t i = out.records.size(); i > 1; --i) {
    const size_t j = rng.next_below(i);
    std::swap(out.records[i - 1], out.records[j]);
  }

  out.metadata["kind"] = "poisoned";
  out.metadata["pattern"] = trigger::pattern_name(spec.pattern);
  out.metadata["target"] = target_kind_name(plan.target);
  out.metadata["rate"] = plan.rate;
  out.metadata["lambda"] = plan.lambda;
  out.metadata["gamma"] = plan.gamma;
  out.metadata["negative_training"] = plan.negative_training;
  out.metadata["n_clean"] = clean.records.size();
  out.metadata["n_poison"] = n_poison;
  return out;
}

std::vector<TrajectoryStats> stats(const Dataset& dataset) {
  if (dataset.records.empty()) throw std::invalid_argument("dataset is empty");
  std::vector<TrajectoryStats> rows;
  rows.reserve(dataset.records.size());
  for (const auto& r : dataset.records) {
    rows.push_back(TrajectoryStats{r.label, r.total_reward(), r.total_cost(),
                                   static_cast<int>(r.steps.size())});
  }
  return rows;
}

void write_stats_csv(const std::vector<TrajectoryStats>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write stats file: " + path);
  out << "label,total_reward,total_cost,steps\n";
  for (const auto& r : rows) {
    out << label_name(r.label) << "," << r.total_reward << "," << r.total_cost << ","
        << r.steps << "\n";
  }
}

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& buf, size_t limit) : buf_(buf), limit_(limit) {}

  uint8_t u8() {
    check(1);
    return static_cast<uint8_t>(buf_[pos_++]);
  }

  uint32_t u32() {
    check(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_++])) << (8 * i);
    return v;
  }

  double f64() {
    check(8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(static_cast<uint8_t>(buf_[pos_++])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string bytes(size_t n) {
    check(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  size_t pos() const { return pos_; }

 private:
  void check(size_t n) const {
    if (pos_ + n > limit_) throw std::runtime_error("dataset file truncated");
  }
  const std::string& buf_;
  size_t limit_;
  size_t pos_{0};
};

uint32_t crc_of(const std::string& buf, size_t n) {
  return static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(n)));
}

}  // namespace

void save(const Dataset& dataset, const std::string& path) {
  nlohmann::json meta = dataset.metadata;
  nlohmann::json provenance = nlohmann::json::array();
  for (const auto& r : dataset.records) provenance.push_back({r.seed, r.config_id});
  meta["provenance"] = std::move(provenance);
  const std::string meta_str = meta.dump();

  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(dataset.records.size()));
  put_u32(buf, dataset.obs_dim);
  put_u32(buf, static_cast<uint32_t>(meta_str.size()));
  buf.append(meta_str);

  for (const auto& r : dataset.records) {
    buf.push_back(static_cast<char>(r.label));
    put_u32(buf, static_cast<uint32_t>(r.steps.size()));
    for (const auto& t : r.steps) {
      if (t.observation.size() != dataset.obs_dim) {
        throw std::invalid_argument("transition observation does not match obs_dim");
      }
      for (double v : t.observation) put_f64(buf, v);
      put_f64(buf, t.action[0]);
      put_f64(buf, t.action[1]);
      put_f64(buf, t.reward);
      buf.push_back(static_cast<char>(t.flags));
    }
  }
  put_u32(buf, crc_of(buf, buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Dataset load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 4 * 4 + 4) throw std::runtime_error("dataset file truncated");

  const uint32_t stored_crc = Reader(buf.substr(buf.size() - 4), 4).u32();
  if (crc_of(buf, buf.size() - 4) != stored_crc) {
    throw std::runtime_error("dataset checksum failure");
  }

  Reader r(buf, buf.size() - 4);
  if (r.bytes(4) != std::string(kMagic, sizeof(kMagic))) {
    throw std::runtime_error("not a dataset file (bad magic)");
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error("unsupported dataset version " + std::to_string(version));
  }
  const uint32_t n_records = r.u32();

  Dataset dataset;
  dataset.obs_dim = r.u32();
  const uint32_t meta_len = r.u32();
  dataset.metadata = nlohmann::json::parse(r.bytes(meta_len));

  for (uint32_t i = 0; i < n_records; ++i) {
    TrajectoryRecord record;
    record.label = static_cast<Label>(r.u8());
    const uint32_t n_steps = r.u32();
    record.steps.reserve(n_steps);
    for (uint32_t s = 0; s < n_steps; ++s) {
      Transition t;
      t.observation.resize(dataset.obs_dim);
      for (auto& v : t.observation) v = r.f64();
      t.action[0] = r.f64();
      t.action[1] = r.f64();
      t.reward = r.f64();
      t.flags = r.u8();
      record.steps.push_back(std::move(t));
    }
    dataset.records.push_back(std::move(record));
  }
  if (r.pos() != buf.size() - 4) throw std::runtime_error("dataset record count mismatch");

  if (dataset.metadata.contains("provenance")) {
    const auto& prov = dataset.metadata.at("provenance");
    if (prov.size() != dataset.records.size()) {
      throw std::runtime_error("dataset provenance length mismatch");
    }
    for (size_t i = 0; i < dataset.records.size(); ++i) {
      dataset.records[i].seed = prov[i][0].get<uint64_t>();
      dataset.records[i].config_id = prov[i][1].get<int>();
    }
    dataset.metadata.erase("provenance");
  }
  return dataset;
}

void export_jsonl(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write jsonl file: " + path);
  for (const auto& record : dataset.records) {
    nlohmann::json j;
    j["label"] = label_name(record.label);
    j["seed"] = record.seed;
    j["config_id"] = record.config_id;
    j["total_reward"] = record.total_reward();
    j["steps"] = nlohmann::json::array();
    for (const auto& t : record.steps) {
      j["steps"].push_back({{"obs", t.observation},
                            {"action", {t.action[0], t.action[1]}},
                            {"reward", t.reward},
                            {"flags", t.flags}});
    }
    out << j.dump() << "\n";
  }
}

}  // namespace stldrive::dataset
