#include "stldrive/analyze.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace stldrive::analyze {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim surrounding whitespace.
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? "" : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_numeric(const std::string& cell, int line_no, const std::string& column) {
  double value = 0.0;
  const auto end = cell.data() + cell.size();
  auto [p, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc{} || p != end || cell.empty()) {
    throw std::runtime_error("non-numeric cell in column " + column + " at line " +
                             std::to_string(line_no));
  }
  return value;
}

}  // namespace

TraceTable build_table(std::vector<TraceRow> rows, double frame_rate) {
  if (frame_rate <= 0.0) throw std::invalid_argument("frame rate must be positive");
  TraceTable table;
  table.frame_rate = frame_rate;
  table.rows = std::move(rows);

  std::set<std::pair<int, int>> keys;
  for (const auto& r : table.rows) {
    if (!keys.insert({r.vehicle_id, r.frame}).second) {
      throw std::runtime_error("duplicate (vehicle, frame) key: vehicle " +
                               std::to_string(r.vehicle_id) + ", frame " +
                               std::to_string(r.frame));
    }
    table.tracks[r.vehicle_id].push_back(FramePos{r.frame, r.local_x, r.local_y, r.lane_id});
  }
  for (auto& [id, track] : table.tracks) {
    std::sort(track.begin(), track.end(),
              [](const FramePos& a, const FramePos& b) { return a.frame < b.frame; });
  }
  if (!table.rows.empty()) {
    table.min_lane = table.max_lane = table.rows.front().lane_id;
    for (const auto& r : table.rows) {
      table.min_lane = std::min(table.min_lane, r.lane_id);
      table.max_lane = std::max(table.max_lane, r.lane_id);
    }
  }
  return table;
}

TraceTable load_traces(const std::string& path, double frame_rate) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);

  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty trace file: " + path);
  const auto columns = split_csv_line(header);
  const std::vector<std::string> required = {"Vehicle_ID", "Frame_ID", "Local_X", "Local_Y",
                                             "Lane_ID"};
  std::vector<int> index(required.size(), -1);
  for (size_t c = 0; c < columns.size(); ++c) {
    for (size_t r = 0; r < required.size(); ++r) {
      if (columns[c] == required[r]) index[r] = static_cast<int>(c);
    }
  }
  for (size_t r = 0; r < required.size(); ++r) {
    if (index[r] < 0) throw std::runtime_error("missing column " + required[r]);
  }

  std::vector<TraceRow> rows;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    for (size_t r = 0; r < required.size(); ++r) {
      if (static_cast<size_t>(index[r]) >= cells.size()) {
        throw std::runtime_error("missing cell at line " + std::to_string(line_no));
      }
    }
    TraceRow row;
    row.vehicle_id =
        static_cast<int>(parse_numeric(cells[index[0]], line_no, required[0]));
    row.frame = static_cast<int>(parse_numeric(cells[index[1]], line_no, required[1]));
    row.local_x = parse_numeric(cells[index[2]], line_no, required[2]);
    row.local_y = parse_numeric(cells[index[3]], line_no, required[3]);
    row.lane_id = static_cast<int>(parse_numeric(cells[index[4]], line_no, required[4]));
    rows.push_back(row);
  }
  return build_table(std::move(rows), frame_rate);
}

namespace {

// Frame-aligned samples of two vehicles.
struct PairedSample {
  int frame;
  double rel_y;   // other minus ego, longitudinal feet
  int ego_lane;
  int other_lane;
};

std::vector<PairedSample> paired_frames(const std::vector<FramePos>& ego,
                                        const std::vector<FramePos>& other) {
  std::vector<PairedSample> out;
  size_t i = 0;
  size_t j = 0;
  while (i < ego.size() && j < other.size()) {
    if (ego[i].frame < other[j].frame) {
      ++i;
    } else if (ego[i].frame > other[j].frame) {
      ++j;
    } else {
      out.push_back(PairedSample{ego[i].frame, other[j].y - ego[i].y, ego[i].lane,
                                 other[j].lane});
      ++i;
      ++j;
    }
  }
  return out;
}

// All behind-to-ahead crossings of one vehicle relative to one ego, with
// the vehicle pinned to one adjacent lane for the whole transition.
std::vector<BypassEvent> bypass_transitions(const TraceTable& table, int ego_id, int other_id,
                                            double ahead_ft) {
  std::vector<BypassEvent> events;
  const auto& ego = table.tracks.at(ego_id);
  const auto& other = table.tracks.at(other_id);
  const auto pairs = paired_frames(ego, other);

  for (int side : {-1, 1}) {
    int behind_frame = -1;
    bool have_behind = false;
    for (const auto& p : pairs) {
      const bool adjacent = p.other_lane == p.ego_lane + side;
      if (!adjacent) {
        // Leaving the lane breaks any transition in progress.
        have_behind = false;
        continue;
      }
      if (p.rel_y < 0.0) {
        have_behind = true;
        behind_frame = p.frame;
      } else if (p.rel_y >= ahead_ft && have_behind) {
        events.push_back(BypassEvent{ego_id, other_id, side, behind_frame, p.frame});
        have_behind = false;  // re-arm only after being behind again
      }
    }
  }
  return events;
}

}  // namespace

std::vector<BypassEvent> detect_general_bypass(const TraceTable& table, double ahead_ft) {
  std::vector<BypassEvent> events;
  for (const auto& [ego_id, ego_track] : table.tracks) {
    for (const auto& [other_id, other_track] : table.tracks) {
      if (other_id == ego_id) continue;
      const auto transitions = bypass_transitions(table, ego_id, other_id, ahead_ft);
      std::set<int> seen_sides;
      for (const auto& e : transitions) {
        if (seen_sides.insert(e.side).second) events.push_back(e);
      }
    }
  }
  return events;
}

std::vector<SyncEvent> detect_sync_bypass(const TraceTable& table, double window_s,
                                          double ahead_ft) {
  const int window_frames = static_cast<int>(std::lround(window_s * table.frame_rate));
  std::vector<SyncEvent> events;

  for (const auto& [ego_id, ego_track] : table.tracks) {
    // Crossings grouped by frame, split by side, window-bounded.
    std::map<int, std::vector<BypassEvent>> by_frame;
    for (const auto& [other_id, other_track] : table.tracks) {
      if (other_id == ego_id) continue;
      for (const auto& e : bypass_transitions(table, ego_id, other_id, ahead_ft)) {
        if (e.cross_frame - e.start_frame <= window_frames) by_frame[e.cross_frame].push_back(e);
      }
    }
    std::set<std::pair<int, int>> seen_pairs;
    for (const auto& [frame, crossings] : by_frame) {
      for (const auto& a : crossings) {
        if (a.side != -1) continue;
        for (const auto& b : crossings) {
          if (b.side != 1) continue;
          if (a.vehicle_id == b.vehicle_id) continue;
          if (!seen_pairs.insert({a.vehicle_id, b.vehicle_id}).second) continue;
          events.push_back(SyncEvent{ego_id, a, b, frame});
        }
      }
    }
  }
  return events;
}

std::vector<OvertakeEvent> detect_overtake(const TraceTable& table, double window_s,
                                           double alongside_ft) {
  const int window_frames = static_cast<int>(std::lround(window_s * table.frame_rate));
  std::vector<OvertakeEvent> events;

  for (const auto& [ego_id, ego_track] : table.tracks) {
    for (const auto& [other_id, other_track] : table.tracks) {
      if (other_id == ego_id) continue;
      const auto pairs = paired_frames(ego_track, other_track);
      int alongside_frame[2] = {-1, -1};  // index 0: side -1, index 1: side +1
      bool emitted = false;
      for (const auto& p : pairs) {
        if (emitted) break;
        for (int s = 0; s < 2; ++s) {
          const int side = s == 0 ? -1 : 1;
          if (p.other_lane == p.ego_lane + side && std::abs(p.rel_y) < alongside_ft) {
            alongside_frame[s] = p.frame;
          }
        }
        if (p.other_lane == p.ego_lane && p.rel_y > 0.0) {
          for (int s = 0; s < 2; ++s) {
            if (alongside_frame[s] >= 0 && p.frame > alongside_frame[s] &&
                p.frame - alongside_frame[s] <= window_frames) {
              events.push_back(OvertakeEvent{ego_id, other_id, s == 0 ? -1 : 1,
                                             alongside_frame[s], p.frame});
              emitted = true;
              break;
            }
          }
        }
      }
    }
  }
  return events;
}

std::vector<BrakeOvertakeEvent> detect_brake_overtake(const TraceTable& table, double hold_s,
                                                      double ahead_ft, double tol_ft,
                                                      double window_s) {
  const int hold_frames = static_cast<int>(std::lround(hold_s * table.frame_rate));
  const auto overtakes = detect_overtake(table, window_s);
  std::vector<BrakeOvertakeEvent> events;

  for (const auto& [ego_id, ego_track] : table.tracks) {
    for (const auto& [other_id, other_track] : table.tracks) {
      if (other_id == ego_id) continue;
      const auto pairs = paired_frames(ego_track, other_track);

      int run_start = -1;
      int run_end = -1;
      int run_side = 0;
      bool emitted = false;
      for (const auto& p : pairs) {
        if (emitted) break;
        const int lane_diff = p.other_lane - p.ego_lane;
        const bool holding = std::abs(lane_diff) == 1 &&
                             p.rel_y >= ahead_ft - tol_ft && p.rel_y <= ahead_ft + tol_ft;
        if (holding && (run_start < 0 || lane_diff != run_side)) {
          run_start = p.frame;
          run_side = lane_diff;
        }
        if (holding) {
          run_end = p.frame;
          if (run_end - run_start + 1 >= hold_frames) {
            // Need a concurrent overtake on the opposite side.
            for (const auto& o : overtakes) {
              if (o.ego_id != ego_id || o.vehicle_id == other_id) continue;
              if (o.side == run_side) continue;
              if (o.front_frame < run_start || o.alongside_frame > run_end) continue;
              events.push_back(
                  BrakeOvertakeEvent{ego_id, other_id, run_start, run_end, o});
              emitted = true;
              break;
            }
          }
        } else {
          run_start = -1;
          run_end = -1;
        }
      }
    }
  }
  return events;
}

double frequency(size_t pattern_events, size_t general_bypass_events) {
  if (general_bypass_events == 0) {
    throw std::invalid_argument("no general bypass events: frequency denominator is zero");
  }
  return static_cast<double>(pattern_events) / static_cast<double>(general_bypass_events);
}

void save_events_json(const std::vector<SyncEvent>& sync, const std::vector<BypassEvent>& general,
                      const std::vector<OvertakeEvent>& overtake,
                      const std::vector<BrakeOvertakeEvent>& brake, const std::string& path) {
  nlohmann::json j;
  j["general_bypass_count"] = general.size();
  j["sync_bypass"] = nlohmann::json::array();
  for (const auto& e : sync) {
    j["sync_bypass"].push_back({{"ego", e.ego_id},
                                {"left_vehicle", e.left.vehicle_id},
                                {"right_vehicle", e.right.vehicle_id},
                                {"cross_frame", e.cross_frame}});
  }
  j["overtake"] = nlohmann::json::array();
  for (const auto& e : overtake) {
    j["overtake"].push_back({{"ego", e.ego_id},
                             {"vehicle", e.vehicle_id},
                             {"side", e.side},
                             {"alongside_frame", e.alongside_frame},
                             {"front_frame", e.front_frame}});
  }
  j["brake_overtake"] = nlohmann::json::array();
  for (const auto& e : brake) {
    j["brake_overtake"].push_back({{"ego", e.ego_id},
                                   {"brake_vehicle", e.brake_vehicle},
                                   {"hold_start", e.hold_start},
                                   {"hold_end", e.hold_end},
                                   {"overtake_vehicle", e.overtake.vehicle_id}});
  }
  if (!general.empty()) {
    j["frequency"] = {{"sync_bypass", frequency(sync.size(), general.size())},
                      {"overtake", frequency(overtake.size(), general.size())},
                      {"brake_overtake", frequency(brake.size(), general.size())}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write events file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace stldrive::analyze
