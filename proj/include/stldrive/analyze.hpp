#pragma once

#include <map>
#include <string>
#include <vector>

namespace stldrive::analyze {

// One row of an NGSIM-style trajectory table. Units are feet; Local_Y is
// the longitudinal coordinate.
struct TraceRow {
  int vehicle_id{0};
  int frame{0};
  double local_x{0.0};
  double local_y{0.0};
  int lane_id{0};
};

struct FramePos {
  int frame{0};
  double x{0.0};
  double y{0.0};
  int lane{0};
};

struct TraceTable {
  std::vector<TraceRow> rows;
  double frame_rate{10.0};
  // Per-vehicle frame-sorted track, rebuilt on load.
  std::map<int, std::vector<FramePos>> tracks;
  int min_lane{0};
  int max_lane{0};

  bool empty() const { return rows.empty(); }
};

// CSV columns: Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID. Throws on a
// missing column, a non-numeric cell, or a duplicate (vehicle, frame) key.
TraceTable load_traces(const std::string& path, double frame_rate = 10.0);
TraceTable build_table(std::vector<TraceRow> rows, double frame_rate = 10.0);

// A vehicle in an adjacent lane moving from behind the ego to at least
// ahead_ft in front while staying in that lane. cross_frame is the first
// frame at or beyond ahead_ft; start_frame the last behind-frame before it.
struct BypassEvent {
  int ego_id{0};
  int vehicle_id{0};
  int side{0};  // -1 = lower lane id, +1 = higher
  int start_frame{0};
  int cross_frame{0};
};

struct SyncEvent {
  int ego_id{0};
  BypassEvent left;
  BypassEvent right;
  int cross_frame{0};
};

struct OvertakeEvent {
  int ego_id{0};
  int vehicle_id{0};
  int side{0};
  int alongside_frame{0};
  int front_frame{0};
};

struct BrakeOvertakeEvent {
  int ego_id{0};
  int brake_vehicle{0};
  int hold_start{0};
  int hold_end{0};
  OvertakeEvent overtake;
};

// Untimed single-vehicle bypass events, one per (ego, vehicle, side).
std::vector<BypassEvent> detect_general_bypass(const TraceTable& table, double ahead_ft = 50.0);

// Timed pairs: one bypass on each side of the ego crossing at the same
// frame, each completed within the window.
std::vector<SyncEvent> detect_sync_bypass(const TraceTable& table, double window_s = 10.0,
                                          double ahead_ft = 50.0);

// A vehicle alongside the ego (|dy| < alongside_ft, adjacent lane) that
// appears directly in front of the ego in the ego's lane within the window.
std::vector<OvertakeEvent> detect_overtake(const TraceTable& table, double window_s = 10.0,
                                           double alongside_ft = 15.0);

// A vehicle holding ahead_ft (+/- tol_ft) in front in an adjacent lane for
// hold_s seconds, concurrent with an overtake on the other side.
std::vector<BrakeOvertakeEvent> detect_brake_overtake(const TraceTable& table, double hold_s = 3.0,
                                                      double ahead_ft = 50.0,
                                                      double tol_ft = 10.0,
                                                      double window_s = 10.0);

// Ratio of pattern events to general bypass events (the paper's shared
// denominator). Throws when the denominator is zero.
double frequency(size_t pattern_events, size_t general_bypass_events);

void save_events_json(const std::vector<SyncEvent>& sync, const std::vector<BypassEvent>& general,
                      const std::vector<OvertakeEvent>& overtake,
                      const std::vector<BrakeOvertakeEvent>& brake, const std::string& path);

}  // namespace stldrive::analyze
