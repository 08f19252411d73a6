#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace stldrive::stl {

// Axis-aligned rectangle in road coordinates, meters.
struct Region {
  double x_min{0.0};
  double x_max{0.0};
  double y_min{0.0};
  double y_max{0.0};

  bool valid() const { return x_min < x_max && y_min < y_max; }
};

// Closed interval of simulation step indices.
struct TimeWindow {
  int t_s{0};
  int t_e{0};

  bool valid() const { return 0 <= t_s && t_s <= t_e; }
};

struct Point {
  double x{0.0};
  double y{0.0};
};

// Time-indexed positions for several vehicles sharing one horizon.
// All per-vehicle sequences have identical length T+1.
struct MultiTrajectory {
  std::vector<std::vector<Point>> vehicles;
  double dt{0.1};

  // Horizon T in steps. Throws if sequences are empty or ragged.
  int horizon() const;
};

enum class NodeKind {
  Reach,
  Avoid,
  Stay,
  And,
  Or,
  Not,
  Eventually,
  Always,
  Until,
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

// Immutable AST node. Predicates carry (vehicle, region, window);
// temporal operators carry a window and children; boolean operators
// carry children only.
struct Formula {
  NodeKind kind{NodeKind::Reach};
  int vehicle{-1};
  Region region{};
  TimeWindow window{};
  FormulaPtr left;
  FormulaPtr right;
};

FormulaPtr make_reach(int vehicle, Region r, TimeWindow w);
FormulaPtr make_avoid(int vehicle, Region r, TimeWindow w);
FormulaPtr make_stay(int vehicle, Region r, TimeWindow w);
FormulaPtr make_and(FormulaPtr f, FormulaPtr g);
FormulaPtr make_or(FormulaPtr f, FormulaPtr g);
FormulaPtr make_not(FormulaPtr f);
FormulaPtr make_eventually(TimeWindow w, FormulaPtr f);
FormulaPtr make_always(TimeWindow w, FormulaPtr f);
FormulaPtr make_until(TimeWindow w, FormulaPtr f, FormulaPtr g);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& message) : std::runtime_error(message) {}
};

// Parses the text DSL:
//   formula := pred | and(f,f) | or(f,f) | not(f)
//            | F[a,b](f) | G[a,b](f) | U[a,b](f,f)
//   pred    := (reach|avoid|stay)(vN, rect(x0,x1,y0,y1), [a,b])
// Whitespace-insensitive. Throws ParseError with line/column.
FormulaPtr parse_spec(const std::string& text);

// Canonical text form; parse_spec(print_spec(f)) is structurally equal to f.
std::string print_spec(const Formula& f);

bool structurally_equal(const Formula& a, const Formula& b);

// Minimum of the four signed linear margins of the rectangle:
// positive strictly inside, zero on the boundary, negative outside.
double signed_distance(Point p, const Region& r);

// Discrete-time space robustness evaluated at t = 0. Windows are absolute
// step indices at top level; nested temporal operators shift additively.
// Windows are clipped to [0, T]; a window that misses the horizon entirely
// is an EvalError.
double robustness(const Formula& f, const MultiTrajectory& traj);

// Strict positivity of robustness (a zero score does not satisfy).
bool satisfies(const Formula& f, const MultiTrajectory& traj);

// Largest window end step reachable by the formula (windows accumulated
// additively through nesting). Used to decide when a maneuver is over.
int max_window_end(const Formula& f);

}  // namespace stldrive::stl
