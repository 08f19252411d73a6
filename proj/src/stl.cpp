#include "stldrive/stl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace stldrive::stl {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

int MultiTrajectory::horizon() const {
  if (vehicles.empty() || vehicles.front().size() < 2) {
    throw EvalError("trajectory must contain at least one vehicle and two samples");
  }
  const size_t n = vehicles.front().size();
  for (const auto& v : vehicles) {
    if (v.size() != n) throw EvalError("ragged multi-trajectory");
  }
  return static_cast<int>(n) - 1;
}

FormulaPtr make_reach(int vehicle, Region r, TimeWindow w) {
  require(vehicle >= 0, "vehicle index must be non-negative");
  require(r.valid(), "region must satisfy x_min < x_max and y_min < y_max");
  require(w.valid(), "window must satisfy 0 <= t_s <= t_e");
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::Reach;
  f->vehicle = vehicle;
  f->region = r;
  f->window = w;
  return f;
}

FormulaPtr make_avoid(int vehicle, Region r, TimeWindow w) {
  auto f = std::const_pointer_cast<Formula>(make_reach(vehicle, r, w));
  f->kind = NodeKind::Avoid;
  return f;
}

FormulaPtr make_stay(int vehicle, Region r, TimeWindow w) {
  auto f = std::const_pointer_cast<Formula>(make_reach(vehicle, r, w));
  f->kind = NodeKind::Stay;
  return f;
}

FormulaPtr make_and(FormulaPtr f, FormulaPtr g) {
  require(f && g, "null operand");
  auto n = std::make_shared<Formula>();
  n->kind = NodeKind::And;
  n->left = std::move(f);
  n->right = std::move(g);
  return n;
}

FormulaPtr make_or(FormulaPtr f, FormulaPtr g) {
  auto n = std::const_pointer_cast<Formula>(make_and(std::move(f), std::move(g)));
  n->kind = NodeKind::Or;
  return n;
}

FormulaPtr make_not(FormulaPtr f) {
  require(f != nullptr, "null operand");
  auto n = std::make_shared<Formula>();
  n->kind = NodeKind::Not;
  n->left = std::move(f);
  return n;
}

FormulaPtr make_eventually(TimeWindow w, FormulaPtr f) {
  require(f != nullptr, "null operand");
  require(w.valid(), "window must satisfy 0 <= t_s <= t_e");
  auto n = std::make_shared<Formula>();
  n->kind = NodeKind::Eventually;
  n->window = w;
  n->left = std::move(f);
  return n;
}

FormulaPtr make_always(TimeWindow w, FormulaPtr f) {
  auto n = std::const_pointer_cast<Formula>(make_eventually(w, std::move(f)));
  n->kind = NodeKind::Always;
  return n;
}

FormulaPtr make_until(TimeWindow w, FormulaPtr f, FormulaPtr g) {
  require(f && g, "null operand");
  require(w.valid(), "window must satisfy 0 <= t_s <= t_e");
  auto n = std::make_shared<Formula>();
  n->kind = NodeKind::Until;
  n->window = w;
  n->left = std::move(f);
  n->right = std::move(g);
  return n;
}

ParseError::ParseError(const std::string& message, int line, int column)
    : std::runtime_error(message + " at line " + std::to_string(line) + ", column " +
                         std::to_string(column)),
      line_(line),
      column_(column) {}

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  FormulaPtr parse() {
    FormulaPtr f = formula();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing input after formula");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    int line = 1;
    int col = 1;
    for (size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(msg, line, col);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    return text_[pos_];
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string ident() {
    skip_ws();
    size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) fail("expected identifier");
    return text_.substr(start, pos_ - start);
  }

  int integer() {
    skip_ws();
    size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) fail("expected integer");
    int value = 0;
    auto [p, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc{} || p != text_.data() + pos_) fail("malformed integer");
    return value;
  }

  double number() {
    skip_ws();
    size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == 'e' || text_[pos_] == 'E' ||
            ((text_[pos_] == '-' || text_[pos_] == '+') &&
             (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E')))) {
      ++pos_;
    }
    if (pos_ == start) fail("expected number");
    double value = 0.0;
    auto [p, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc{} || p != text_.data() + pos_) fail("malformed number");
    return value;
  }

  TimeWindow window() {
    expect('[');
    int a = integer();
    expect(',');
    int b = integer();
    expect(']');
    if (a < 0) fail("window start must be non-negative");
    if (b < a) fail("window end precedes window start");
    return TimeWindow{a, b};
  }

  Region rect() {
    std::string name = ident();
    if (name != "rect") fail("expected 'rect'");
    expect('(');
    double x0 = number();
    expect(',');
    double x1 = number();
    expect(',');
    double y0 = number();
    expect(',');
    double y1 = number();
    expect(')');
    if (!(x0 < x1) || !(y0 < y1)) fail("degenerate rectangle");
    return Region{x0, x1, y0, y1};
  }

  int vehicle() {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != 'v') fail("expected vehicle 'vN'");
    ++pos_;
    int idx = integer();
    if (idx < 0) fail("vehicle index must be non-negative");
    return idx;
  }

  FormulaPtr formula() {
    char c = peek();
    if (c == 'F' || c == 'G' || c == 'U') {
      ++pos_;
      TimeWindow w = window();
      expect('(');
      FormulaPtr f = formula();
      if (c == 'U') {
        expect(',');
        FormulaPtr g = formula();
        expect(')');
        return make_until(w, std::move(f), std::move(g));
      }
      expect(')');
      return c == 'F' ? make_eventually(w, std::move(f)) : make_always(w, std::move(f));
    }
    std::string name = ident();
    if (name == "and" || name == "or") {
      expect('(');
      FormulaPtr f = formula();
      expect(',');
      FormulaPtr g = formula();
      expect(')');
      return name == "and" ? make_and(std::move(f), std::move(g))
                           : make_or(std::move(f), std::move(g));
    }
    if (name == "not") {
      expect('(');
      FormulaPtr f = formula();
      expect(')');
      return make_not(std::move(f));
    }
    if (name == "reach" || name == "avoid" || name == "stay") {
      expect('(');
      int v = vehicle();
      expect(',');
      Region r = rect();
      expect(',');
      TimeWindow w = window();
      expect(')');
      if (name == "reach") return make_reach(v, r, w);
      if (name == "avoid") return make_avoid(v, r, w);
      return make_stay(v, r, w);
    }
    fail("unknown predicate or operator '" + name + "'");
  }

  const std::string& text_;
  size_t pos_{0};
};

std::string format_number(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, p);
}

std::string print_rect(const Region& r) {
  return "rect(" + format_number(r.x_min) + "," + format_number(r.x_max) + "," +
         format_number(r.y_min) + "," + format_number(r.y_max) + ")";
}

std::string print_window(const TimeWindow& w) {
  return "[" + std::to_string(w.t_s) + "," + std::to_string(w.t_e) + "]";
}

}  // namespace

FormulaPtr parse_spec(const std::string& text) { return Parser(text).parse(); }

std::string print_spec(const Formula& f) {
  switch (f.kind) {
    case NodeKind::Reach:
    case NodeKind::Avoid:
    case NodeKind::Stay: {
      const char* name = f.kind == NodeKind::Reach  ? "reach"
                         : f.kind == NodeKind::Avoid ? "avoid"
                                                     : "stay";
      return std::string(name) + "(v" + std::to_string(f.vehicle) + "," + print_rect(f.region) +
             "," + print_window(f.window) + ")";
    }
    case NodeKind::And:
      return "and(" + print_spec(*f.left) + "," + print_spec(*f.right) + ")";
    case NodeKind::Or:
      return "or(" + print_spec(*f.left) + "," + print_spec(*f.right) + ")";
    case NodeKind::Not:
      return "not(" + print_spec(*f.left) + ")";
    case NodeKind::Eventually:
      return "F" + print_window(f.window) + "(" + print_spec(*f.left) + ")";
    case NodeKind::Always:
      return "G" + print_window(f.window) + "(" + print_spec(*f.left) + ")";
    case NodeKind::Until:
      return "U" + print_window(f.window) + "(" + print_spec(*f.left) + "," +
             print_spec(*f.right) + ")";
  }
  throw std::logic_error("unreachable formula kind");
}

bool structurally_equal(const Formula& a, const Formula& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::Reach:
    case NodeKind::Avoid:
    case NodeKind::Stay:
      return a.vehicle == b.vehicle && a.region.x_min == b.region.x_min &&
             a.region.x_max == b.region.x_max && a.region.y_min == b.region.y_min &&
             a.region.y_max == b.region.y_max && a.window.t_s == b.window.t_s &&
             a.window.t_e == b.window.t_e;
    case NodeKind::Not:
      return structurally_equal(*a.left, *b.left);
    case NodeKind::And:
    case NodeKind::Or:
      return structurally_equal(*a.left, *b.left) && structurally_equal(*a.right, *b.right);
    case NodeKind::Eventually:
    case NodeKind::Always:
      return a.window.t_s == b.window.t_s && a.window.t_e == b.window.t_e &&
             structurally_equal(*a.left, *b.left);
    case NodeKind::Until:
      return a.window.t_s == b.window.t_s && a.window.t_e == b.window.t_e &&
             structurally_equal(*a.left, *b.left) && structurally_equal(*a.right, *b.right);
  }
  return false;
}

double signed_distance(Point p, const Region& r) {
  if (!r.valid()) throw std::invalid_argument("invalid region");
  return std::min(std::min(p.x - r.x_min, r.x_max - p.x),
                  std::min(p.y - r.y_min, r.y_max - p.y));
}

namespace {

struct Clipped {
  int lo;
  int hi;
};

Clipped clip_window(const TimeWindow& w, int t, int horizon) {
  int lo = std::max(t + w.t_s, 0);
  int hi = std::min(t + w.t_e, horizon);
  if (lo > hi) {
    throw EvalError("window [" + std::to_string(t + w.t_s) + "," + std::to_string(t + w.t_e) +
                    "] lies outside the trace horizon");
  }
  return Clipped{lo, hi};
}

double atom(const Formula& f, const MultiTrajectory& traj, int t) {
  return signed_distance(traj.vehicles[static_cast<size_t>(f.vehicle)][static_cast<size_t>(t)],
                         f.region);
}

double eval(const Formula& f, const MultiTrajectory& traj, int t, int horizon) {
  switch (f.kind) {
    case NodeKind::Reach: {
      auto [lo, hi] = clip_window(f.window, t, horizon);
      double best = -std::numeric_limits<double>::infinity();
      for (int u = lo; u <= hi; ++u) best = std::max(best, atom(f, traj, u));
      return best;
    }
    case NodeKind::Avoid: {
      auto [lo, hi] = clip_window(f.window, t, horizon);
      double best = std::numeric_limits<double>::infinity();
      for (int u = lo; u <= hi; ++u) best = std::min(best, -atom(f, traj, u));
      return best;
    }
    case NodeKind::Stay: {
      auto [lo, hi] = clip_window(f.window, t, horizon);
      double best = std::numeric_limits<double>::infinity();
      for (int u = lo; u <= hi; ++u) best = std::min(best, atom(f, traj, u));
      return best;
    }
    case NodeKind::And:
      return std::min(eval(*f.left, traj, t, horizon), eval(*f.right, traj, t, horizon));
    case NodeKind::Or:
      return std::max(eval(*f.left, traj, t, horizon), eval(*f.right, traj, t, horizon));
    case NodeKind::Not:
      return -eval(*f.left, traj, t, horizon);
    case NodeKind::Eventually: {
      auto [lo, hi] = clip_window(f.window, t, horizon);
      double best = -std::numeric_limits<double>::infinity();
      for (int u = lo; u <= hi; ++u) best = std::max(best, eval(*f.left, traj, u, horizon));
      return best;
    }
    case NodeKind::Always: {
      auto [lo, hi] = clip_window(f.window, t, horizon);
      double best = std::numeric_limits<double>::infinity();
      for (int u = lo; u <= hi; ++u) best = std::min(best, eval(*f.left, traj, u, horizon));
      return best;
    }
    case NodeKind::Until: {
      auto [lo, hi] = clip_window(f.window, t, horizon);
      double best = -std::numeric_limits<double>::infinity();
      for (int u = lo; u <= hi; ++u) {
        double hold = std::numeric_limits<double>::infinity();
        for (int s = t; s <= u; ++s) hold = std::min(hold, eval(*f.left, traj, s, horizon));
        best = std::max(best, std::min(eval(*f.right, traj, u, horizon), hold));
      }
      return best;
    }
  }
  throw std::logic_error("unreachable formula kind");
}

void check_vehicles(const Formula& f, size_t count) {
  if (f.vehicle >= 0 && static_cast<size_t>(f.vehicle) >= count) {
    throw EvalError("formula references vehicle v" + std::to_string(f.vehicle) +
                    " but only " + std::to_string(count) + " trajectories were supplied");
  }
  if (f.left) check_vehicles(*f.left, count);
  if (f.right) check_vehicles(*f.right, count);
}

}  // namespace

double robustness(const Formula& f, const MultiTrajectory& traj) {
  const int horizon = traj.horizon();
  check_vehicles(f, traj.vehicles.size());
  return eval(f, traj, 0, horizon);
}

bool satisfies(const Formula& f, const MultiTrajectory& traj) {
  return robustness(f, traj) > 0.0;
}

int max_window_end(const Formula& f) {
  switch (f.kind) {
    case NodeKind::Reach:
    case NodeKind::Avoid:
    case NodeKind::Stay:
      return f.window.t_e;
    case NodeKind::Not:
      return max_window_end(*f.left);
    case NodeKind::And:
    case NodeKind::Or:
      return std::max(max_window_end(*f.left), max_window_end(*f.right));
    case NodeKind::Eventually:
    case NodeKind::Always:
      return f.window.t_e + max_window_end(*f.left);
    case NodeKind::Until:
      return f.window.t_e + std::max(max_window_end(*f.left), max_window_end(*f.right));
  }
  throw std::logic_error("unreachable formula kind");
}

}  // namespace stldrive::stl
