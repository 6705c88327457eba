#include "crossgame/world.hpp"

#include <algorithm>
#include <stdexcept>

namespace crossgame {

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::N: return "N";
    case Approach::E: return "E";
    case Approach::S: return "S";
    case Approach::W: return "W";
  }
  return "?";
}

std::string_view to_string(Turn t) {
  switch (t) {
    case Turn::Straight: return "straight";
    case Turn::Left: return "left";
    case Turn::Right: return "right";
  }
  return "?";
}

std::string_view to_string(BoxCell b) {
  switch (b) {
    case BoxCell::NW: return "NW";
    case BoxCell::NE: return "NE";
    case BoxCell::SW: return "SW";
    case BoxCell::SE: return "SE";
  }
  return "?";
}

std::string_view to_string(VehicleClass c) {
  return c == VehicleClass::Emergency ? "emergency" : "normal";
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Keep: return "Keep";
    case Action::Accel: return "Accel";
    case Action::Decel: return "Decel";
    case Action::HardStop: return "HardStop";
  }
  return "?";
}

std::optional<Approach> parse_approach(std::string_view s) {
  for (Approach a : kApproaches) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

std::optional<Turn> parse_turn(std::string_view s) {
  for (Turn t : kTurns) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::optional<Action> parse_action(std::string_view s) {
  for (Action a : kCanonicalActions) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

Approach rotate(Approach a) {
  return static_cast<Approach>((static_cast<int>(a) + 1) % 4);
}

BoxCell rotate(BoxCell b) {
  switch (b) {
    case BoxCell::NW: return BoxCell::NE;
    case BoxCell::NE: return BoxCell::SE;
    case BoxCell::SE: return BoxCell::SW;
    case BoxCell::SW: return BoxCell::NW;
  }
  return b;
}

RouteKey RouteKey::from_index(int index) {
  return {static_cast<Approach>(index / 3), static_cast<Turn>(index % 3)};
}

std::string RouteKey::name() const {
  return std::string(to_string(approach)) + "-" + std::string(to_string(turn));
}

std::vector<BoxCell> box_segment(RouteKey key) {
  using B = BoxCell;
  // Right-hand traffic: a vehicle enters the box in the quadrant on its right-hand side.
  static const std::array<std::array<std::vector<BoxCell>, 3>, 4> table{{
      // N: straight, left, right
      {{{B::NW, B::SW}, {B::NW, B::SW, B::SE}, {B::NW}}},
      // E
      {{{B::NE, B::NW}, {B::NE, B::NW, B::SW}, {B::NE}}},
      // S
      {{{B::SE, B::NE}, {B::SE, B::NE, B::NW}, {B::SE}}},
      // W
      {{{B::SW, B::SE}, {B::SW, B::SE, B::NE}, {B::SW}}},
  }};
  return table[static_cast<int>(key.approach)][static_cast<int>(key.turn)];
}

Approach exit_direction(RouteKey key) {
  // Heading of a vehicle arriving from `approach` is the opposite arm.
  const int a = static_cast<int>(key.approach);
  switch (key.turn) {
    case Turn::Straight: return static_cast<Approach>((a + 2) % 4);
    case Turn::Left: return static_cast<Approach>((a + 1) % 4);
    case Turn::Right: return static_cast<Approach>((a + 3) % 4);
  }
  return key.approach;
}

IntersectionLayout::IntersectionLayout(int entry_len, int exit_len)
    : entry_len_(entry_len), exit_len_(exit_len) {
  if (entry_len < 1 || exit_len < 1) {
    throw std::invalid_argument("entry and exit lengths must be >= 1");
  }
  if (cell_count() > kMaxCells) {
    throw std::invalid_argument("layout exceeds " + std::to_string(kMaxCells) + " cells");
  }
  for (int r = 0; r < kRouteCount; ++r) {
    Route& route = routes_[r];
    route.key = RouteKey::from_index(r);
    route.exit = exit_direction(route.key);
    const auto box = box_segment(route.key);
    route.box_len = static_cast<int>(box.size());
    route.box_guard = box_cell(rotate(box.front()));
    route.cells.reserve(entry_len + box.size() + exit_len);
    for (int i = 0; i < entry_len; ++i) route.cells.push_back(entry_cell(route.key.approach, i));
    for (BoxCell b : box) route.cells.push_back(box_cell(b));
    for (int j = 0; j < exit_len; ++j) route.cells.push_back(exit_cell(route.exit, j));
  }
}

CellId IntersectionLayout::entry_cell(Approach a, int i) const {
  return static_cast<CellId>(static_cast<int>(a) * entry_len_ + i);
}

CellId IntersectionLayout::box_cell(BoxCell b) const {
  return static_cast<CellId>(4 * entry_len_ + static_cast<int>(b));
}

CellId IntersectionLayout::exit_cell(Approach dir, int j) const {
  return static_cast<CellId>(4 * entry_len_ + 4 + static_cast<int>(dir) * exit_len_ + j);
}

bool IntersectionLayout::is_box(CellId c) const {
  return c >= 4 * entry_len_ && c < 4 * entry_len_ + 4;
}

std::string IntersectionLayout::cell_name(CellId c) const {
  if (c < 4 * entry_len_) {
    return std::string(to_string(static_cast<Approach>(c / entry_len_))) + "-entry" +
           std::to_string(c % entry_len_);
  }
  if (is_box(c)) return std::string(to_string(static_cast<BoxCell>(c - 4 * entry_len_)));
  const int off = c - 4 * entry_len_ - 4;
  return std::string(to_string(static_cast<Approach>(off / exit_len_))) + "-exit" +
         std::to_string(off % exit_len_);
}

IntersectionLayout build_layout(int entry_len, int exit_len) {
  return IntersectionLayout(entry_len, exit_len);
}

CellSet Traversal::footprint() const {
  CellSet s;
  for (CellId c : cells) s.set(c);
  if (end_cell) s.set(*end_cell);
  return s;
}

int resulting_speed(int speed, Action action, int v_max) {
  switch (action) {
    case Action::Keep: return std::clamp(speed, 0, v_max);
    case Action::Accel: return std::clamp(speed + 1, 0, v_max);
    case Action::Decel: return std::clamp(speed - 1, 0, v_max);
    case Action::HardStop: return 0;
  }
  return 0;
}

Move apply_action(const IntersectionLayout& layout, const VehicleState& state, Action action,
                  const KinematicLimits& limits) {
  const Route& route = layout.route(state.route);
  Move m{state, Traversal{state.id, {}, state.cell_index, std::nullopt}};
  m.next.speed = resulting_speed(state.speed, action, limits.v_max);
  const int end = state.cell_index + m.next.speed;
  for (int i = state.cell_index + 1; i <= std::min(end, route.length() - 1); ++i) {
    m.traversal.cells.push_back(route.cells[i]);
  }
  m.next.cell_index = end;
  m.traversal.end_index = end;
  if (end >= route.length()) {
    m.next.exited = true;
  } else if (end >= 0) {
    m.traversal.end_cell = route.cells[end];
  }
  return m;
}

std::optional<CellId> current_cell(const IntersectionLayout& layout, const VehicleState& v) {
  const Route& route = layout.route(v.route);
  if (v.exited || v.cell_index < 0 || v.cell_index >= route.length()) return std::nullopt;
  return route.cells[v.cell_index];
}

CellSet occupancy_of(const IntersectionLayout& layout, std::span<const VehicleState> vehicles) {
  CellSet s;
  for (const auto& v : vehicles) {
    if (auto c = current_cell(layout, v)) s.set(*c);
  }
  return s;
}

std::optional<int> gap_from(const Route& route, const CellSet& occupancy, int index) {
  for (int i = index + 1; i < route.length(); ++i) {
    if (occupancy.test(route.cells[i])) return i - index - 1;
  }
  return std::nullopt;
}

std::optional<int> gap_ahead(const IntersectionLayout& layout, const CellSet& occupancy,
                             const VehicleState& vehicle) {
  return gap_from(layout.route(vehicle.route), occupancy, vehicle.cell_index);
}

int ActionSet::size() const {
  int n = 0;
  for (Action a : kCanonicalActions) n += contains(a) ? 1 : 0;
  return n;
}

std::vector<Action> ActionSet::to_vector() const {
  std::vector<Action> out;
  for (Action a : kCanonicalActions) {
    if (contains(a)) out.push_back(a);
  }
  return out;
}

Action ActionSet::first() const {
  for (Action a : kCanonicalActions) {
    if (contains(a)) return a;
  }
  return Action::HardStop;
}

ActionSet feasible_actions(const IntersectionLayout& layout, const VehicleState& vehicle,
                           const CellSet& committed, const CellSet& end_occupancy,
                           const KinematicLimits& limits) {
  const Route& route = layout.route(vehicle.route);
  const int box_lo = layout.entry_len();
  ActionSet out;
  for (Action a : kCanonicalActions) {
    if (a == Action::HardStop) {
      out.insert(a);
      continue;
    }
    const int speed = resulting_speed(vehicle.speed, a, limits.v_max);
    const int end = vehicle.cell_index + speed;
    const int last = std::min(end, route.length() - 1);
    bool ok = true;
    for (int i = vehicle.cell_index + 1; i <= last && ok; ++i) {
      const CellId c = route.cells[i];
      ok = !committed.test(c) && !end_occupancy.test(c);
    }
    if (ok && speed == 0 && vehicle.cell_index >= 0) {
      const CellId here = route.cells[vehicle.cell_index];
      ok = !committed.test(here) && !end_occupancy.test(here);
    }
    if (ok && speed > 0 && end < route.length()) {
      const auto gap = gap_from(route, end_occupancy, end);
      ok = !gap || *gap >= limits.d_min;
    }
    if (ok && vehicle.cell_index < box_lo && end >= box_lo) {
      // Box admission: the rest of the box segment must be clear of other vehicles, and so
      // must the box cell feeding it, so nobody in the box can be cut off.
      ok = !end_occupancy.test(route.box_guard);
      for (int i = std::max(end + 1, box_lo); i < box_lo + route.box_len && ok; ++i) {
        ok = !end_occupancy.test(route.cells[i]);
      }
    }
    if (ok) out.insert(a);
  }
  return out;
}

ActionSet feasible_actions(const IntersectionLayout& layout, const VehicleState& vehicle,
                           std::span<const Traversal> committed, const CellSet& end_occupancy,
                           const KinematicLimits& limits) {
  CellSet cells;
  for (const auto& t : committed) {
    for (CellId c : t.cells) cells.set(c);
  }
  return feasible_actions(layout, vehicle, cells, end_occupancy, limits);
}

Action degrade(Action planned, const ActionSet& feasible) {
  return feasible.contains(planned) ? planned : feasible.first();
}

std::vector<std::pair<std::int32_t, std::int32_t>> detect_collisions(
    std::span<const Traversal> traversals) {
  std::vector<CellSet> feet;
  feet.reserve(traversals.size());
  for (const auto& t : traversals) feet.push_back(t.footprint());
  std::vector<std::pair<std::int32_t, std::int32_t>> out;
  for (std::size_t i = 0; i < traversals.size(); ++i) {
    for (std::size_t j = i + 1; j < traversals.size(); ++j) {
      if ((feet[i] & feet[j]).any()) {
        auto a = traversals[i].vehicle_id;
        auto b = traversals[j].vehicle_id;
        out.emplace_back(std::min(a, b), std::max(a, b));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace crossgame
