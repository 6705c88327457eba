#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crossgame {

enum class Approach : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };
enum class Turn : std::uint8_t { Straight = 0, Left = 1, Right = 2 };
enum class BoxCell : std::uint8_t { NW = 0, NE = 1, SW = 2, SE = 3 };
enum class VehicleClass : std::uint8_t { Normal = 0, Emergency = 1 };

/// Longitudinal strategy set. Enumerator order is the canonical tie-break order.
enum class Action : std::uint8_t { Keep = 0, Accel = 1, Decel = 2, HardStop = 3 };

inline constexpr std::array<Approach, 4> kApproaches{Approach::N, Approach::E, Approach::S,
                                                     Approach::W};
inline constexpr std::array<Turn, 3> kTurns{Turn::Straight, Turn::Left, Turn::Right};
inline constexpr std::array<Action, 4> kCanonicalActions{Action::Keep, Action::Accel,
                                                         Action::Decel, Action::HardStop};

inline constexpr int kMaxCells = 1024;
inline constexpr int kMaxSpeed = 8;
inline constexpr int kRouteCount = 12;

using CellId = std::int16_t;
using CellSet = std::bitset<kMaxCells>;

std::string_view to_string(Approach a);
std::string_view to_string(Turn t);
std::string_view to_string(BoxCell b);
std::string_view to_string(VehicleClass c);
std::string_view to_string(Action a);
std::optional<Approach> parse_approach(std::string_view s);
std::optional<Turn> parse_turn(std::string_view s);
std::optional<Action> parse_action(std::string_view s);

/// 90 degree clockwise rotation: N->E->S->W->N, NW->NE->SE->SW->NW.
Approach rotate(Approach a);
BoxCell rotate(BoxCell b);

struct RouteKey {
  Approach approach = Approach::N;
  Turn turn = Turn::Straight;

  int index() const { return static_cast<int>(approach) * 3 + static_cast<int>(turn); }
  static RouteKey from_index(int index);
  std::string name() const;
  friend bool operator==(const RouteKey&, const RouteKey&) = default;
};

/// Fixed right-hand-traffic box segment for a route.
std::vector<BoxCell> box_segment(RouteKey key);
/// Exit arm reached by a route.
Approach exit_direction(RouteKey key);

struct Route {
  RouteKey key;
  Approach exit = Approach::N;
  std::vector<CellId> cells;  // entry cells, box cells, exit cells
  int box_len = 0;
  CellId box_guard = 0;  // box cell feeding the first box cell of this route


  int length() const { return static_cast<int>(cells.size()); }
};

/// Cell lattice of a single-lane four-arm intersection with a 2x2 conflict box.
///
/// Global cell ids: entry cells of approach a are a*L_in + i (i = 0 is the far
/// end, L_in-1 touches the box), then the four box cells, then exit cells
/// 4*L_in + 4 + dir*L_out + j (j = 0 touches the box). Entry cells are private
/// to one approach and exit cells to one exit arm; only box cells are shared
/// between crossing routes.
class IntersectionLayout {
 public:
  IntersectionLayout(int entry_len, int exit_len);

  int entry_len() const { return entry_len_; }
  int exit_len() const { return exit_len_; }
  int cell_count() const { return 4 * entry_len_ + 4 + 4 * exit_len_; }

  const Route& route(RouteKey key) const { return routes_[key.index()]; }
  const Route& route(int index) const { return routes_[index]; }
  std::span<const Route> routes() const { return routes_; }

  CellId entry_cell(Approach a, int i) const;
  CellId box_cell(BoxCell b) const;
  CellId exit_cell(Approach dir, int j) const;
  bool is_box(CellId c) const;
  std::string cell_name(CellId c) const;

  friend bool operator==(const IntersectionLayout& a, const IntersectionLayout& b) {
    return a.entry_len_ == b.entry_len_ && a.exit_len_ == b.exit_len_;
  }

 private:
  int entry_len_;
  int exit_len_;
  std::array<Route, kRouteCount> routes_;
};

/// Throws std::invalid_argument unless both lengths are >= 1 and the lattice fits kMaxCells.
IntersectionLayout build_layout(int entry_len, int exit_len);

struct KinematicLimits {
  int v_max = 2;
  int d_min = 1;
};

struct VehicleState {
  std::int32_t id = 0;
  VehicleClass cls = VehicleClass::Normal;
  int route = 0;  // RouteKey::index()
  int cell_index = -1;
  int speed = 0;
  int level = 1;
  int spawn_step = 0;    // step the vehicle was placed on the road
  int arrival_step = 0;  // scheduled arrival; earlier than spawn_step when it waited in backlog
  bool exited = false;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

/// Cells entered by one vehicle during one step.
struct Traversal {
  std::int32_t vehicle_id = 0;
  std::vector<CellId> cells;
  int end_index = -1;               // route index after the step (may overshoot)
  std::optional<CellId> end_cell;   // empty once the vehicle has left the map

  /// Cells the vehicle claims this step: entered cells plus the cell it ends in.
  CellSet footprint() const;
};

struct Move {
  VehicleState next;
  Traversal traversal;
};

int resulting_speed(int speed, Action action, int v_max);

/// Advances a vehicle by one step. Overshooting the last cell marks it exited and
/// truncates the traversal at the route end.
Move apply_action(const IntersectionLayout& layout, const VehicleState& state, Action action,
                  const KinematicLimits& limits);

/// Cell the vehicle currently occupies, or empty when it is off the map.
std::optional<CellId> current_cell(const IntersectionLayout& layout, const VehicleState& v);

CellSet occupancy_of(const IntersectionLayout& layout, std::span<const VehicleState> vehicles);

/// Empty cells between the vehicle and the nearest occupied cell strictly ahead on its
/// own route; empty optional means open road.
std::optional<int> gap_ahead(const IntersectionLayout& layout, const CellSet& occupancy,
                             const VehicleState& vehicle);

/// Same scan as gap_ahead, starting from an arbitrary route index.
std::optional<int> gap_from(const Route& route, const CellSet& occupancy, int index);

/// Subset of the four actions, iterated in canonical order.
class ActionSet {
 public:
  ActionSet() = default;
  static ActionSet all() { return ActionSet(0b1111); }

  void insert(Action a) { bits_ |= static_cast<std::uint8_t>(1u << static_cast<int>(a)); }
  bool contains(Action a) const { return (bits_ >> static_cast<int>(a)) & 1u; }
  bool empty() const { return bits_ == 0; }
  int size() const;
  std::vector<Action> to_vector() const;
  /// First member in canonical order; HardStop when the set is empty.
  Action first() const;
  std::uint8_t bits() const { return bits_; }

  friend bool operator==(const ActionSet&, const ActionSet&) = default;

 private:
  explicit ActionSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

/// Safety feasibility filter.
///
/// An action is feasible iff its entered cells avoid every cell committed by an earlier
/// decider this step, neither its entered cells nor its end cell hit a predicted end cell
/// of another vehicle, and a newly entered end cell keeps gap >= d_min to the predicted
/// end occupancy. HardStop is always a member.
///
/// `end_occupancy` must not contain the vehicle's own current cell.
ActionSet feasible_actions(const IntersectionLayout& layout, const VehicleState& vehicle,
                           const CellSet& committed, const CellSet& end_occupancy,
                           const KinematicLimits& limits);

ActionSet feasible_actions(const IntersectionLayout& layout, const VehicleState& vehicle,
                           std::span<const Traversal> committed, const CellSet& end_occupancy,
                           const KinematicLimits& limits);

/// Planned action if feasible, otherwise the first feasible action in canonical order.
Action degrade(Action planned, const ActionSet& feasible);

/// Pairs (lower id first, sorted) whose step footprints intersect.
std::vector<std::pair<std::int32_t, std::int32_t>> detect_collisions(
    std::span<const Traversal> traversals);

}  // namespace crossgame
