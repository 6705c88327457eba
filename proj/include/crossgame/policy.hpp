#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "crossgame/game.hpp"
#include "crossgame/world.hpp"

namespace crossgame {

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxHorizon = 6;

struct Plan {
  std::vector<Action> actions;
  friend bool operator==(const Plan&, const Plan&) = default;
};

/// Game node: the active vehicles, canonically ordered by id.
struct WorldSnapshot {
  std::shared_ptr<const IntersectionLayout> layout;
  KinematicLimits limits;
  std::vector<VehicleState> vehicles;

  /// Drops exited vehicles and sorts by id. Throws PolicyError on duplicate ids.
  static WorldSnapshot make(std::shared_ptr<const IntersectionLayout> layout,
                            KinematicLimits limits, std::vector<VehicleState> vehicles);

  const VehicleState* find(std::int32_t id) const;
  CellSet occupancy() const { return occupancy_of(*layout, vehicles); }
};

struct PolicyParams {
  PayoffWeights weights;
  HorizonParams horizon;
  int k_max = 3;
  bool emergency_first = true;
  bool memoize = true;
  bool restrict_components = true;  // search only the vehicles that can reach the ego
};

/// A move already made in the current decision round, visible to later deciders.
struct Commitment {
  std::int32_t id = 0;
  Action executed = Action::Keep;
};

/// Per-step other-vehicle traversals, each with its predicted end cell.
using FrozenSchedule = std::vector<std::vector<Traversal>>;

/// Every vehicle except `ego` held at its current speed (Keep) for `steps` steps. Observed
/// vehicles make their executed move in the first step and then keep the resulting speed.
FrozenSchedule constant_speed_schedule(const WorldSnapshot& snapshot, std::int32_t ego,
                                       int steps, std::span<const Commitment> observed = {});

/// Feasible set the ego faces when it decides after `observed` moved this step: those
/// vehicles sit at their end cells, everybody else at their current cells.
ActionSet decision_feasible_set(const WorldSnapshot& snapshot, std::int32_t ego,
                                std::span<const Commitment> observed);

/// Level-k decision engine.
///
/// Searches all |A|^T ego plans depth first; siblings whose executed action coincides
/// after degradation are skipped since their subtrees are identical. Level-0 opponents are
/// held at constant speed. A level-k ego simulates each lookahead step in priority order
/// with every other vehicle playing its own memoized level-(k-1) choice on that step's
/// snapshot, degraded against the moves already committed in the step. Observed moves
/// replace the predictions for the first step.
///
/// Only vehicles that can reach the ego's inspected cells (directly or through a chain of
/// vehicles) are searched; the restriction does not change results.
///
/// Level-0 results are memoized for the lifetime of the planner on a local key (ego state
/// plus the constant-speed claims inside the ego's reachable window), which is exact.
/// Level >= 1 results are memoized on the full snapshot until begin_step().
class Planner {
 public:
  Planner(std::shared_ptr<const IntersectionLayout> layout, KinematicLimits limits,
          PolicyParams params);

  /// Raw argmax first action of a level-`level` ego over the full horizon.
  Action search(const WorldSnapshot& snapshot, std::int32_t ego, int level,
                std::span<const Commitment> observed = {});

  /// search() projected onto decision_feasible_set(snapshot, ego, observed).
  Action decide(const WorldSnapshot& snapshot, std::int32_t ego, int level,
                std::span<const Commitment> observed = {});

  void begin_step();

  const PolicyParams& params() const { return params_; }

  struct Stats {
    std::uint64_t level0_searches = 0;
    std::uint64_t level0_hits = 0;
    std::uint64_t levelk_searches = 0;
    std::uint64_t levelk_hits = 0;
    std::uint64_t nodes = 0;
  };
  const Stats& stats() const { return stats_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  PolicyParams params_;
  Stats stats_;
};

/// Instinctive decision: first action of the best plan against constant-speed opponents.
Action level0_action(const WorldSnapshot& snapshot, std::int32_t ego, const PayoffWeights& weights,
                     const HorizonParams& horizon, const KinematicLimits& limits);

/// Level-k decision; k = 0 delegates to level0_action, k > k_max throws PolicyError.
Action levelk_action(const WorldSnapshot& snapshot, std::int32_t ego, int k,
                     const PayoffWeights& weights, const HorizonParams& horizon,
                     const KinematicLimits& limits, int k_max = 3, bool emergency_first = true);

/// Brute-force argmax over all |A|^T plans against a frozen schedule of the others.
/// Independent of Planner; used as its oracle.
Plan best_response_exhaustive(const WorldSnapshot& snapshot, std::int32_t ego,
                              const FrozenSchedule& frozen, const PayoffWeights& weights,
                              const HorizonParams& horizon, const KinematicLimits& limits);

struct SpneResult {
  std::map<std::int32_t, Plan> plans;                   // chosen actions on the equilibrium path
  std::map<std::int32_t, std::vector<Action>> executed;  // after feasibility degradation
  std::map<std::int32_t, double> payoffs;
};

/// Backward induction over the sequential game tree (priority order within each step).
/// Reference solver: at most 2 vehicles and depth 3.
SpneResult solve_spne(const WorldSnapshot& snapshot, const PayoffWeights& weights,
                      const HorizonParams& horizon, const KinematicLimits& limits,
                      bool emergency_first = true);

}  // namespace crossgame
