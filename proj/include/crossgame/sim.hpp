#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossgame/game.hpp"
#include "crossgame/policy.hpp"
#include "crossgame/priority.hpp"
#include "crossgame/world.hpp"

namespace crossgame {

/// Invalid scenario input; `field` names the offending config key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class ArrivalMode { FixedInterval, Bernoulli };

struct RouteProbs {
  double straight = 0.5;
  double left = 0.25;
  double right = 0.25;
};

struct InitialVehicle {
  RouteKey route;
  int cell_index = 0;
  int speed = 1;
  VehicleClass cls = VehicleClass::Normal;
  int level = 1;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int steps = 300;
  int entry_len = 10;
  int exit_len = 10;
  KinematicLimits limits;
  PayoffWeights weights;
  HorizonParams horizon;
  int k_max = 3;
  std::map<int, double> level_mix{{1, 1.0}};
  ArrivalMode arrival = ArrivalMode::FixedInterval;
  int interval = 4;    // fixed_interval: one arrival per approach every `interval` steps
  double rate = 0.0;   // bernoulli: arrival probability per approach per step
  RouteProbs route_probs;
  double p_rand = 0.1;
  double emergency_prob = 0.05;
  bool emergency_order_priority = true;
  bool safety_filter = true;
  std::vector<InitialVehicle> initial_vehicles;
};

/// Throws ConfigError naming the first invalid field.
void validate(const ScenarioConfig& config);

struct VehicleStepRecord {
  VehicleState before;
  Action planned = Action::Keep;   // raw policy output
  Action chosen = Action::Keep;    // after the feasibility filter
  Action executed = Action::Keep;  // after disturbance
  bool disturbed = false;
  int advanced = 0;
};

struct ExitRecord {
  std::int32_t id = 0;
  VehicleClass cls = VehicleClass::Normal;
  int travel_time = 0;
};

struct StepRecord {
  int step = 0;
  std::vector<VehicleStepRecord> vehicles;  // decision order
  std::vector<std::int32_t> arrivals;       // joined a backlog this step
  std::vector<VehicleState> spawns;         // placed on the road this step
  std::vector<ExitRecord> exits;
  std::vector<std::pair<std::int32_t, std::int32_t>> collisions;
  std::array<int, 4> queue{};    // per approach: backlog + stopped entry-lane vehicles
  std::array<int, 4> backlog{};
  int active = 0;                // vehicles on the road after the step
};

struct MetricsSummary {
  int steps = 0;
  std::int64_t spawned = 0;  // arrivals, including those still in backlog
  std::int64_t exited = 0;
  std::int64_t remaining = 0;
  std::int64_t backlog = 0;
  std::optional<double> mean_travel_time;
  std::optional<double> median_travel_time;
  std::optional<double> mean_travel_time_normal;
  std::optional<double> mean_travel_time_emergency;
  std::int64_t exited_normal = 0;
  std::int64_t exited_emergency = 0;
  double mean_speed = 0.0;
  double throughput = 0.0;
  double mean_queue_length = 0.0;
  int max_queue_length = 0;
  std::int64_t collisions = 0;
  bool aborted = false;
};

struct PendingVehicle {
  VehicleState state;  // cell_index -1 until placed
};

/// Deterministic draws. Arrivals consume one sequential stream in approach order; the
/// disturbance draw of a vehicle at a step is a pure function of (seed, id, step), so
/// runs that share an arrival process see identical disturbance events.
class ScenarioRng {
 public:
  explicit ScenarioRng(std::uint64_t seed);
  double next_arrival_uniform();
  double disturbance_uniform(std::int32_t vehicle_id, int step) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 arrivals_;
};

/// Disturbance override: with probability p_rand the vehicle is forced to slow down.
/// The executed action is Decel unless the chosen action is already slower (HardStop
/// from speed >= 2), so the executed traversal is always a prefix of the chosen one.
struct Disturbance {
  Action executed;
  bool disturbed;
};
Disturbance apply_disturbance(Action chosen, int speed, int v_max, double p_rand, double uniform);

class Simulation {
 public:
  explicit Simulation(ScenarioConfig config);

  /// One decision round, simultaneous motion, collision audit, exits, arrivals.
  StepRecord step();

  int step_index() const { return step_; }
  bool aborted() const { return aborted_; }
  const std::string& diagnostic() const { return diagnostic_; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  const std::array<std::deque<PendingVehicle>, 4>& backlogs() const { return backlog_; }
  const IntersectionLayout& layout() const { return *layout_; }
  std::shared_ptr<const IntersectionLayout> layout_ptr() const { return layout_; }
  WorldSnapshot snapshot() const;
  const ScenarioConfig& config() const { return config_; }
  const Planner& planner() const { return planner_; }

  /// Places a vehicle directly (used for initial vehicles and tests).
  void inject(const InitialVehicle& v, int step);

 private:
  void spawn_arrivals(StepRecord& rec);
  VehicleState draw_arrival(Approach a);

  ScenarioConfig config_;
  std::shared_ptr<const IntersectionLayout> layout_;
  Planner planner_;
  ScenarioRng rng_;
  std::vector<VehicleState> vehicles_;  // sorted by id
  std::array<std::deque<PendingVehicle>, 4> backlog_;
  std::int32_t next_id_ = 0;
  int step_ = 0;
  bool aborted_ = false;
  std::string diagnostic_;
};

struct RunResult {
  MetricsSummary summary;
  std::vector<StepRecord> trace;
  std::string diagnostic;  // non-empty when the run aborted
};

RunResult run(const ScenarioConfig& config);

MetricsSummary collect_metrics(std::span<const StepRecord> trace);

/// `n` vehicles on distinct cells within a few cells of the box, random routes, speeds,
/// classes and levels in [0, k_max]. Ids are 0..n-1.
WorldSnapshot random_snapshot(std::shared_ptr<const IntersectionLayout> layout,
                              KinematicLimits limits, int n, int k_max, std::mt19937_64& rng);

struct SpneReport {
  int snapshots = 0;
  int single_vehicle = 0;
  std::map<int, int> matches;  // level -> snapshots whose first moves all agree
};

/// Compares level-k first moves (k = 1..k_max) with the equilibrium path of solve_spne on
/// `count` random snapshots of one or two vehicles. Moves agree when they produce the same
/// speed. The horizon is capped at the reference solver's depth limit.
SpneReport spne_check(int count, std::uint64_t seed, const ScenarioConfig& config);

}  // namespace crossgame
