#include "crossgame/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crossgame {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

void require(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

bool is_prob(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

}  // namespace

void validate(const ScenarioConfig& c) {
  require(c.steps >= 0, "steps", "must be >= 0");
  require(c.entry_len >= 1 && c.entry_len <= 120, "L_in", "must be in [1, 120]");
  require(c.exit_len >= 1 && c.exit_len <= 120, "L_out", "must be in [1, 120]");
  require(c.limits.v_max >= 1 && c.limits.v_max <= kMaxSpeed, "v_max",
          "must be in [1, " + std::to_string(kMaxSpeed) + "]");
  require(c.limits.d_min >= 0, "d_min", "must be >= 0");
  require(c.horizon.T >= 1 && c.horizon.T <= kMaxHorizon, "T",
          "must be in [1, " + std::to_string(kMaxHorizon) + "]");
  require(std::isfinite(c.horizon.gamma) && c.horizon.gamma > 0.0 && c.horizon.gamma <= 1.0,
          "gamma", "must be in (0,1]");
  require(c.horizon.T * c.limits.v_max + c.limits.d_min + 1 <= 64, "T",
          "T * v_max + d_min must be at most 63");
  const auto nonneg = [](double w) { return std::isfinite(w) && w >= 0.0; };
  require(nonneg(c.weights.w_prog), "w_prog", "must be >= 0");
  require(nonneg(c.weights.w_wait), "w_wait", "must be >= 0");
  require(nonneg(c.weights.w_safe), "w_safe", "must be >= 0");
  require(nonneg(c.weights.c_col), "c_col", "must be >= 0");
  require(std::isfinite(c.weights.rho) && c.weights.rho >= 1.0, "rho", "must be >= 1");
  require(c.k_max >= 0 && c.k_max <= 6, "k_max", "must be in [0, 6]");
  require(!c.level_mix.empty(), "level_mix", "must not be empty");
  double total = 0.0;
  for (const auto& [k, p] : c.level_mix) {
    require(k >= 0 && k <= c.k_max, "level_mix",
            "level " + std::to_string(k) + " outside [0, k_max=" + std::to_string(c.k_max) + "]");
    require(is_prob(p), "level_mix", "probabilities must be in [0,1]");
    total += p;
  }
  require(std::abs(total - 1.0) < 1e-9, "level_mix", "probabilities must sum to 1");
  if (c.arrival == ArrivalMode::FixedInterval) {
    require(c.interval >= 1, "h", "must be >= 1");
  } else {
    require(is_prob(c.rate), "lambda", "must be in [0,1]");
  }
  const auto& rp = c.route_probs;
  require(is_prob(rp.straight) && is_prob(rp.left) && is_prob(rp.right), "route_probs",
          "probabilities must be in [0,1]");
  require(std::abs(rp.straight + rp.left + rp.right - 1.0) < 1e-9, "route_probs",
          "probabilities must sum to 1");
  require(is_prob(c.p_rand), "p_rand", "must be in [0,1]");
  require(is_prob(c.emergency_prob), "emergency_prob", "must be in [0,1]");

  const IntersectionLayout layout(c.entry_len, c.exit_len);
  CellSet used;
  for (const auto& v : c.initial_vehicles) {
    const Route& r = layout.route(v.route);
    require(v.cell_index >= 0 && v.cell_index < r.length(), "initial_vehicles",
            "cell_index outside route " + v.route.name());
    require(v.speed >= 0 && v.speed <= c.limits.v_max, "initial_vehicles",
            "speed must be in [0, v_max]");
    require(v.level >= 0 && v.level <= c.k_max, "initial_vehicles", "level outside [0, k_max]");
    const CellId cell = r.cells[v.cell_index];
    require(!used.test(cell), "initial_vehicles", "two vehicles share cell " + layout.cell_name(cell));
    used.set(cell);
  }
}

ScenarioRng::ScenarioRng(std::uint64_t seed) : seed_(seed), arrivals_(splitmix(seed)) {}

double ScenarioRng::next_arrival_uniform() { return to_unit(arrivals_()); }

double ScenarioRng::disturbance_uniform(std::int32_t vehicle_id, int step) const {
  const std::uint64_t k = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(vehicle_id)) << 32) |
                          static_cast<std::uint32_t>(step);
  return to_unit(splitmix(splitmix(seed_ ^ 0xd1b54a32d192ed03ULL) ^ k));
}

Disturbance apply_disturbance(Action chosen, int speed, int v_max, double p_rand, double uniform) {
  if (!(uniform < p_rand)) return {chosen, false};
  const int slow = resulting_speed(speed, Action::Decel, v_max);
  const int planned = resulting_speed(speed, chosen, v_max);
  return {planned < slow ? chosen : Action::Decel, true};
}

Simulation::Simulation(ScenarioConfig config)
    : config_(std::move(config)),
      layout_(std::make_shared<IntersectionLayout>(config_.entry_len, config_.exit_len)),
      planner_(layout_, config_.limits,
               PolicyParams{config_.weights, config_.horizon, config_.k_max,
                            config_.emergency_order_priority, true}),
      rng_(config_.seed) {
  validate(config_);
}

WorldSnapshot Simulation::snapshot() const {
  return WorldSnapshot{layout_, config_.limits, vehicles_};
}

void Simulation::inject(const InitialVehicle& iv, int step) {
  VehicleState v;
  v.id = next_id_++;
  v.cls = iv.cls;
  v.route = iv.route.index();
  v.cell_index = iv.cell_index;
  v.speed = iv.speed;
  v.level = iv.level;
  v.spawn_step = step;
  v.arrival_step = step;
  vehicles_.push_back(v);
}

VehicleState Simulation::draw_arrival(Approach a) {
  // Fixed draw order per arrival: route, class, level.
  const double ur = rng_.next_arrival_uniform();
  const double uc = rng_.next_arrival_uniform();
  const double ul = rng_.next_arrival_uniform();
  const auto& rp = config_.route_probs;
  Turn turn = Turn::Right;
  if (ur < rp.straight) {
    turn = Turn::Straight;
  } else if (ur < rp.straight + rp.left) {
    turn = Turn::Left;
  }
  int level = config_.level_mix.rbegin()->first;
  double acc = 0.0;
  for (const auto& [k, p] : config_.level_mix) {
    acc += p;
    if (ul < acc) {
      level = k;
      break;
    }
  }
  VehicleState v;
  v.id = next_id_++;
  v.cls = uc < config_.emergency_prob ? VehicleClass::Emergency : VehicleClass::Normal;
  v.route = RouteKey{a, turn}.index();
  v.cell_index = -1;
  v.speed = 1;
  v.level = level;
  v.arrival_step = step_;
  return v;
}

void Simulation::spawn_arrivals(StepRecord& rec) {
  for (Approach a : kApproaches) {
    bool arrives = false;
    if (config_.arrival == ArrivalMode::FixedInterval) {
      arrives = step_ % config_.interval == 0;
    } else {
      arrives = rng_.next_arrival_uniform() < config_.rate;
    }
    if (arrives) {
      VehicleState v = draw_arrival(a);
      rec.arrivals.push_back(v.id);
      backlog_[static_cast<int>(a)].push_back({v});
    }
  }
  const CellSet occ = occupancy_of(*layout_, vehicles_);
  for (Approach a : kApproaches) {
    auto& q = backlog_[static_cast<int>(a)];
    if (q.empty()) continue;
    VehicleState v = q.front().state;
    v.cell_index = 0;
    const CellId entry = layout_->route(v.route).cells[0];
    const auto gap = gap_ahead(*layout_, occ, v);
    if (occ.test(entry) || (gap && *gap < config_.limits.d_min)) continue;
    v.speed = 1;
    v.spawn_step = step_;
    q.pop_front();
    vehicles_.insert(std::upper_bound(vehicles_.begin(), vehicles_.end(), v,
                                      [](const VehicleState& x, const VehicleState& y) {
                                        return x.id < y.id;
                                      }),
                     v);
    rec.spawns.push_back(v);
  }
}

StepRecord Simulation::step() {
  StepRecord rec;
  rec.step = step_;
  if (aborted_) throw std::logic_error("simulation aborted: " + diagnostic_);

  planner_.begin_step();
  const WorldSnapshot snap = snapshot();
  const std::vector<int> order =
      priority_indices(*layout_, vehicles_, config_.emergency_order_priority);

  CellSet committed;
  CellSet end_occ = occupancy_of(*layout_, vehicles_);
  std::vector<Traversal> traversals;
  std::vector<Commitment> observed;
  std::vector<VehicleState> next = vehicles_;
  for (int idx : order) {
    const VehicleState& v = vehicles_[idx];
    VehicleStepRecord vr;
    vr.before = v;
    vr.planned = planner_.search(snap, v.id, v.level, observed);
    const CellId here = layout_->route(v.route).cells[v.cell_index];
    end_occ.reset(here);
    if (config_.safety_filter) {
      vr.chosen = degrade(vr.planned,
                          feasible_actions(*layout_, v, committed, end_occ, config_.limits));
    } else {
      vr.chosen = vr.planned;
    }
    const auto d = apply_disturbance(vr.chosen, v.speed, config_.limits.v_max, config_.p_rand,
                                     rng_.disturbance_uniform(v.id, step_));
    vr.executed = d.executed;
    vr.disturbed = d.disturbed;
    Move m = apply_action(*layout_, v, vr.executed, config_.limits);
    vr.advanced = m.next.speed;
    observed.push_back({v.id, vr.executed});
    for (CellId c : m.traversal.cells) committed.set(c);
    if (m.traversal.end_cell) end_occ.set(*m.traversal.end_cell);
    next[idx] = m.next;
    traversals.push_back(std::move(m.traversal));
    rec.vehicles.push_back(vr);
  }

  rec.collisions = detect_collisions(traversals);
  if (!rec.collisions.empty()) {
    std::ostringstream os;
    os << "collision at step " << step_ << ":";
    for (const auto& [a, b] : rec.collisions) os << " (" << a << "," << b << ")";
    diagnostic_ = os.str();
    aborted_ = true;
  }

  vehicles_.clear();
  for (const auto& v : next) {
    if (v.exited) {
      rec.exits.push_back({v.id, v.cls, step_ - v.arrival_step + 1});
    } else {
      vehicles_.push_back(v);
    }
  }

  if (step_ == 0) {
    for (const auto& iv : config_.initial_vehicles) {
      inject(iv, 0);
      rec.arrivals.push_back(vehicles_.back().id);
      rec.spawns.push_back(vehicles_.back());
    }
    std::sort(vehicles_.begin(), vehicles_.end(),
              [](const VehicleState& a, const VehicleState& b) { return a.id < b.id; });
  }
  spawn_arrivals(rec);

  for (Approach a : kApproaches) {
    const int ai = static_cast<int>(a);
    rec.backlog[ai] = static_cast<int>(backlog_[ai].size());
    rec.queue[ai] = rec.backlog[ai];
  }
  for (const auto& v : vehicles_) {
    if (v.speed == 0 && v.cell_index < layout_->entry_len()) {
      ++rec.queue[static_cast<int>(RouteKey::from_index(v.route).approach)];
    }
  }
  rec.active = static_cast<int>(vehicles_.size());
  ++step_;
  return rec;
}

MetricsSummary collect_metrics(std::span<const StepRecord> trace) {
  MetricsSummary m;
  m.steps = static_cast<int>(trace.size());
  std::vector<int> times;
  double normal_sum = 0.0;
  double emergency_sum = 0.0;
  std::int64_t moved = 0;
  std::int64_t vehicle_steps = 0;
  double queue_sum = 0.0;
  for (const auto& rec : trace) {
    m.spawned += static_cast<std::int64_t>(rec.arrivals.size());
    for (const auto& e : rec.exits) {
      times.push_back(e.travel_time);
      if (e.cls == VehicleClass::Emergency) {
        ++m.exited_emergency;
        emergency_sum += e.travel_time;
      } else {
        ++m.exited_normal;
        normal_sum += e.travel_time;
      }
    }
    for (const auto& v : rec.vehicles) moved += v.advanced;
    vehicle_steps += static_cast<std::int64_t>(rec.vehicles.size());
    for (int q : rec.queue) {
      queue_sum += q;
      m.max_queue_length = std::max(m.max_queue_length, q);
    }
    m.collisions += static_cast<std::int64_t>(rec.collisions.size());
    if (!rec.collisions.empty()) m.aborted = true;
  }
  m.exited = static_cast<std::int64_t>(times.size());
  if (!trace.empty()) {
    m.remaining = trace.back().active;
    for (int b : trace.back().backlog) m.backlog += b;
    m.throughput = static_cast<double>(m.exited) / static_cast<double>(trace.size());
    m.mean_queue_length = queue_sum / (4.0 * static_cast<double>(trace.size()));
  }
  if (!times.empty()) {
    double sum = 0.0;
    for (int t : times) sum += t;
    m.mean_travel_time = sum / static_cast<double>(times.size());
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    m.median_travel_time = n % 2 == 1 ? static_cast<double>(times[n / 2])
                                      : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  }
  if (m.exited_normal > 0) m.mean_travel_time_normal = normal_sum / m.exited_normal;
  if (m.exited_emergency > 0) m.mean_travel_time_emergency = emergency_sum / m.exited_emergency;
  m.mean_speed = vehicle_steps > 0 ? static_cast<double>(moved) / vehicle_steps : 0.0;
  return m;
}

RunResult run(const ScenarioConfig& config) {
  RunResult out;
  Simulation sim(config);
  for (int s = 0; s < config.steps; ++s) {
    out.trace.push_back(sim.step());
    if (sim.aborted()) {
      out.diagnostic = sim.diagnostic();
      break;
    }
  }
  out.summary = collect_metrics(out.trace);
  return out;
}

WorldSnapshot random_snapshot(std::shared_ptr<const IntersectionLayout> layout,
                              KinematicLimits limits, int n, int k_max, std::mt19937_64& rng) {
  const int lo = std::max(0, layout->entry_len() - 2 * limits.v_max - 2);
  std::vector<VehicleState> vs;
  CellSet used;
  std::uniform_int_distribution<int> route_d(0, kRouteCount - 1);
  std::uniform_int_distribution<int> speed_d(0, limits.v_max);
  std::uniform_int_distribution<int> level_d(0, std::max(k_max, 0));
  std::bernoulli_distribution emergency_d(0.2);
  int attempts = 0;
  while (static_cast<int>(vs.size()) < n && attempts++ < 1000 * (n + 1)) {
    VehicleState v;
    v.route = route_d(rng);
    const Route& r = layout->route(v.route);
    const int hi = std::min(r.length() - 1, layout->entry_len() + r.box_len + 1);
    v.cell_index = std::uniform_int_distribution<int>(lo, hi)(rng);
    v.speed = speed_d(rng);
    v.cls = emergency_d(rng) ? VehicleClass::Emergency : VehicleClass::Normal;
    v.level = level_d(rng);
    const CellId c = r.cells[v.cell_index];
    if (used.test(c)) continue;
    used.set(c);
    v.id = static_cast<std::int32_t>(vs.size());
    vs.push_back(v);
  }
  return WorldSnapshot::make(std::move(layout), limits, std::move(vs));
}

SpneReport spne_check(int count, std::uint64_t seed, const ScenarioConfig& config) {
  SpneReport report;
  auto layout = std::make_shared<const IntersectionLayout>(config.entry_len, config.exit_len);
  HorizonParams horizon = config.horizon;
  horizon.T = std::min(horizon.T, 3);
  std::mt19937_64 rng(splitmix(seed));
  for (int k = 1; k <= config.k_max; ++k) report.matches[k] = 0;
  for (int i = 0; i < count; ++i) {
    const int n = std::uniform_int_distribution<int>(1, 2)(rng);
    const WorldSnapshot snap = random_snapshot(layout, config.limits, n, config.k_max, rng);
    const SpneResult ref = solve_spne(snap, config.weights, horizon, config.limits,
                                      config.emergency_order_priority);
    ++report.snapshots;
    if (snap.vehicles.size() == 1) ++report.single_vehicle;
    for (int k = 1; k <= config.k_max; ++k) {
      bool agree = true;
      for (const auto& v : snap.vehicles) {
        const Action a = levelk_action(snap, v.id, k, config.weights, horizon, config.limits,
                                       config.k_max, config.emergency_order_priority);
        const Action b = ref.plans.at(v.id).actions.front();
        agree = agree && resulting_speed(v.speed, a, config.limits.v_max) ==
                             resulting_speed(v.speed, b, config.limits.v_max);
      }
      if (agree) ++report.matches[k];
    }
  }
  return report;
}

}  // namespace crossgame
