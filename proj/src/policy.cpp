#include "crossgame/policy.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <unordered_map>

#include "crossgame/priority.hpp"

namespace crossgame {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Best {
  double value = kNegInf;
  Action first = Action::Keep;
  bool set = false;

  void offer(double v, Action a) {
    if (!set || v > value) {
      value = v;
      first = a;
      set = true;
    }
  }
};

double exit_reward(const PolicyParams& p, const KinematicLimits& lim, VehicleClass cls) {
  StageOutcome o;
  o.cells_advanced = lim.v_max;
  return stage_reward(o, p.weights, cls);
}

// Level-0 problem in the ego's route frame: bit k of a mask is route position
// cell_index + k. Positions >= len are off the map.
struct Level0Problem {
  int len = 0;
  int speed = 0;
  VehicleClass cls = VehicleClass::Normal;
  int depth = 0;
  int box_lo = 0;  // frame positions of the box segment; admission applies while box_lo > 0
  int box_hi = 0;
  std::uint64_t guard = 0;  // bit t: the box guard cell is claimed at the end of step t
  std::array<std::uint64_t, kMaxHorizon> trav{};
  std::array<std::uint64_t, kMaxHorizon> end{};
};

struct Level0Key {
  std::uint64_t head = 0;
  std::array<std::uint64_t, 2 * kMaxHorizon> masks{};
  friend bool operator==(const Level0Key&, const Level0Key&) = default;
};

struct Level0KeyHash {
  std::size_t operator()(const Level0Key& k) const {
    std::uint64_t h = mix64(k.head);
    for (auto m : k.masks) h = mix64(h ^ m);
    return static_cast<std::size_t>(h);
  }
};

Level0Key key_of(const Level0Problem& p) {
  Level0Key k;
  k.head = static_cast<std::uint64_t>(p.len) | (static_cast<std::uint64_t>(p.speed) << 8) |
           (static_cast<std::uint64_t>(p.cls) << 16) | (static_cast<std::uint64_t>(p.depth) << 20) |
           (static_cast<std::uint64_t>(std::max(p.box_lo, 0)) << 24) |
           (static_cast<std::uint64_t>(std::max(p.box_hi, 0)) << 32) | (p.guard << 40);
  for (int t = 0; t < p.depth; ++t) {
    k.masks[2 * t] = p.trav[t];
    k.masks[2 * t + 1] = p.end[t];
  }
  return k;
}

std::uint64_t range_mask(int lo, int hi) {  // bits lo..hi inclusive, empty if hi < lo
  if (hi < lo) return 0;
  const int width = hi - lo + 1;
  const std::uint64_t ones = width >= 64 ? ~0ULL : ((1ULL << width) - 1);
  return ones << lo;
}

class Level0Search {
 public:
  Level0Search(const Level0Problem& p, const PolicyParams& params, const KinematicLimits& lim,
               std::uint64_t& nodes)
      : p_(p), params_(params), lim_(lim), nodes_(nodes), exit_r_(exit_reward(params, lim, p.cls)) {}

  Action run() {
    dfs(0, 0, p_.speed, false, {}, Action::Keep);
    return best_.first;
  }

 private:
  void dfs(int t, int pos, int speed, bool exited, DiscountedSum acc, Action root) {
    ++nodes_;
    const double gamma = params_.horizon.gamma;
    if (t == p_.depth) {
      best_.offer(acc.total, root);
      return;
    }
    if (exited) {
      for (int s = t; s < p_.depth; ++s) acc = acc.then(exit_r_, gamma);
      best_.offer(acc.total, root);
      return;
    }
    const std::uint64_t trav = p_.trav[t];
    const std::uint64_t endm = p_.end[t];
    const std::uint64_t claimed = trav | endm;

    ActionSet feasible;
    for (Action a : kCanonicalActions) {
      if (a == Action::HardStop) {
        feasible.insert(a);
        continue;
      }
      const int ns = resulting_speed(speed, a, lim_.v_max);
      const int end = pos + ns;
      bool ok;
      if (ns == 0) {
        ok = !((claimed >> pos) & 1ULL);
      } else {
        ok = (range_mask(pos + 1, std::min(end, p_.len - 1)) & claimed) == 0;
        if (ok && end < p_.len) {
          ok = (range_mask(end + 1, std::min(end + lim_.d_min, p_.len - 1)) & endm) == 0;
        }
        if (ok && pos < p_.box_lo && end >= p_.box_lo) {
          ok = ((p_.guard >> t) & 1ULL) == 0 &&
               (range_mask(std::max(end + 1, p_.box_lo), std::min(p_.box_hi, p_.len - 1)) & endm) == 0;
        }
      }
      if (ok) feasible.insert(a);
    }

    std::array<bool, kMaxSpeed + 1> seen{};
    for (Action planned : kCanonicalActions) {
      const Action exec = degrade(planned, feasible);
      const int ns = resulting_speed(speed, exec, lim_.v_max);
      if (seen[ns]) continue;
      seen[ns] = true;
      const int end = pos + ns;
      const bool now_exited = end >= p_.len;
      StageOutcome o;
      o.cells_advanced = ns;
      o.stopped = ns == 0 && !now_exited;
      if (!now_exited) {
        o.gap_violation =
            (range_mask(end + 1, std::min(end + lim_.d_min, p_.len - 1)) & endm) != 0;
      }
      std::uint64_t foot = range_mask(pos + 1, std::min(end, p_.len - 1));
      if (!now_exited) foot |= 1ULL << end;
      o.collided = (foot & claimed) != 0;
      const double r = stage_reward(o, params_.weights, p_.cls);
      dfs(t + 1, end, ns, now_exited, acc.then(r, gamma), t == 0 ? planned : root);
    }
  }

  const Level0Problem& p_;
  const PolicyParams& params_;
  const KinematicLimits& lim_;
  std::uint64_t& nodes_;
  double exit_r_;
  Best best_;
};

const Commitment* observed_of(std::span<const Commitment> observed, std::int32_t id) {
  for (const auto& c : observed) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

// Per-cell claim counts of every vehicle moving at constant speed, one layer per step. An
// observed vehicle makes its executed move first and then cruises at the resulting speed.
class ConstantSpeedField {
 public:
  ConstantSpeedField(const IntersectionLayout& layout, std::span<const VehicleState> vs, int depth,
                     const KinematicLimits& lim, std::span<const Commitment> observed = {})
      : ncells_(layout.cell_count()), depth_(depth),
        trav_(static_cast<std::size_t>(depth) * ncells_, 0),
        end_(static_cast<std::size_t>(depth) * ncells_, 0) {
    for (const auto& v : vs) {
      const Route& r = layout.route(v.route);
      int speed = v.speed;
      if (const Commitment* c = observed_of(observed, v.id)) {
        speed = resulting_speed(v.speed, c->executed, lim.v_max);
      }
      for (int t = 0; t < depth; ++t) {
        const int from = v.cell_index + speed * t;
        const int to = from + speed;
        if (from >= r.length()) break;
        for (int i = from + 1; i <= std::min(to, r.length() - 1); ++i) ++trav_[t * ncells_ + r.cells[i]];
        if (to < r.length()) ++end_[t * ncells_ + r.cells[to]];
      }
    }
  }

  Level0Problem problem_for(const IntersectionLayout& layout, const VehicleState& ego,
                            const KinematicLimits& lim) const {
    Level0Problem p;
    const Route& r = layout.route(ego.route);
    int cap = depth_ * lim.v_max + lim.d_min + 1;
    p.box_lo = layout.entry_len() - ego.cell_index;
    p.box_hi = p.box_lo + r.box_len - 1;
    if (p.box_lo > 0 && p.box_lo <= depth_ * lim.v_max) {
      cap = std::max(cap, p.box_hi + 1);
    } else {
      p.box_lo = p.box_hi = 0;
    }
    p.len = std::min(r.length() - ego.cell_index, cap);
    p.speed = ego.speed;
    p.cls = ego.cls;
    p.depth = depth_;
    for (int t = 0; t < depth_ && p.box_lo > 0; ++t) {
      if (end_[t * ncells_ + r.box_guard] > 0) p.guard |= 1ULL << t;
    }
    for (int t = 0; t < depth_; ++t) {
      // The ego's own constant-speed claims are part of the counts; subtract them.
      const int own_from = ego.speed * t;
      const int own_to = own_from + ego.speed;
      for (int k = 0; k < p.len; ++k) {
        const CellId c = r.cells[ego.cell_index + k];
        int tc = trav_[t * ncells_ + c];
        int ec = end_[t * ncells_ + c];
        if (own_from < r.length() - ego.cell_index) {
          if (k > own_from && k <= own_to) --tc;
          if (k == own_to) --ec;
        }
        if (tc > 0) p.trav[t] |= 1ULL << k;
        if (ec > 0) p.end[t] |= 1ULL << k;
      }
    }
    return p;
  }

 private:
  int ncells_;
  int depth_;
  std::vector<std::uint8_t> trav_;
  std::vector<std::uint8_t> end_;
};

struct VecHash {
  std::size_t operator()(const std::vector<std::uint64_t>& v) const {
    std::uint64_t h = 0x12345;
    for (auto w : v) h = mix64(h ^ w);
    return static_cast<std::size_t>(h);
  }
};

std::vector<std::uint64_t> encode(std::span<const VehicleState> vs, int level, int depth) {
  std::vector<std::uint64_t> key;
  key.reserve(2 * vs.size() + 1);
  key.push_back(static_cast<std::uint64_t>(level) | (static_cast<std::uint64_t>(depth) << 8));
  for (const auto& v : vs) {
    key.push_back((static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.id)) << 32) |
                  static_cast<std::uint32_t>(v.spawn_step));
    key.push_back(static_cast<std::uint64_t>(v.route) |
                  (static_cast<std::uint64_t>(static_cast<std::uint16_t>(v.cell_index)) << 8) |
                  (static_cast<std::uint64_t>(v.speed) << 24) |
                  (static_cast<std::uint64_t>(v.cls) << 32));
  }
  return key;
}

// Mutable state of one sequential decision round.
struct RoundState {
  CellSet committed;
  CellSet end_occ;
  CellSet others_foot;
  std::vector<VehicleState> next;
};

}  // namespace

struct Planner::Impl {
  std::shared_ptr<const IntersectionLayout> layout;
  KinematicLimits limits;
  PolicyParams params;
  Stats* stats = nullptr;
  std::unordered_map<Level0Key, Action, Level0KeyHash> memo0;
  std::unordered_map<std::vector<std::uint64_t>, std::vector<std::int8_t>, VecHash> memok;

  Action level0(std::span<const VehicleState> vs, int idx, int depth,
               std::span<const Commitment> observed = {}) {
    ConstantSpeedField field(*layout, vs, depth, limits, observed);
    return level0_with(field, vs[idx]);
  }

  Action level0_with(const ConstantSpeedField& field, const VehicleState& ego) {
    ++stats->level0_searches;
    const Level0Problem p = field.problem_for(*layout, ego, limits);
    if (params.memoize) {
      const Level0Key key = key_of(p);
      if (auto it = memo0.find(key); it != memo0.end()) {
        ++stats->level0_hits;
        return it->second;
      }
      const Action a = Level0Search(p, params, limits, stats->nodes).run();
      memo0.emplace(key, a);
      return a;
    }
    return Level0Search(p, params, limits, stats->nodes).run();
  }

  // Advances vehicle `idx` of the round by `want` (degraded to feasible).
  Action commit(RoundState& rs, int idx, Action want, bool is_ego, CellSet* ego_foot) const {
    const VehicleState& v = rs.next[idx];
    const Route& route = layout->route(v.route);
    const CellId here = route.cells[v.cell_index];
    rs.end_occ.reset(here);
    const ActionSet feasible = feasible_actions(*layout, v, rs.committed, rs.end_occ, limits);
    const Action exec = degrade(want, feasible);
    const int ns = resulting_speed(v.speed, exec, limits.v_max);
    const int end = v.cell_index + ns;
    CellSet* foot = is_ego ? ego_foot : &rs.others_foot;
    for (int i = v.cell_index + 1; i <= std::min(end, route.length() - 1); ++i) {
      rs.committed.set(route.cells[i]);
      foot->set(route.cells[i]);
    }
    VehicleState& out = rs.next[idx];
    if (end < route.length()) {
      rs.end_occ.set(route.cells[end]);
      foot->set(route.cells[end]);
    } else {
      out.exited = true;
    }
    out.speed = ns;
    out.cell_index = end;
    return exec;
  }

  Action decide_raw(std::span<const VehicleState> vs, int idx, int level, int depth,
                    std::span<const Commitment> observed = {}) {
    if (level == 0) return level0(vs, idx, depth, observed);
    return levelk(vs, idx, level, depth, observed);
  }

  bool may_enter_box(const VehicleState& v, int depth) const {
    const int box_lo = layout->entry_len();
    return v.cell_index < box_lo && v.cell_index + depth * limits.v_max >= box_lo;
  }

  // Route index range a vehicle may occupy or inspect within `depth` steps.
  int window_end(const VehicleState& v, int depth) const {
    const Route& r = layout->route(v.route);
    int hi = v.cell_index + depth * limits.v_max + limits.d_min;
    if (may_enter_box(v, depth)) hi = std::max(hi, layout->entry_len() + r.box_len - 1);
    return std::min(hi, r.length() - 1);
  }

  std::vector<std::vector<int>> occupants;  // scratch: per cell, vehicles that may reach it

  // The vehicles whose cells within `depth` steps (actual or constant-speed predicted) can
  // reach, directly or through a chain, the cells vs[idx] inspects. Speeds never exceed
  // v_max and windows only shrink along a rollout, so restricting the search is exact.
  std::vector<VehicleState> component(std::span<const VehicleState> vs, int idx, int depth,
                                      int& new_idx) {
    const int n = static_cast<int>(vs.size());
    occupants.resize(layout->cell_count());
    for (auto& o : occupants) o.clear();
    for (int j = 0; j < n; ++j) {
      const Route& r = layout->route(vs[j].route);
      const int hi = std::min(vs[j].cell_index + depth * limits.v_max, r.length() - 1);
      for (int i = vs[j].cell_index; i <= hi; ++i) occupants[r.cells[i]].push_back(j);
    }
    std::vector<char> in(n, 0);
    std::vector<int> stack{idx};
    in[idx] = 1;
    while (!stack.empty()) {
      const VehicleState& x = vs[stack.back()];
      stack.pop_back();
      const Route& r = layout->route(x.route);
      const auto visit = [&](CellId c) {
        for (int y : occupants[c]) {
          if (in[y]) continue;
          in[y] = 1;
          stack.push_back(y);
        }
      };
      const int hi = window_end(x, depth);
      for (int i = x.cell_index; i <= hi; ++i) visit(r.cells[i]);
      if (may_enter_box(x, depth)) visit(r.box_guard);
    }
    std::vector<VehicleState> out;
    for (int j = 0; j < n; ++j) {
      if (!in[j]) continue;
      if (j == idx) new_idx = static_cast<int>(out.size());
      out.push_back(vs[j]);
    }
    return out;
  }

  Action levelk(std::span<const VehicleState> all, int all_idx, int level, int depth,
                std::span<const Commitment> observed = {}) {
    ++stats->levelk_searches;
    int idx = all_idx;
    std::vector<VehicleState> sub;
    std::span<const VehicleState> vs = all;
    if (params.restrict_components) {
      sub = component(all, all_idx, depth, idx);
      vs = sub;
    }
    if (!params.memoize || !observed.empty()) {
      return levelk_search(vs, vs[idx].id, level, depth, observed);
    }
    auto key = encode(vs, level, depth);
    auto it = memok.find(key);
    if (it == memok.end()) it = memok.emplace(std::move(key), std::vector<std::int8_t>(vs.size(), -1)).first;
    if (it->second[idx] >= 0) {
      ++stats->levelk_hits;
      return static_cast<Action>(it->second[idx]);
    }
    const Action a = levelk_search(vs, vs[idx].id, level, depth);
    it->second[idx] = static_cast<std::int8_t>(a);
    return a;
  }

  Action levelk_search(std::span<const VehicleState> vs, std::int32_t ego, int level, int depth,
                       std::span<const Commitment> observed = {}) {
    Best best;
    auto it = std::lower_bound(vs.begin(), vs.end(), ego,
                               [](const VehicleState& v, std::int32_t id) { return v.id < id; });
    dfs(vs, ego, it->cls, level, depth, 0, {}, Action::Keep, best, observed);
    return best.first;
  }

  // `observed` fixes the first-step moves of vehicles that already decided for real.
  void dfs(std::span<const VehicleState> vs, std::int32_t ego, VehicleClass ego_cls, int level,
           int depth, int t, DiscountedSum acc, Action root, Best& best,
           std::span<const Commitment> observed = {}) {
    ++stats->nodes;
    const double gamma = params.horizon.gamma;
    if (t == depth) {
      best.offer(acc.total, root);
      return;
    }
    auto ego_it = std::lower_bound(vs.begin(), vs.end(), ego,
                                   [](const VehicleState& v, std::int32_t id) { return v.id < id; });
    if (ego_it == vs.end() || ego_it->id != ego) {
      // Ego has left the map; every continuation is identical.
      const double r = exit_reward(params, limits, ego_cls);
      for (int s = t; s < depth; ++s) acc = acc.then(r, gamma);
      best.offer(acc.total, root);
      return;
    }
    const int remaining = depth - t;
    std::vector<VehicleState> sub;
    int ego_idx = static_cast<int>(ego_it - vs.begin());
    if (t > 0 && params.restrict_components) {
      sub = component(vs, ego_idx, remaining, ego_idx);
      vs = sub;
    }
    const int n = static_cast<int>(vs.size());

    // Opponents' level-(k-1) choices on this node's snapshot.
    std::vector<Action> desired(n, Action::Keep);
    std::vector<char> fixed(n, 0);
    for (int j = 0; j < n; ++j) {
      if (const Commitment* c = observed_of(observed, vs[j].id); c != nullptr && j != ego_idx) {
        desired[j] = c->executed;
        fixed[j] = 1;
      }
    }
    if (level - 1 == 0) {
      ConstantSpeedField field(*layout, vs, remaining, limits);
      for (int j = 0; j < n; ++j) {
        if (j != ego_idx && !fixed[j]) desired[j] = level0_with(field, vs[j]);
      }
    } else {
      for (int j = 0; j < n; ++j) {
        if (j != ego_idx && !fixed[j]) desired[j] = levelk(vs, j, level - 1, remaining);
      }
    }

    const std::vector<int> order = priority_indices(*layout, vs, params.emergency_first);
    RoundState prefix;
    prefix.next.assign(vs.begin(), vs.end());
    prefix.end_occ = occupancy_of(*layout, vs);
    CellSet unused;
    int pos = 0;
    for (; order[pos] != ego_idx; ++pos) commit(prefix, order[pos], desired[order[pos]], false, &unused);

    const VehicleState& me = vs[ego_idx];
    const Route& route = layout->route(me.route);
    std::array<bool, kMaxSpeed + 1> seen{};
    for (Action planned : kCanonicalActions) {
      RoundState rs = prefix;
      CellSet ego_foot;
      const Action exec = commit(rs, ego_idx, planned, true, &ego_foot);
      const int ns = resulting_speed(me.speed, exec, limits.v_max);
      if (seen[ns]) continue;
      seen[ns] = true;
      for (int q = pos + 1; q < n; ++q) commit(rs, order[q], desired[order[q]], false, &unused);

      const VehicleState& after = rs.next[ego_idx];
      StageOutcome o;
      o.cells_advanced = ns;
      o.stopped = ns == 0 && !after.exited;
      if (!after.exited) {
        const auto gap = gap_from(route, rs.end_occ, after.cell_index);
        o.gap_violation = gap && *gap < limits.d_min;
      }
      o.collided = (ego_foot & rs.others_foot).any();
      const double r = stage_reward(o, params.weights, me.cls);

      std::vector<VehicleState>& child = rs.next;
      child.erase(std::remove_if(child.begin(), child.end(),
                                 [](const VehicleState& v) { return v.exited; }),
                  child.end());
      dfs(child, ego, ego_cls, level, depth, t + 1, acc.then(r, gamma), t == 0 ? planned : root,
          best);
    }
  }

};

WorldSnapshot WorldSnapshot::make(std::shared_ptr<const IntersectionLayout> layout,
                                  KinematicLimits limits, std::vector<VehicleState> vehicles) {
  std::erase_if(vehicles, [](const VehicleState& v) { return v.exited; });
  std::sort(vehicles.begin(), vehicles.end(),
            [](const VehicleState& a, const VehicleState& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < vehicles.size(); ++i) {
    if (vehicles[i].id == vehicles[i - 1].id) {
      throw PolicyError("duplicate vehicle id " + std::to_string(vehicles[i].id));
    }
  }
  return WorldSnapshot{std::move(layout), limits, std::move(vehicles)};
}

const VehicleState* WorldSnapshot::find(std::int32_t id) const {
  auto it = std::lower_bound(vehicles.begin(), vehicles.end(), id,
                             [](const VehicleState& v, std::int32_t i) { return v.id < i; });
  return it != vehicles.end() && it->id == id ? &*it : nullptr;
}

FrozenSchedule constant_speed_schedule(const WorldSnapshot& snapshot, std::int32_t ego,
                                       int steps, std::span<const Commitment> observed) {
  FrozenSchedule out(steps);
  for (const auto& v0 : snapshot.vehicles) {
    if (v0.id == ego) continue;
    VehicleState v = v0;
    const Commitment* c = observed_of(observed, v.id);
    for (int t = 0; t < steps && !v.exited; ++t) {
      const Action a = t == 0 && c != nullptr ? c->executed : Action::Keep;
      Move m = apply_action(*snapshot.layout, v, a, snapshot.limits);
      out[t].push_back(std::move(m.traversal));
      v = m.next;
    }
  }
  return out;
}

ActionSet decision_feasible_set(const WorldSnapshot& snapshot, std::int32_t ego,
                                std::span<const Commitment> observed) {
  const VehicleState* me = snapshot.find(ego);
  if (me == nullptr) throw PolicyError("vehicle " + std::to_string(ego) + " not in snapshot");
  CellSet cells;
  CellSet end_occ;
  for (const auto& v : snapshot.vehicles) {
    if (v.id == ego) continue;
    if (const Commitment* c = observed_of(observed, v.id)) {
      const Move m = apply_action(*snapshot.layout, v, c->executed, snapshot.limits);
      for (CellId cell : m.traversal.cells) cells.set(cell);
      if (m.traversal.end_cell) end_occ.set(*m.traversal.end_cell);
    } else if (auto cell = current_cell(*snapshot.layout, v)) {
      end_occ.set(*cell);
    }
  }
  return feasible_actions(*snapshot.layout, *me, cells, end_occ, snapshot.limits);
}

Planner::Planner(std::shared_ptr<const IntersectionLayout> layout, KinematicLimits limits,
                 PolicyParams params)
    : impl_(std::make_shared<Impl>()), params_(params) {
  if (params.horizon.T < 1 || params.horizon.T > kMaxHorizon) {
    throw PolicyError("horizon T must be in [1, " + std::to_string(kMaxHorizon) + "]");
  }
  if (limits.v_max < 1 || limits.v_max > kMaxSpeed) throw PolicyError("v_max out of range");
  if (params.horizon.T * limits.v_max + limits.d_min + 1 > 64) {
    throw PolicyError("T * v_max + d_min must be below 64");
  }
  impl_->layout = std::move(layout);
  impl_->limits = limits;
  impl_->params = params;
  impl_->stats = &stats_;
}

Action Planner::search(const WorldSnapshot& snapshot, std::int32_t ego, int level,
                       std::span<const Commitment> observed) {
  if (level < 0 || level > params_.k_max) {
    throw PolicyError("level " + std::to_string(level) + " outside [0, " +
                      std::to_string(params_.k_max) + "]");
  }
  const VehicleState* me = snapshot.find(ego);
  if (me == nullptr) throw PolicyError("vehicle " + std::to_string(ego) + " not active");
  impl_->stats = &stats_;
  const int idx = static_cast<int>(me - snapshot.vehicles.data());
  return impl_->decide_raw(snapshot.vehicles, idx, level, params_.horizon.T, observed);
}

Action Planner::decide(const WorldSnapshot& snapshot, std::int32_t ego, int level,
                       std::span<const Commitment> observed) {
  const Action raw = search(snapshot, ego, level, observed);
  return degrade(raw, decision_feasible_set(snapshot, ego, observed));
}

void Planner::begin_step() {
  impl_->memok.clear();
  if (impl_->memo0.size() > (1u << 21)) impl_->memo0.clear();
}

Action level0_action(const WorldSnapshot& snapshot, std::int32_t ego, const PayoffWeights& weights,
                     const HorizonParams& horizon, const KinematicLimits& limits) {
  PolicyParams p;
  p.weights = weights;
  p.horizon = horizon;
  Planner planner(snapshot.layout, limits, p);
  return planner.search(snapshot, ego, 0);
}

Action levelk_action(const WorldSnapshot& snapshot, std::int32_t ego, int k,
                     const PayoffWeights& weights, const HorizonParams& horizon,
                     const KinematicLimits& limits, int k_max, bool emergency_first) {
  if (k > k_max) throw PolicyError("level " + std::to_string(k) + " exceeds k_max");
  if (k == 0) return level0_action(snapshot, ego, weights, horizon, limits);
  PolicyParams p;
  p.weights = weights;
  p.horizon = horizon;
  p.k_max = k_max;
  p.emergency_first = emergency_first;
  Planner planner(snapshot.layout, limits, p);
  return planner.search(snapshot, ego, k);
}

Plan best_response_exhaustive(const WorldSnapshot& snapshot, std::int32_t ego,
                              const FrozenSchedule& frozen, const PayoffWeights& weights,
                              const HorizonParams& horizon, const KinematicLimits& limits) {
  const VehicleState* me = snapshot.find(ego);
  if (me == nullptr) throw PolicyError("vehicle " + std::to_string(ego) + " not active");
  const int T = horizon.T;
  if (static_cast<int>(frozen.size()) < T) throw PolicyError("frozen schedule shorter than T");
  const IntersectionLayout& layout = *snapshot.layout;
  const Route& route = layout.route(me->route);

  std::vector<CellSet> committed(T), ends(T);
  for (int t = 0; t < T; ++t) {
    for (const auto& tr : frozen[t]) {
      for (CellId c : tr.cells) committed[t].set(c);
      if (tr.end_cell) ends[t].set(*tr.end_cell);
    }
  }
  StageOutcome gone;
  gone.cells_advanced = limits.v_max;
  const double exit_r = stage_reward(gone, weights, me->cls);

  std::size_t plans = 1;
  for (int t = 0; t < T; ++t) plans *= 4;
  Plan best;
  double best_value = kNegInf;
  std::vector<Action> actions(T);
  std::vector<double> rewards(T);
  for (std::size_t code = 0; code < plans; ++code) {
    std::size_t c = code;
    for (int t = T - 1; t >= 0; --t) {
      actions[t] = static_cast<Action>(c % 4);
      c /= 4;
    }
    VehicleState v = *me;
    for (int t = 0; t < T; ++t) {
      if (v.exited) {
        rewards[t] = exit_r;
        continue;
      }
      const ActionSet feasible = feasible_actions(layout, v, committed[t], ends[t], limits);
      Move m = apply_action(layout, v, degrade(actions[t], feasible), limits);
      StageOutcome o;
      o.cells_advanced = m.next.speed;
      o.stopped = m.next.speed == 0 && !m.next.exited;
      if (!m.next.exited) {
        const auto gap = gap_from(route, ends[t], m.next.cell_index);
        o.gap_violation = gap && *gap < limits.d_min;
      }
      std::vector<Traversal> all = frozen[t];
      all.push_back(m.traversal);
      for (const auto& [a, b] : detect_collisions(all)) {
        if (a == ego || b == ego) o.collided = true;
      }
      rewards[t] = stage_reward(o, weights, v.cls);
      v = m.next;
    }
    const double value = discounted_payoff(rewards, horizon.gamma);
    if (value > best_value) {
      best_value = value;
      best.actions = actions;
    }
  }
  return best;
}

namespace {

class SpneSolver {
 public:
  SpneSolver(const WorldSnapshot& s, const PayoffWeights& w, const HorizonParams& h,
             const KinematicLimits& lim, bool emergency_first)
      : layout_(*s.layout), weights_(w), horizon_(h), limits_(lim),
        emergency_first_(emergency_first), initial_(s.vehicles) {}

  struct PathEntry {
    int slot;
    Action planned;
    Action executed;
  };
  struct Outcome {
    std::array<double, 2> value{};
    std::vector<PathEntry> path;
  };

  Outcome solve() {
    std::array<DiscountedSum, 2> acc{};
    std::vector<VehicleState> vs = initial_;
    return play(vs, 0, acc);
  }

  int slot_of(std::int32_t id) const {
    for (std::size_t i = 0; i < initial_.size(); ++i) {
      if (initial_[i].id == id) return static_cast<int>(i);
    }
    return -1;
  }

 private:
  struct Round {
    std::vector<VehicleState> next;
    std::vector<int> order;
    CellSet committed;
    CellSet end_occ;
    std::vector<CellSet> feet;
  };

  Outcome play(const std::vector<VehicleState>& vs, int t, std::array<DiscountedSum, 2> acc) {
    if (t == horizon_.T) {
      Outcome o;
      for (int s = 0; s < static_cast<int>(initial_.size()); ++s) o.value[s] = acc[s].total;
      return o;
    }
    Round r;
    r.next = vs;
    r.order = priority_indices(layout_, vs, emergency_first_);
    r.end_occ = occupancy_of(layout_, vs);
    r.feet.assign(vs.size(), CellSet{});
    return move(r, 0, t, acc);
  }

  Outcome move(const Round& r, std::size_t pos, int t, const std::array<DiscountedSum, 2>& acc) {
    if (pos == r.order.size()) return finish_step(r, t, acc);
    const int idx = r.order[pos];
    const VehicleState& v = r.next[idx];
    const int slot = slot_of(v.id);
    const Route& route = layout_.route(v.route);
    CellSet end_occ = r.end_occ;
    end_occ.reset(route.cells[v.cell_index]);
    const ActionSet feasible = feasible_actions(layout_, v, r.committed, end_occ, limits_);

    Outcome best;
    bool have = false;
    std::array<bool, kMaxSpeed + 1> seen{};
    for (Action planned : kCanonicalActions) {
      const Action exec = degrade(planned, feasible);
      const int ns = resulting_speed(v.speed, exec, limits_.v_max);
      if (seen[ns]) continue;
      seen[ns] = true;
      Round child = r;
      child.end_occ = end_occ;
      Move m = apply_action(layout_, v, exec, limits_);
      for (CellId c : m.traversal.cells) child.committed.set(c);
      if (m.traversal.end_cell) child.end_occ.set(*m.traversal.end_cell);
      child.feet[idx] = m.traversal.footprint();
      child.next[idx] = m.next;
      Outcome o = move(child, pos + 1, t, acc);
      if (!have || o.value[slot] > best.value[slot]) {
        o.path.insert(o.path.begin(), PathEntry{slot, planned, exec});
        best = std::move(o);
        have = true;
      }
    }
    return best;
  }

  Outcome finish_step(const Round& r, int t, std::array<DiscountedSum, 2> acc) {
    std::vector<bool> present(initial_.size(), false);
    for (std::size_t i = 0; i < r.next.size(); ++i) {
      const VehicleState& v = r.next[i];
      const int slot = slot_of(v.id);
      present[slot] = true;
      StageOutcome o;
      o.cells_advanced = v.speed;
      o.stopped = v.speed == 0 && !v.exited;
      if (!v.exited) {
        const auto gap = gap_from(layout_.route(v.route), r.end_occ, v.cell_index);
        o.gap_violation = gap && *gap < limits_.d_min;
      }
      for (std::size_t j = 0; j < r.next.size(); ++j) {
        if (j != i && (r.feet[i] & r.feet[j]).any()) o.collided = true;
      }
      acc[slot] = acc[slot].then(stage_reward(o, weights_, v.cls), horizon_.gamma);
    }
    for (std::size_t s = 0; s < initial_.size(); ++s) {
      if (present[s]) continue;
      StageOutcome o;
      o.cells_advanced = limits_.v_max;
      acc[s] = acc[s].then(stage_reward(o, weights_, initial_[s].cls), horizon_.gamma);
    }
    std::vector<VehicleState> nxt;
    for (const auto& v : r.next) {
      if (!v.exited) nxt.push_back(v);
    }
    return play(nxt, t + 1, acc);
  }

  const IntersectionLayout& layout_;
  PayoffWeights weights_;
  HorizonParams horizon_;
  KinematicLimits limits_;
  bool emergency_first_;
  std::vector<VehicleState> initial_;
};

}  // namespace

SpneResult solve_spne(const WorldSnapshot& snapshot, const PayoffWeights& weights,
                      const HorizonParams& horizon, const KinematicLimits& limits,
                      bool emergency_first) {
  if (snapshot.vehicles.size() > 2) throw PolicyError("solve_spne supports at most 2 vehicles");
  if (horizon.T < 1 || horizon.T > 3) throw PolicyError("solve_spne depth must be in [1, 3]");
  SpneSolver solver(snapshot, weights, horizon, limits, emergency_first);
  const auto out = solver.solve();
  SpneResult res;
  for (std::size_t s = 0; s < snapshot.vehicles.size(); ++s) {
    const auto id = snapshot.vehicles[s].id;
    res.plans[id];
    res.executed[id];
    res.payoffs[id] = out.value[s];
  }
  for (const auto& e : out.path) {
    const auto id = snapshot.vehicles[e.slot].id;
    res.plans[id].actions.push_back(e.planned);
    res.executed[id].push_back(e.executed);
  }
  // Vehicles that left the map have no decisions for the remaining steps; pad with Keep.
  for (auto& [id, plan] : res.plans) {
    while (static_cast<int>(plan.actions.size()) < horizon.T) {
      plan.actions.push_back(Action::Keep);
      res.executed[id].push_back(Action::Keep);
    }
  }
  return res;
}

}  // namespace crossgame
