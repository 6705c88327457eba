#include <doctest.h>

#include <random>

#include "crossgame/priority.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace crossgame;
using namespace testing_helpers;

namespace {

const PayoffWeights kW;
const KinematicLimits kLim{2, 1};

HorizonParams horizon(int T, double gamma = 0.5) { return HorizonParams{T, gamma}; }

Action oracle_level0(const WorldSnapshot& s, std::int32_t ego, const PayoffWeights& w,
                     const HorizonParams& h, const std::vector<Commitment>& observed = {}) {
  return oracle::best_plan(s, ego, oracle::cruise(s, ego, h.T, observed), w, h, s.limits).plan[0];
}

WorldSnapshot with_distinct_spawns(WorldSnapshot s) {
  for (auto& v : s.vehicles) v.spawn_step = v.id;
  return s;
}

}  // namespace

TEST_CASE("level-0 examples") {
  const auto lay = layout();
  const RouteKey s = route(Approach::S, Turn::Straight);

  SUBCASE("empty road accelerates") {
    const auto snap = snapshot(lay, kLim, {vehicle(0, s, 2, 0)});
    CHECK(level0_action(snap, 0, kW, horizon(4), kLim) == Action::Accel);
    CHECK(oracle_level0(snap, 0, kW, horizon(4)) == Action::Accel);
  }
  SUBCASE("stuck behind a stopped vehicle keeps") {
    const auto snap = snapshot(lay, kLim, {vehicle(0, s, 2, 0), vehicle(1, s, 3, 0)});
    CHECK(level0_action(snap, 0, kW, horizon(4), kLim) == Action::Keep);
  }
  SUBCASE("approaching a claimed box cell does not accelerate") {
    // E-straight vehicle sits in NE for good; the ego would need NE two cells after SE.
    const auto snap = snapshot(lay, kLim,
                               {vehicle(0, s, 8, 2), vehicle(1, route(Approach::E, Turn::Straight), 10, 0)});
    const Action a = level0_action(snap, 0, kW, horizon(4), kLim);
    CHECK(a != Action::Accel);
    CHECK(a == oracle_level0(snap, 0, kW, horizon(4)));
  }
}

TEST_CASE("best_response_exhaustive examples") {
  const auto lay = layout();
  const KinematicLimits lim{1, 1};
  const RouteKey n = route(Approach::N, Turn::Straight);
  const auto open = snapshot(lay, lim, {vehicle(0, n, 0, 0)});
  const Plan p = best_response_exhaustive(open, 0, constant_speed_schedule(open, 0, 2), kW,
                                          horizon(2), lim);
  CHECK(p.actions == std::vector<Action>{Action::Accel, Action::Keep});

  const auto blocked = snapshot(lay, lim, {vehicle(0, n, 0, 0), vehicle(1, n, 1, 0)});
  const Plan q = best_response_exhaustive(blocked, 0, constant_speed_schedule(blocked, 0, 3), kW,
                                          horizon(3), lim);
  CHECK(q.actions.front() == Action::Keep);
}

TEST_CASE("level-0 matches both brute-force searches on random snapshots") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 1500; ++trial) {
    const int lin = 4 + static_cast<int>(rng() % 8);
    const auto lay = layout(lin, 3 + static_cast<int>(rng() % 6));
    const KinematicLimits lim{1 + static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)};
    const HorizonParams h = horizon(1 + static_cast<int>(rng() % 4), 0.3 + 0.1 * (rng() % 7));
    PayoffWeights w;
    w.w_safe = (rng() % 2) ? 5.0 : 0.5;
    const WorldSnapshot snap = random_snapshot(lay, lim, 1 + static_cast<int>(rng() % 6), 0, rng);
    for (const auto& v : snap.vehicles) {
      const Action fast = level0_action(snap, v.id, w, h, lim);
      const Plan ref = best_response_exhaustive(snap, v.id, constant_speed_schedule(snap, v.id, h.T),
                                                w, h, lim);
      REQUIRE(fast == ref.actions.front());
      REQUIRE(fast == oracle_level0(snap, v.id, w, h));
      ++checked;
    }
  }
  CHECK(checked >= 1000);
}

TEST_CASE("planner level-0 with observed moves matches the oracle") {
  std::mt19937_64 rng(99);
  const auto lay = layout(8, 6);
  Planner planner(lay, kLim, PolicyParams{kW, horizon(4), 3, true, true, true});
  for (int trial = 0; trial < 600; ++trial) {
    const WorldSnapshot snap = random_snapshot(lay, kLim, 2 + static_cast<int>(rng() % 5), 0, rng);
    std::vector<Commitment> observed;
    for (std::size_t i = 1; i < snap.vehicles.size(); ++i) {
      if (rng() % 2) observed.push_back({snap.vehicles[i].id, kCanonicalActions[rng() % 4]});
    }
    const std::int32_t ego = snap.vehicles.front().id;
    const Action got = planner.search(snap, ego, 0, observed);
    CHECK(got == oracle_level0(snap, ego, kW, horizon(4), observed));
    const Plan ref = best_response_exhaustive(
        snap, ego, constant_speed_schedule(snap, ego, 4, observed), kW, horizon(4), kLim);
    CHECK(got == ref.actions.front());
  }
}

TEST_CASE("memoization and component restriction do not change decisions") {
  std::mt19937_64 rng(5);
  const auto lay = layout(10, 10);
  const HorizonParams h = horizon(3);
  for (int trial = 0; trial < 80; ++trial) {
    const WorldSnapshot snap =
        with_distinct_spawns(random_snapshot(lay, kLim, 3 + static_cast<int>(rng() % 6), 2, rng));
    Planner fast(lay, kLim, PolicyParams{kW, h, 3, true, true, true});
    Planner plain(lay, kLim, PolicyParams{kW, h, 3, true, false, false});
    for (const auto& v : snap.vehicles) {
      for (int k = 0; k <= 2; ++k) {
        CHECK(fast.search(snap, v.id, k) == plain.search(snap, v.id, k));
      }
    }
  }
}

TEST_CASE("levelk_action on a lone vehicle equals level0_action") {
  std::mt19937_64 rng(8);
  const auto lay = layout();
  for (int trial = 0; trial < 100; ++trial) {
    const WorldSnapshot snap = random_snapshot(lay, kLim, 1, 0, rng);
    const std::int32_t id = snap.vehicles.front().id;
    const Action a0 = level0_action(snap, id, kW, horizon(4), kLim);
    for (int k = 1; k <= 3; ++k) CHECK(levelk_action(snap, id, k, kW, horizon(4), kLim) == a0);
  }
}

TEST_CASE("levelk_action rejects k above k_max") {
  const auto lay = layout();
  const auto snap = snapshot(lay, kLim, {vehicle(0, route(Approach::N, Turn::Left), 3, 1)});
  CHECK_THROWS_AS(levelk_action(snap, 0, 4, kW, horizon(4), kLim, 3), PolicyError);
}

TEST_CASE("symmetric crossing: the higher-priority vehicle proceeds, the other yields") {
  const auto lay = layout();
  // Equal distance and spawn step: approach order puts E ahead of S.
  const auto snap = snapshot(lay, kLim,
                             {vehicle(0, route(Approach::S, Turn::Straight), 8, 1),
                              vehicle(1, route(Approach::E, Turn::Straight), 8, 1)});
  REQUIRE(priority_order(*lay, snap.vehicles, true) == std::vector<std::int32_t>{1, 0});
  const HorizonParams h = horizon(2);
  CHECK(levelk_action(snap, 1, 1, kW, h, kLim) == Action::Accel);
  CHECK(levelk_action(snap, 0, 1, kW, h, kLim) != Action::Accel);
  // Level 2 on the same state.
  CHECK(levelk_action(snap, 1, 2, kW, h, kLim) == levelk_action(snap, 1, 1, kW, h, kLim));
  CHECK(levelk_action(snap, 0, 2, kW, h, kLim) == levelk_action(snap, 0, 1, kW, h, kLim));
}

TEST_CASE("decisions are invariant under scaling every weight") {
  std::mt19937_64 rng(31);
  const auto lay = layout(8, 8);
  PayoffWeights scaled;
  scaled.w_prog *= 4;
  scaled.w_wait *= 4;
  scaled.w_safe *= 4;
  scaled.c_col *= 4;
  for (int trial = 0; trial < 60; ++trial) {
    const WorldSnapshot snap = with_distinct_spawns(random_snapshot(lay, kLim, 4, 1, rng));
    for (const auto& v : snap.vehicles) {
      for (int k = 0; k <= 1; ++k) {
        CHECK(levelk_action(snap, v.id, k, kW, horizon(3), kLim) ==
              levelk_action(snap, v.id, k, scaled, horizon(3), kLim));
      }
    }
  }
}

TEST_CASE("decisions are invariant under rotating the scene") {
  std::mt19937_64 rng(17);
  const auto lay = layout(8, 8);
  for (int trial = 0; trial < 60; ++trial) {
    const WorldSnapshot a = with_distinct_spawns(random_snapshot(lay, kLim, 4, 1, rng));
    const WorldSnapshot b = rotated(a);
    for (const auto& v : a.vehicles) {
      for (int k = 0; k <= 2; ++k) {
        CHECK(levelk_action(a, v.id, k, kW, horizon(3), kLim) ==
              levelk_action(b, v.id, k, kW, horizon(3), kLim));
      }
    }
  }
}

TEST_CASE("decide projects onto the feasible set") {
  std::mt19937_64 rng(3);
  const auto lay = layout();
  Planner planner(lay, kLim, PolicyParams{kW, horizon(3), 3, true, true, true});
  for (int trial = 0; trial < 200; ++trial) {
    const WorldSnapshot snap = random_snapshot(lay, kLim, 5, 1, rng);
    const std::int32_t ego = snap.vehicles.back().id;
    const Action a = planner.decide(snap, ego, 1);
    CHECK(decision_feasible_set(snap, ego, {}).contains(a));
  }
}

TEST_CASE("solve_spne: one player reduces to the best response") {
  std::mt19937_64 rng(12);
  const auto lay = layout();
  for (int trial = 0; trial < 100; ++trial) {
    const WorldSnapshot snap = random_snapshot(lay, kLim, 1, 0, rng);
    const std::int32_t id = snap.vehicles.front().id;
    const SpneResult r = solve_spne(snap, kW, horizon(3), kLim);
    const Plan br = best_response_exhaustive(snap, id, FrozenSchedule(3), kW, horizon(3), kLim);
    CHECK(r.plans.at(id).actions == br.actions);
  }
}

TEST_CASE("solve_spne: non-interacting vehicles play their solo plans") {
  const auto lay = layout();
  const VehicleState a = vehicle(0, route(Approach::N, Turn::Right), 5, 1);
  const VehicleState b = vehicle(1, route(Approach::S, Turn::Right), 5, 1);
  const SpneResult r = solve_spne(snapshot(lay, kLim, {a, b}), kW, horizon(3), kLim);
  for (const auto& v : {a, b}) {
    const auto solo = snapshot(lay, kLim, {v});
    CHECK(r.plans.at(v.id).actions ==
          best_response_exhaustive(solo, v.id, FrozenSchedule(3), kW, horizon(3), kLim).actions);
  }
}

TEST_CASE("solve_spne: hand-solved two-vehicle conflict") {
  // B (N-straight) sits in NW, A (W-straight) waits at the last entry cell; both are one cell
  // from SW. v_max = 1, d_min = 1, T = 2, gamma = 0.5, default weights. B decides first.
  //
  // Backward induction:
  //   B advances into SW: A cannot enter (SW claimed), stops with SW directly ahead:
  //     r_A = -0.5 - 5 = -5.5; then B leaves SW and A enters it: r_A = +1.
  //     A: -5.5 + 0.5 * 1 = -5.0.  B: +1 + 0.5 * 1 = 1.5.
  //   B stops: r_B = -0.5 and NW stays occupied, which keeps A out of the box too, so B's
  //     best continuation is at most -0.5 + 0.5 * 1 = 0 < 1.5.
  // Equilibrium: B advances, A waits, payoffs (A, B) = (-5.0, 1.5).
  const auto lay = layout();
  const KinematicLimits lim{1, 1};
  const VehicleState A = vehicle(0, route(Approach::W, Turn::Straight), 9, 1);
  const VehicleState B = vehicle(1, route(Approach::N, Turn::Straight), 10, 1);
  const auto snap = snapshot(lay, lim, {A, B});
  const SpneResult r = solve_spne(snap, kW, horizon(2), lim);
  CHECK(resulting_speed(1, r.executed.at(1).front(), 1) == 1);
  CHECK(resulting_speed(1, r.executed.at(0).front(), 1) == 0);
  CHECK(r.payoffs.at(1) == doctest::Approx(1.5));
  CHECK(r.payoffs.at(0) == doctest::Approx(-5.0));
}

TEST_CASE("solve_spne rejects oversized games") {
  const auto lay = layout();
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(solve_spne(random_snapshot(lay, kLim, 3, 0, rng), kW, horizon(2), kLim),
                  PolicyError);
  CHECK_THROWS_AS(solve_spne(random_snapshot(lay, kLim, 1, 0, rng), kW, horizon(4), kLim),
                  PolicyError);
}

TEST_CASE("priority order examples") {
  const IntersectionLayout l(10, 10);
  const RouteKey n = route(Approach::N, Turn::Straight);
  const RouteKey e = route(Approach::E, Turn::Straight);
  std::vector<VehicleState> vs{vehicle(0, n, 9 - 5, 1), vehicle(1, e, 9 - 3, 1)};
  CHECK(priority_order(l, vs, true) == std::vector<std::int32_t>{1, 0});

  vs = {vehicle(0, n, 9 - 1, 1), vehicle(1, e, 9 - 7, 1, VehicleClass::Emergency)};
  CHECK(priority_order(l, vs, true) == std::vector<std::int32_t>{1, 0});
  CHECK(priority_order(l, vs, false) == std::vector<std::int32_t>{0, 1});

  vs = {vehicle(0, e, 4, 1), vehicle(1, n, 4, 1)};
  CHECK(priority_order(l, vs, true) == std::vector<std::int32_t>{1, 0});
}
