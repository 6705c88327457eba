#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "oracle.hpp"

using namespace crossgame;
using namespace testing_helpers;

TEST_CASE("route lengths follow the box segment table") {
  const IntersectionLayout l(10, 10);
  CHECK(l.route(route(Approach::S, Turn::Straight)).length() == 22);
  CHECK(l.route(route(Approach::S, Turn::Left)).length() == 23);
  CHECK(l.route(route(Approach::S, Turn::Right)).length() == 21);

  const IntersectionLayout tiny(1, 1);
  const Route& r = tiny.route(route(Approach::E, Turn::Right));
  REQUIRE(r.length() == 3);
  CHECK(tiny.cell_name(r.cells[0]) == "E-entry0");
  CHECK(tiny.cell_name(r.cells[1]) == "NE");
  CHECK(tiny.cell_name(r.cells[2]) == "N-exit0");
}

TEST_CASE("cell ids are laid out entries, box, exits") {
  const IntersectionLayout l(10, 7);
  CHECK(l.entry_cell(Approach::W, 3) == 3 * 10 + 3);
  CHECK(l.box_cell(BoxCell::SE) == 4 * 10 + 3);
  CHECK(l.exit_cell(Approach::S, 2) == 4 * 10 + 4 + 2 * 7 + 2);
  CHECK(l.cell_count() == 4 * 10 + 4 + 4 * 7);
  CHECK_THROWS_AS(IntersectionLayout(0, 5), std::invalid_argument);
}

TEST_CASE("crossing routes share only box cells") {
  const IntersectionLayout l(6, 6);
  for (int a = 0; a < kRouteCount; ++a) {
    for (int b = 0; b < kRouteCount; ++b) {
      if (RouteKey::from_index(a).approach == RouteKey::from_index(b).approach) continue;
      for (CellId x : l.route(a).cells) {
        for (CellId y : l.route(b).cells) {
          if (x == y && !l.is_box(x)) {
            // Different approaches can only merge on a common exit arm.
            CHECK(l.route(a).exit == l.route(b).exit);
          }
        }
      }
    }
  }
}

TEST_CASE("box guard is the cell feeding the route's first box cell") {
  const IntersectionLayout l(10, 10);
  // A vehicle crossing from W goes SW -> SE, so SW guards the S approach.
  CHECK(l.route(route(Approach::S, Turn::Left)).box_guard == l.box_cell(BoxCell::SW));
  CHECK(l.route(route(Approach::N, Turn::Right)).box_guard == l.box_cell(BoxCell::NE));
  for (const Route& r : l.routes()) {
    CHECK(std::find(r.cells.begin(), r.cells.end(), r.box_guard) == r.cells.end());
  }
}

TEST_CASE("apply_action kinematics") {
  const IntersectionLayout l(10, 10);
  const KinematicLimits lim{2, 1};
  const RouteKey s = route(Approach::S, Turn::Straight);

  Move m = apply_action(l, vehicle(0, s, 3, 1), Action::Accel, lim);
  CHECK(m.next.speed == 2);
  CHECK(m.next.cell_index == 5);
  CHECK(m.traversal.cells.size() == 2);

  m = apply_action(l, vehicle(0, s, 3, 0), Action::Decel, lim);
  CHECK(m.next.speed == 0);
  CHECK(m.next.cell_index == 3);
  CHECK(m.traversal.cells.empty());

  m = apply_action(l, vehicle(0, s, 3, 2), Action::HardStop, lim);
  CHECK(m.next.speed == 0);
  CHECK(m.next.cell_index == 3);

  m = apply_action(l, vehicle(0, s, 21, 2), Action::Keep, lim);
  CHECK(m.next.exited);
  CHECK(m.traversal.cells.empty());
  CHECK_FALSE(m.traversal.end_cell.has_value());
}

TEST_CASE("gap_ahead") {
  const IntersectionLayout l(10, 10);
  const Route& r = l.route(route(Approach::N, Turn::Straight));
  CellSet occ;
  CHECK_FALSE(gap_ahead(l, occ, vehicle(0, r.key, 3, 0)).has_value());
  occ.set(r.cells[5]);
  CHECK(gap_ahead(l, occ, vehicle(0, r.key, 3, 0)) == 1);
  occ.set(r.cells[4]);
  CHECK(gap_ahead(l, occ, vehicle(0, r.key, 3, 0)) == 0);
}

TEST_CASE("feasible_actions examples") {
  const IntersectionLayout l(10, 10);
  const KinematicLimits lim{2, 1};
  const RouteKey s = route(Approach::S, Turn::Straight);

  CHECK(feasible_actions(l, vehicle(0, s, 4, 1), CellSet{}, CellSet{}, lim) == ActionSet::all());

  // A committed traversal through SE removes Accel, which would enter SE.
  CellSet committed;
  committed.set(l.box_cell(BoxCell::SE));
  const ActionSet f = feasible_actions(l, vehicle(0, s, 8, 1), committed, CellSet{}, lim);
  CHECK_FALSE(f.contains(Action::Accel));
  CHECK(f.contains(Action::Keep));

  // Boxed in at gap 0: every non-moving action stays, Accel would close below d_min.
  const Route& r = l.route(s);
  CellSet ahead;
  ahead.set(r.cells[3]);
  const ActionSet g = feasible_actions(l, vehicle(0, s, 2, 0), CellSet{}, ahead, lim);
  CHECK(g.to_vector() == std::vector<Action>{Action::Keep, Action::Decel, Action::HardStop});
}

TEST_CASE("box admission keeps the rest of the box segment and its feeder clear") {
  const IntersectionLayout l(10, 10);
  const KinematicLimits lim{2, 1};
  const RouteKey sl = route(Approach::S, Turn::Left);  // SE, NE, NW
  const VehicleState ego = vehicle(0, sl, 9, 1);
  CellSet ends;
  ends.set(l.box_cell(BoxCell::NW));
  CHECK_FALSE(feasible_actions(l, ego, CellSet{}, ends, lim).contains(Action::Keep));
  ends.reset();
  ends.set(l.box_cell(BoxCell::SW));
  CHECK_FALSE(feasible_actions(l, ego, CellSet{}, ends, lim).contains(Action::Keep));
  ends.reset();
  CHECK(feasible_actions(l, ego, CellSet{}, ends, lim).contains(Action::Keep));
  // Vehicles already inside the box are not subject to admission.
  ends.set(l.box_cell(BoxCell::SW));
  CHECK(feasible_actions(l, vehicle(0, sl, 10, 1), CellSet{}, ends, lim).contains(Action::Keep));
}

TEST_CASE("feasible_actions agrees with the rule oracle and is never empty") {
  const auto lay = layout(6, 6);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 3000; ++trial) {
    const KinematicLimits lim{1 + static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)};
    const WorldSnapshot snap = random_snapshot(lay, lim, 1 + static_cast<int>(rng() % 6), 2, rng);
    const VehicleState& ego = snap.vehicles.front();
    oracle::StepClaims claims;
    CellSet committed;
    CellSet ends;
    for (std::size_t i = 1; i < snap.vehicles.size(); ++i) {
      const VehicleState& v = snap.vehicles[i];
      const Route& r = lay->route(v.route);
      if (rng() % 2) {
        const Move m = apply_action(*lay, v, kCanonicalActions[rng() % 4], lim);
        for (CellId c : m.traversal.cells) {
          committed.set(c);
          claims.entered.push_back(c);
        }
        if (m.traversal.end_cell) {
          ends.set(*m.traversal.end_cell);
          claims.ends.push_back(*m.traversal.end_cell);
        }
      } else {
        ends.set(r.cells[v.cell_index]);
        claims.ends.push_back(r.cells[v.cell_index]);
      }
    }
    const ActionSet got = feasible_actions(*lay, ego, committed, ends, lim);
    REQUIRE_FALSE(got.empty());
    CHECK(got.contains(Action::HardStop));
    for (Action a : kCanonicalActions) {
      CHECK(got.contains(a) == oracle::feasible(*lay, ego, a, claims, lim));
    }
  }
}

TEST_CASE("feasibility is invariant under rotating the scene") {
  const auto lay = layout(8, 5);
  const KinematicLimits lim{2, 1};
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const WorldSnapshot a = random_snapshot(lay, lim, 4, 2, rng);
    const WorldSnapshot b = rotated(a);
    const CellSet occ_a = a.occupancy();
    const CellSet occ_b = b.occupancy();
    for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
      CellSet ea = occ_a;
      ea.reset(lay->route(a.vehicles[i].route).cells[a.vehicles[i].cell_index]);
      CellSet eb = occ_b;
      eb.reset(lay->route(b.vehicles[i].route).cells[b.vehicles[i].cell_index]);
      CHECK(feasible_actions(*lay, a.vehicles[i], CellSet{}, ea, lim) ==
            feasible_actions(*lay, b.vehicles[i], CellSet{}, eb, lim));
    }
  }
}

TEST_CASE("degrade keeps feasible plans and otherwise falls back in canonical order") {
  ActionSet f;
  f.insert(Action::Decel);
  f.insert(Action::HardStop);
  CHECK(degrade(Action::Decel, f) == Action::Decel);
  CHECK(degrade(Action::Accel, f) == Action::Decel);
  CHECK(degrade(Action::Keep, ActionSet{}) == Action::HardStop);
}

TEST_CASE("detect_collisions") {
  const IntersectionLayout l(10, 10);
  const KinematicLimits lim{2, 1};
  const Move a = apply_action(l, vehicle(1, route(Approach::N, Turn::Straight), 2, 1), Action::Keep, lim);
  const Move b = apply_action(l, vehicle(2, route(Approach::S, Turn::Straight), 2, 1), Action::Keep, lim);
  CHECK(detect_collisions(std::vector<Traversal>{a.traversal, b.traversal}).empty());

  // S-straight crosses SE, NE; E-straight crosses NE, NW: both reach NE.
  const Move s = apply_action(l, vehicle(3, route(Approach::S, Turn::Straight), 10, 1),
                              Action::Keep, lim);
  const Move e = apply_action(l, vehicle(4, route(Approach::E, Turn::Straight), 9, 1),
                              Action::Accel, lim);
  const auto hits = detect_collisions(std::vector<Traversal>{e.traversal, s.traversal});
  REQUIRE(hits.size() == 1);
  CHECK(hits[0] == std::pair<std::int32_t, std::int32_t>{3, 4});

  // Same end cell.
  const Move p = apply_action(l, vehicle(5, route(Approach::W, Turn::Straight), 9, 1), Action::Keep, lim);
  const Move q = apply_action(l, vehicle(6, route(Approach::N, Turn::Left), 10, 1), Action::Keep, lim);
  REQUIRE(p.traversal.end_cell == q.traversal.end_cell);
  CHECK(detect_collisions(std::vector<Traversal>{p.traversal, q.traversal}).size() == 1);
}
