#pragma once

#include <memory>
#include <random>

#include "crossgame/policy.hpp"
#include "crossgame/sim.hpp"
#include "crossgame/world.hpp"

namespace testing_helpers {

using namespace crossgame;

inline RouteKey route(Approach a, Turn t) { return RouteKey{a, t}; }

inline VehicleState vehicle(std::int32_t id, RouteKey r, int index, int speed,
                            VehicleClass cls = VehicleClass::Normal, int level = 1) {
  VehicleState v;
  v.id = id;
  v.route = r.index();
  v.cell_index = index;
  v.speed = speed;
  v.cls = cls;
  v.level = level;
  return v;
}

inline std::shared_ptr<const IntersectionLayout> layout(int lin = 10, int lout = 10) {
  return std::make_shared<const IntersectionLayout>(lin, lout);
}

inline WorldSnapshot snapshot(std::shared_ptr<const IntersectionLayout> l, KinematicLimits lim,
                              std::vector<VehicleState> vs) {
  return WorldSnapshot::make(std::move(l), lim, std::move(vs));
}

/// Same scene turned 90 degrees clockwise.
inline WorldSnapshot rotated(const WorldSnapshot& s) {
  std::vector<VehicleState> vs = s.vehicles;
  for (auto& v : vs) {
    RouteKey k = RouteKey::from_index(v.route);
    k.approach = rotate(k.approach);
    v.route = k.index();
  }
  return WorldSnapshot::make(s.layout, s.limits, std::move(vs));
}

}  // namespace testing_helpers
