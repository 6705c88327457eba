#include "crossgame/priority.hpp"

#include <algorithm>
#include <numeric>

namespace crossgame {

int distance_to_box(const IntersectionLayout& layout, const VehicleState& v) {
  return layout.entry_len() - 1 - v.cell_index;
}

PriorityKey priority_key(const IntersectionLayout& layout, const VehicleState& v,
                         bool emergency_first) {
  const int cls = (emergency_first && v.cls == VehicleClass::Emergency) ? 0 : 1;
  const int approach = static_cast<int>(RouteKey::from_index(v.route).approach);
  return {cls, distance_to_box(layout, v), v.spawn_step, approach, v.id};
}

std::vector<int> priority_indices(const IntersectionLayout& layout,
                                  std::span<const VehicleState> vehicles, bool emergency_first) {
  std::vector<PriorityKey> keys;
  keys.reserve(vehicles.size());
  for (const auto& v : vehicles) keys.push_back(priority_key(layout, v, emergency_first));
  std::vector<int> idx(vehicles.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return keys[a] < keys[b]; });
  return idx;
}

std::vector<std::int32_t> priority_order(const IntersectionLayout& layout,
                                         std::span<const VehicleState> vehicles,
                                         bool emergency_first) {
  std::vector<std::int32_t> ids;
  for (int i : priority_indices(layout, vehicles, emergency_first)) ids.push_back(vehicles[i].id);
  return ids;
}

}  // namespace crossgame
