#pragma once

#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

#include "crossgame/world.hpp"

namespace crossgame {

/// Lexicographic decision-order key: emergency precedence, signed distance to the box
/// entry (negative once inside or past the box), spawn step, approach, id.
using PriorityKey = std::tuple<int, int, int, int, std::int32_t>;

PriorityKey priority_key(const IntersectionLayout& layout, const VehicleState& v,
                         bool emergency_first);

/// Cells between the vehicle and the first box cell of its route; negative inside/past the box.
int distance_to_box(const IntersectionLayout& layout, const VehicleState& v);

/// Indices into `vehicles` in decision order.
std::vector<int> priority_indices(const IntersectionLayout& layout,
                                  std::span<const VehicleState> vehicles, bool emergency_first);

/// Vehicle ids in decision order.
std::vector<std::int32_t> priority_order(const IntersectionLayout& layout,
                                         std::span<const VehicleState> vehicles,
                                         bool emergency_first);

}  // namespace crossgame
