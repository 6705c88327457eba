#include "crossgame/game.hpp"

namespace crossgame {

double stage_reward(const StageOutcome& outcome, const PayoffWeights& weights, VehicleClass cls) {
  const double m = cls == VehicleClass::Emergency ? weights.rho : 1.0;
  double r = m * weights.w_prog * outcome.cells_advanced;
  if (outcome.stopped) r -= weights.w_wait;
  if (outcome.gap_violation) r -= weights.w_safe;
  if (outcome.collided) r -= weights.c_col;
  return r;
}

double discounted_payoff(std::span<const double> rewards, double gamma) {
  DiscountedSum acc;
  for (double r : rewards) acc = acc.then(r, gamma);
  return acc.total;
}

}  // namespace crossgame
