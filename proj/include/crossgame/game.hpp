#pragma once

#include <span>

#include "crossgame/world.hpp"

namespace crossgame {

struct PayoffWeights {
  double w_prog = 1.0;  // per cell advanced
  double w_wait = 0.5;  // per stopped step before exit
  double w_safe = 5.0;  // per step ending with gap < d_min
  double c_col = 100.0;
  double rho = 3.0;     // progress multiplier for emergency vehicles
};

struct HorizonParams {
  int T = 4;
  double gamma = 0.5;
};

/// Per-step observables a vehicle's payoff is built from.
struct StageOutcome {
  int cells_advanced = 0;
  bool stopped = false;
  bool gap_violation = false;
  bool collided = false;
};

double stage_reward(const StageOutcome& outcome, const PayoffWeights& weights, VehicleClass cls);

/// sum_t gamma^(t-1) r_t, accumulated left to right. Search code that needs values
/// bit-identical to this must accumulate in the same order (see DiscountedSum).
double discounted_payoff(std::span<const double> rewards, double gamma);

/// Running form of discounted_payoff.
struct DiscountedSum {
  double total = 0.0;
  double weight = 1.0;

  DiscountedSum then(double reward, double gamma) const {
    return {total + weight * reward, weight * gamma};
  }
};

}  // namespace crossgame
