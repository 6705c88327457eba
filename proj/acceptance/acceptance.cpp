// Evaluates the ten acceptance criteria on the standard scenario and prints one
// PASS/FAIL line per criterion. Exit status is 0 when all pass, 1 otherwise.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "crossgame/cli.hpp"
#include "crossgame/io.hpp"
#include "crossgame/priority.hpp"

using namespace crossgame;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr double kC1MinWinRate = 0.70;
constexpr double kC1MaxSeconds = 300.0;
constexpr double kC2MaxRelGap = 0.10;
constexpr double kC5MinFraction = 0.90;
constexpr int kC6FuzzConfigs = 100;
constexpr int kC6FuzzSteps = 200;
constexpr int kC7Snapshots = 1000;
constexpr int kC8Snapshots = 500;
constexpr double kC10RoundSeconds = 1.0;
constexpr double kC10RunSeconds = 30.0;
constexpr int kC10Vehicles = 12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ScenarioConfig standard(int steps) {
  ScenarioConfig c;
  c.steps = steps;
  c.interval = 3;
  c.p_rand = 0.1;
  c.horizon = HorizonParams{4, 0.5};
  c.level_mix = {{1, 1.0}};
  return c;
}

struct Runs {
  std::map<std::string, MetricsSummary> cache;
  std::int64_t collisions = 0;
  std::int64_t aborted = 0;
  int executed = 0;

  const MetricsSummary& get(const ScenarioConfig& c) {
    const std::string key = config_to_json(c).dump();
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const RunResult r = run(c);
    collisions += r.summary.collisions;
    aborted += r.summary.aborted ? 1 : 0;
    ++executed;
    return cache.emplace(key, r.summary).first->second;
  }

  // Per-seed summaries of `base` with `edit` applied.
  std::vector<MetricsSummary> seeds(const ScenarioConfig& base, const std::vector<std::uint64_t>& s,
                                    const std::function<void(ScenarioConfig&)>& edit = {}) {
    std::vector<MetricsSummary> out;
    for (std::uint64_t seed : s) {
      ScenarioConfig c = base;
      c.seed = seed;
      if (edit) edit(c);
      out.push_back(get(c));
    }
    return out;
  }
};

double mean_tt(const std::vector<MetricsSummary>& ms) {
  double sum = 0.0;
  int n = 0;
  for (const auto& m : ms) {
    if (m.mean_travel_time) {
      sum += *m.mean_travel_time;
      ++n;
    }
  }
  return n ? sum / n : NAN;
}

double mean_queue(const std::vector<MetricsSummary>& ms) {
  double sum = 0.0;
  for (const auto& m : ms) sum += m.mean_queue_length;
  return ms.empty() ? NAN : sum / static_cast<double>(ms.size());
}

std::string fmt(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + fmt(xs[i]);
  return s;
}

bool non_increasing(const std::vector<double>& xs) {
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] <= xs[i - 1])) return false;
  }
  return true;
}

bool non_decreasing(const std::vector<double>& xs) {
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] >= xs[i - 1])) return false;
  }
  return true;
}

struct Report {
  int passed = 0;
  int failed = 0;
  void line(int id, bool ok, const std::string& detail) {
    std::cout << "C" << id << (id < 10 ? "  " : " ") << (ok ? "PASS" : "FAIL") << "  " << detail
              << std::endl;
    (ok ? passed : failed)++;
  }
};

int quiet_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "crossgame");
  args.push_back("--quiet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

ScenarioConfig fuzz_config(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); };
  ScenarioConfig c;
  c.seed = rng();
  c.steps = kC6FuzzSteps;
  c.entry_len = pick(3, 12);
  c.exit_len = pick(1, 10);
  c.limits = KinematicLimits{pick(1, 3), pick(0, 3)};
  c.horizon = HorizonParams{pick(1, 4), 0.2 + 0.1 * pick(0, 8)};
  c.weights.rho = 1.0 + pick(0, 4);
  if (rng() % 2) {
    c.arrival = ArrivalMode::FixedInterval;
    c.interval = pick(1, 6);
  } else {
    c.arrival = ArrivalMode::Bernoulli;
    c.rate = 0.05 * pick(0, 8);
  }
  c.p_rand = 0.05 * pick(0, 8);
  c.emergency_prob = 0.05 * pick(0, 6);
  c.emergency_order_priority = rng() % 4 != 0;
  const int top = c.horizon.T <= 2 ? 2 : 1;
  const int a = pick(0, top);
  const int b = pick(0, top);
  if (a == b) {
    c.level_mix = {{a, 1.0}};
  } else {
    c.level_mix = {{a, 0.5}, {b, 0.5}};
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossgame acceptance"};
  int n_seeds = 30;
  int steps = 300;
  std::vector<int> only;
  app.add_option("--seeds", n_seeds, "seed count for the scenario criteria")->check(CLI::PositiveNumber);
  app.add_option("--steps", steps, "steps per scenario run")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "criteria to evaluate")->delimiter(',')->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}
                                              : std::set<int>(only.begin(), only.end());
  auto want = [&](int id) { return selected.count(id) > 0; };

  std::vector<std::uint64_t> seeds;
  for (int s = 1; s <= n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  const ScenarioConfig base = standard(steps);
  const auto level = [](int k) { return [k](ScenarioConfig& c) { c.level_mix = {{k, 1.0}}; }; };

  Runs runs;
  Report report;
  std::cout << "standard scenario: " << n_seeds << " seeds, " << steps << " steps" << std::endl;

  if (want(1)) {
    const auto t0 = Clock::now();
    const auto l0 = runs.seeds(base, seeds, level(0));
    const auto l1 = runs.seeds(base, seeds, level(1));
    const double secs = seconds_since(t0);
    int wins = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (l1[i].mean_travel_time && l0[i].mean_travel_time &&
          *l1[i].mean_travel_time < *l0[i].mean_travel_time) {
        ++wins;
      }
    }
    const double a0 = mean_tt(l0);
    const double a1 = mean_tt(l1);
    const double rate = static_cast<double>(wins) / static_cast<double>(seeds.size());
    report.line(1, a1 < a0 && rate >= kC1MinWinRate && secs < kC1MaxSeconds,
                "travel time L0 " + fmt(a0) + " L1 " + fmt(a1) + ", L1 wins " +
                    std::to_string(wins) + "/" + std::to_string(seeds.size()) + " (need >= " +
                    fmt(kC1MinWinRate, 2) + "), " + fmt(secs, 1) + " s");
  }

  if (want(2)) {
    const double a1 = mean_tt(runs.seeds(base, seeds, level(1)));
    const double a2 = mean_tt(runs.seeds(base, seeds, level(2)));
    const double gap = std::fabs(a2 - a1) / a1;
    report.line(2, gap <= kC2MaxRelGap,
                "travel time L1 " + fmt(a1) + " L2 " + fmt(a2) + ", relative gap " + fmt(gap) +
                    " (max " + fmt(kC2MaxRelGap, 2) + ")");
  }

  if (want(3)) {
    std::vector<double> by_v;
    std::vector<double> by_d;
    for (int v : {1, 2, 3}) {
      by_v.push_back(mean_tt(runs.seeds(base, seeds, [v](ScenarioConfig& c) { c.limits.v_max = v; })));
    }
    for (int d : {1, 2, 3}) {
      by_d.push_back(mean_tt(runs.seeds(base, seeds, [d](ScenarioConfig& c) { c.limits.d_min = d; })));
    }
    report.line(3, non_increasing(by_v) && non_decreasing(by_d),
                "travel time over v_max 1,2,3: " + join(by_v) + "; over d_min 1,2,3: " + join(by_d));
  }

  if (want(4)) {
    std::vector<double> by_h;
    std::vector<double> by_p;
    for (int h : {6, 4, 2}) {
      by_h.push_back(mean_queue(runs.seeds(base, seeds, [h](ScenarioConfig& c) { c.interval = h; })));
    }
    for (double p : {0.0, 0.1, 0.3}) {
      by_p.push_back(mean_queue(runs.seeds(base, seeds, [p](ScenarioConfig& c) { c.p_rand = p; })));
    }
    report.line(4, non_decreasing(by_h) && non_decreasing(by_p),
                "queue over h 6,4,2: " + join(by_h) + "; over p_rand 0,0.1,0.3: " + join(by_p));
  }

  if (want(5)) {
    const auto ms = runs.seeds(base, seeds, [](ScenarioConfig& c) {
      c.emergency_prob = 0.1;
      c.weights.rho = 3.0;
      c.emergency_order_priority = true;
    });
    int ok = 0;
    int with_emergency = 0;
    double sum_e = 0.0;
    double sum_n = 0.0;
    for (const auto& m : ms) {
      if (!m.mean_travel_time_emergency || !m.mean_travel_time_normal) continue;
      ++with_emergency;
      sum_e += *m.mean_travel_time_emergency;
      sum_n += *m.mean_travel_time_normal;
      if (*m.mean_travel_time_emergency <= *m.mean_travel_time_normal) ++ok;
    }
    // Seeds without an emergency exit count against the criterion.
    const double frac = static_cast<double>(ok) / static_cast<double>(ms.size());
    report.line(5, frac >= kC5MinFraction,
                "emergency <= normal in " + std::to_string(ok) + "/" + std::to_string(ms.size()) +
                    " seeds (need >= " + fmt(kC5MinFraction, 2) + "), mean emergency " +
                    fmt(with_emergency ? sum_e / with_emergency : NAN) + " normal " +
                    fmt(with_emergency ? sum_n / with_emergency : NAN));
  }

  if (want(6)) {
    const int scenario_runs = runs.executed;
    std::mt19937_64 rng(20260);
    std::int64_t fuzz_collisions = 0;
    int fuzz_aborted = 0;
    for (int i = 0; i < kC6FuzzConfigs; ++i) {
      const RunResult r = run(fuzz_config(rng));
      fuzz_collisions += r.summary.collisions;
      fuzz_aborted += r.summary.aborted ? 1 : 0;
    }
    report.line(6, runs.collisions == 0 && runs.aborted == 0 && fuzz_collisions == 0 && fuzz_aborted == 0,
                std::to_string(runs.collisions) + " collisions in " + std::to_string(scenario_runs) +
                    " scenario runs, " + std::to_string(fuzz_collisions) + " in " +
                    std::to_string(kC6FuzzConfigs) + " fuzz runs of " + std::to_string(kC6FuzzSteps) +
                    " steps");
  }

  if (want(7)) {
    std::mt19937_64 rng(7007);
    int snapshots = 0;
    int matched = 0;
    while (snapshots < kC7Snapshots) {
      const auto lay = std::make_shared<const IntersectionLayout>(3 + static_cast<int>(rng() % 10),
                                                                  1 + static_cast<int>(rng() % 10));
      const KinematicLimits lim{1 + static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)};
      const HorizonParams h{1 + static_cast<int>(rng() % 4), 0.2 + 0.1 * static_cast<int>(rng() % 9)};
      PayoffWeights w;
      w.rho = 1.0 + static_cast<double>(rng() % 4);
      const WorldSnapshot snap = random_snapshot(lay, lim, 1 + static_cast<int>(rng() % 8), 0, rng);
      const std::int32_t ego = snap.vehicles[rng() % snap.vehicles.size()].id;
      const Action fast = level0_action(snap, ego, w, h, lim);
      const Plan ref = best_response_exhaustive(snap, ego, constant_speed_schedule(snap, ego, h.T), w, h, lim);
      ++snapshots;
      if (fast == ref.actions.front()) ++matched;
    }
    report.line(7, matched == snapshots,
                "level-0 equals exhaustive best response on " + std::to_string(matched) + "/" +
                    std::to_string(snapshots) + " snapshots");
  }

  if (want(8)) {
    // A waits at the last W entry cell, B sits in NW; both need SW next.
    const auto lay = std::make_shared<const IntersectionLayout>(10, 10);
    const KinematicLimits lim{1, 1};
    VehicleState a;
    a.id = 0;
    a.route = RouteKey{Approach::W, Turn::Straight}.index();
    a.cell_index = 9;
    a.speed = 1;
    VehicleState b = a;
    b.id = 1;
    b.route = RouteKey{Approach::N, Turn::Straight}.index();
    b.cell_index = 10;
    const WorldSnapshot snap = WorldSnapshot::make(lay, lim, {a, b});
    const SpneResult r = solve_spne(snap, PayoffWeights{}, HorizonParams{2, 0.5}, lim);
    const auto order = priority_order(*lay, snap.vehicles, true);
    const std::int32_t first = order.front();
    const std::int32_t second = order.back();
    // Hand backward induction: the leader advances (+1, then +1 discounted), the other
    // stops next to the claimed cell (-0.5 - 5) and enters afterwards (+1 discounted).
    const bool hand = first == 1 &&
                      resulting_speed(1, r.executed.at(first).front(), 1) == 1 &&
                      resulting_speed(1, r.executed.at(second).front(), 1) == 0 &&
                      std::fabs(r.payoffs.at(first) - 1.5) < 1e-9 &&
                      std::fabs(r.payoffs.at(second) + 5.0) < 1e-9;
    bool clean = true;
    std::string agreement;
    try {
      const SpneReport rep = spne_check(kC8Snapshots, 1, base);
      clean = rep.snapshots == kC8Snapshots;
      for (const auto& [k, m] : rep.matches) {
        clean = clean && m >= rep.single_vehicle;
        agreement += " L" + std::to_string(k) + " " + std::to_string(m) + "/" + std::to_string(rep.snapshots);
      }
    } catch (const std::exception& e) {
      clean = false;
      agreement = std::string(" error: ") + e.what();
    }
    report.line(8, hand && clean,
                std::string("hand state ") + (hand ? "matches" : "differs") + " (payoffs " +
                    fmt(r.payoffs.at(first)) + ", " + fmt(r.payoffs.at(second)) + "); spne-check " +
                    std::to_string(kC8Snapshots) + " snapshots " + (clean ? "clean" : "NOT clean") +
                    ", agreement" + agreement);
  }

  if (want(9)) {
    const fs::path dir = fs::temp_directory_path() / "crossgame_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    ScenarioConfig c = base;
    c.seed = 4;
    std::ostringstream t1, t2;
    write_trace(t1, run(c).trace, IntersectionLayout(c.entry_len, c.exit_len));
    write_trace(t2, run(c).trace, IntersectionLayout(c.entry_len, c.exit_len));
    write_file(dir / "base.json", config_to_json(c).dump(2));
    write_file(dir / "sweep.json", R"({"schema": "crossgame-sweep/1", "base_config": "base.json",
      "axes": [{"param": "v_max", "values": [1, 2]}], "seeds": {"start": 1, "count": 2}})");
    bool ok = t1.str() == t2.str();
    for (const char* sub : {"a", "b"}) {
      const fs::path out = dir / sub;
      ok = ok && quiet_cli({"sweep", (dir / "sweep.json").string(), "--steps", "80", "--out", out.string()}) == 0;
      ok = ok && quiet_cli({"plot", (out / "results.csv").string(), "--x", "v_max", "--y",
                            "mean_travel_time", "--out", out.string()}) == 0;
    }
    const bool csv = read_file(dir / "a" / "results.csv") == read_file(dir / "b" / "results.csv");
    const bool svg = read_file(dir / "a" / "mean_travel_time_vs_v_max.svg") ==
                     read_file(dir / "b" / "mean_travel_time_vs_v_max.svg");
    report.line(9, ok && csv && svg,
                std::string("trace ") + (t1.str() == t2.str() ? "identical" : "differs") + ", csv " +
                    (csv ? "identical" : "differs") + ", svg " + (svg ? "identical" : "differs"));
    fs::remove_all(dir);
  }

  if (want(10)) {
    // Busiest round: level-1 vehicles packed around the box, each deciding in priority
    // order after observing the earlier movers.
    const auto lay = std::make_shared<const IntersectionLayout>(10, 10);
    std::mt19937_64 rng(10010);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      WorldSnapshot snap = random_snapshot(lay, base.limits, kC10Vehicles, 0, rng);
      for (auto& v : snap.vehicles) v.level = 1;
      PolicyParams params;
      params.weights = base.weights;
      params.horizon = base.horizon;
      params.k_max = base.k_max;
      Planner planner(lay, base.limits, params);
      const auto t0 = Clock::now();
      planner.begin_step();
      std::vector<Commitment> observed;
      for (std::int32_t id : priority_order(*lay, snap.vehicles, true)) {
        observed.push_back(Commitment{id, planner.decide(snap, id, 1, observed)});
      }
      worst = std::max(worst, seconds_since(t0));
    }
    ScenarioConfig c = base;
    c.steps = 300;
    const auto t0 = Clock::now();
    run(c);
    const double full = seconds_since(t0);
    report.line(10, worst < kC10RoundSeconds && full < kC10RunSeconds,
                "12-vehicle round " + fmt(worst, 4) + " s (max " + fmt(kC10RoundSeconds, 1) +
                    "), standard run " + fmt(full, 2) + " s (max " + fmt(kC10RunSeconds, 0) + ")");
  }

  std::cout << "acceptance: " << (report.passed + report.failed) << " criteria evaluated, "
            << report.passed << " passed, " << report.failed << " failed" << std::endl;
  return report.failed == 0 ? 0 : 1;
}
