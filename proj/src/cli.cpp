#include "crossgame/cli.hpp"

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "crossgame/io.hpp"

namespace crossgame {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  int jobs = 1;
  std::string out = "out";
  bool quiet = false;
};

void add_common(CLI::App& cmd, Common& c) {
  cmd.add_option("--seed", c.seed, "Override the scenario seed");
  cmd.add_option("--steps", c.steps, "Override the number of steps")->check(CLI::NonNegativeNumber);
  cmd.add_option("--jobs", c.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  cmd.add_option("--out", c.out, "Output directory");
  cmd.add_flag("--quiet", c.quiet, "Suppress the console report");
}

ScenarioConfig apply_overrides(ScenarioConfig cfg, const Common& c) {
  if (c.seed) cfg.seed = *c.seed;
  if (c.steps) cfg.steps = *c.steps;
  validate(cfg);
  return cfg;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are rethrown in index order.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(std::max(jobs, 1), n));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << *v;
  return os.str();
}

std::string fix3(double v) { return opt_str(v); }

int run_exit_code(const RunResult& r) { return r.summary.aborted ? kExitInvariant : kExitOk; }

int cmd_run(const std::string& config_path, const Common& common, std::ostream& out,
            std::ostream& err) {
  const ScenarioConfig cfg = apply_overrides(load_config(config_path), common);
  const RunResult res = run(cfg);
  const fs::path dir = common.out;
  const IntersectionLayout layout(cfg.entry_len, cfg.exit_len);
  std::ostringstream trace;
  write_trace(trace, res.trace, layout);
  write_file(dir / "trace.jsonl", trace.str());
  write_file(dir / "summary.json", summary_to_json(res.summary).dump(2) + "\n");
  write_file(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  if (!common.quiet) {
    const MetricsSummary& m = res.summary;
    out << "steps " << m.steps << "  spawned " << m.spawned << "  exited " << m.exited
        << "  remaining " << m.remaining << "  backlog " << m.backlog << "\n"
        << "mean travel time " << opt_str(m.mean_travel_time) << "  normal "
        << opt_str(m.mean_travel_time_normal) << "  emergency "
        << opt_str(m.mean_travel_time_emergency) << "\n"
        << "mean speed " << fix3(m.mean_speed) << "  throughput " << fix3(m.throughput)
        << "  mean queue " << fix3(m.mean_queue_length) << "  max queue " << m.max_queue_length
        << "\n"
        << "wrote " << (dir / "summary.json").string() << ", " << (dir / "trace.jsonl").string()
        << "\n";
  }
  if (res.summary.aborted) err << "error: " << res.diagnostic << "\n";
  return run_exit_code(res);
}

int cmd_sweep(const std::string& sweep_path, const Common& common, std::ostream& out,
              std::ostream& err) {
  std::string text;
  try {
    text = read_file(sweep_path);
  } catch (const std::runtime_error& e) {
    throw ConfigError("sweep", e.what());
  }
  SweepSpec spec = parse_sweep(text, fs::path(sweep_path).parent_path());
  if (common.steps) spec.base["steps"] = *common.steps;
  if (common.seed) spec.seeds = {*common.seed};
  const std::vector<SweepPoint> points = expand_sweep(spec);

  struct Job {
    std::size_t point;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (auto s : spec.seeds) jobs.push_back({p, s});
  }
  std::vector<MetricsSummary> results(jobs.size());
  parallel_for(jobs.size(), common.jobs, [&](std::size_t i) {
    ScenarioConfig cfg = points[jobs[i].point].config;
    cfg.seed = jobs[i].seed;
    results[i] = run(cfg).summary;
  });

  CsvTable table;
  for (const auto& a : spec.axes) table.header.push_back(a.param);
  table.header.push_back("seed");
  for (const auto& c : metric_columns()) table.header.push_back(c);
  bool aborted = false;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    std::vector<std::string> row = points[jobs[i].point].labels;
    row.push_back(std::to_string(jobs[i].seed));
    for (auto& v : metric_values(results[i])) row.push_back(std::move(v));
    table.rows.push_back(std::move(row));
    aborted = aborted || results[i].aborted;
  }
  const fs::path path = fs::path(common.out) / "results.csv";
  write_file(path, to_csv(table));
  if (!common.quiet) out << jobs.size() << " runs, wrote " << path.string() << "\n";
  if (aborted) {
    err << "error: at least one run aborted on a collision\n";
    return kExitInvariant;
  }
  return kExitOk;
}

struct Aggregate {
  std::vector<double> values;  // per seed, NaN when absent
  double mean() const {
    double s = 0.0;
    int n = 0;
    for (double v : values) {
      if (!std::isnan(v)) {
        s += v;
        ++n;
      }
    }
    return n ? s / n : std::nan("");
  }
};

double metric_number(const std::string& s) {
  if (s.empty()) return std::nan("");
  return std::stod(s);
}

int cmd_compare(const std::string& config_path, const std::vector<int>& levels, int seed_count,
                const Common& common, std::ostream& out, std::ostream& err) {
  const ScenarioConfig base = apply_overrides(load_config(config_path), common);
  if (levels.empty()) throw ConfigError("levels", "at least one level is required");
  for (int k : levels) {
    if (k < 0 || k > base.k_max) {
      throw ConfigError("levels", "level " + std::to_string(k) + " outside [0, k_max=" +
                                      std::to_string(base.k_max) + "]");
    }
  }
  if (seed_count < 1) throw ConfigError("seeds", "must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < seed_count; ++i) seeds.push_back(base.seed + static_cast<std::uint64_t>(i));

  const std::size_t n = levels.size() * seeds.size();
  std::vector<MetricsSummary> results(n);
  parallel_for(n, common.jobs, [&](std::size_t i) {
    ScenarioConfig cfg = base;
    cfg.level_mix = {{levels[i / seeds.size()], 1.0}};
    for (auto& iv : cfg.initial_vehicles) iv.level = levels[i / seeds.size()];
    cfg.seed = seeds[i % seeds.size()];
    results[i] = run(cfg).summary;
  });

  const auto& cols = metric_columns();
  CsvTable table;
  table.header = {"kind", "level", "seed"};
  for (const auto& c : cols) table.header.push_back(c);
  std::vector<std::vector<Aggregate>> agg(levels.size(), std::vector<Aggregate>(cols.size()));
  bool aborted = false;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t li = i / seeds.size();
    std::vector<std::string> row{"run", std::to_string(levels[li]),
                                 std::to_string(seeds[i % seeds.size()])};
    const auto vals = metric_values(results[i]);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      row.push_back(vals[c]);
      agg[li][c].values.push_back(metric_number(vals[c]));
    }
    table.rows.push_back(std::move(row));
    aborted = aborted || results[i].aborted;
  }
  for (std::size_t li = 0; li < levels.size(); ++li) {
    std::vector<std::string> row{"aggregate", std::to_string(levels[li]), ""};
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double m = agg[li][c].mean();
      row.push_back(std::isnan(m) ? "" : format_number(m));
    }
    table.rows.push_back(std::move(row));
  }

  // Pairwise wins on mean travel time; a seed without exits on either side is a tie.
  const std::size_t tt = static_cast<std::size_t>(
      std::find(cols.begin(), cols.end(), "mean_travel_time") - cols.begin());
  CsvTable wins;
  wins.header = {"level_a", "level_b", "pairs", "wins_a", "wins_b", "ties", "win_rate_a"};
  for (std::size_t a = 0; a < levels.size(); ++a) {
    for (std::size_t b = a + 1; b < levels.size(); ++b) {
      int wa = 0;
      int wb = 0;
      int ties = 0;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const double x = agg[a][tt].values[s];
        const double y = agg[b][tt].values[s];
        if (std::isnan(x) || std::isnan(y) || x == y) {
          ++ties;
        } else if (x < y) {
          ++wa;
        } else {
          ++wb;
        }
      }
      wins.rows.push_back({std::to_string(levels[a]), std::to_string(levels[b]),
                           std::to_string(seeds.size()), std::to_string(wa), std::to_string(wb),
                           std::to_string(ties),
                           format_number(static_cast<double>(wa) / seeds.size())});
    }
  }
  const fs::path dir = common.out;
  write_file(dir / "compare.csv", to_csv(table));
  write_file(dir / "win_rates.csv", to_csv(wins));

  if (!common.quiet) {
    const auto col = [&](const char* name) {
      return static_cast<std::size_t>(std::find(cols.begin(), cols.end(), name) - cols.begin());
    };
    out << std::left << std::setw(7) << "level" << std::setw(18) << "mean_travel_time"
        << std::setw(12) << "mean_speed" << std::setw(12) << "mean_queue" << std::setw(10)
        << "max_queue"
        << "\n";
    for (std::size_t li = 0; li < levels.size(); ++li) {
      out << std::left << std::setw(7) << levels[li] << std::setw(18)
          << fix3(agg[li][col("mean_travel_time")].mean()) << std::setw(12)
          << fix3(agg[li][col("mean_speed")].mean()) << std::setw(12)
          << fix3(agg[li][col("mean_queue_length")].mean()) << std::setw(10)
          << fix3(agg[li][col("max_queue_length")].mean()) << "\n";
    }
    for (const auto& r : wins.rows) {
      out << "level " << r[0] << " vs " << r[1] << ": " << r[3] << "-" << r[4] << " (" << r[5]
          << " ties) over " << r[2] << " seeds\n";
    }
    out << "wrote " << (dir / "compare.csv").string() << ", " << (dir / "win_rates.csv").string()
        << "\n";
  }
  if (aborted) {
    err << "error: at least one run aborted on a collision\n";
    return kExitInvariant;
  }
  return kExitOk;
}

int cmd_spne(const std::optional<std::string>& config_path, int count, const Common& common,
             std::ostream& out) {
  ScenarioConfig cfg;
  if (config_path) cfg = load_config(*config_path);
  if (count < 0) throw ConfigError("count", "must be >= 0");
  const SpneReport rep = spne_check(count, common.seed.value_or(cfg.seed), cfg);
  if (!common.quiet) {
    out << "snapshots " << rep.snapshots << " (single-vehicle " << rep.single_vehicle << ")\n";
    for (const auto& [k, m] : rep.matches) {
      out << "level " << k << " agreement ";
      if (rep.snapshots == 0) {
        out << "-";
      } else {
        out << std::fixed << std::setprecision(4) << static_cast<double>(m) / rep.snapshots
            << std::defaultfloat << " (" << m << "/" << rep.snapshots << ")";
      }
      out << "\n";
    }
  }
  return kExitOk;
}

int cmd_plot(const std::string& csv_path, const PlotRequest& req, const std::string& file,
             const Common& common, std::ostream& out) {
  CsvTable table;
  try {
    table = parse_csv(read_file(csv_path));
  } catch (const std::runtime_error& e) {
    throw ConfigError("csv", e.what());
  }
  const std::string svg = render_plot(table, req);
  const fs::path path =
      fs::path(common.out) / (file.empty() ? req.y + "_vs_" + req.x + ".svg" : file);
  write_file(path, svg);
  if (!common.quiet) out << "wrote " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Level-k game-theoretic unsignalized intersection simulator", "crossgame"};
  app.require_subcommand(1);

  Common c_run, c_sweep, c_cmp, c_spne, c_plot;
  std::string config_path, sweep_path, csv_path, plot_file;
  std::optional<std::string> spne_config;
  std::vector<int> levels{0, 1, 2};
  int seed_count = 30;
  int spne_count = 500;
  PlotRequest plot;

  auto* run_cmd = app.add_subcommand("run", "Simulate one scenario");
  run_cmd->add_option("config", config_path, "Config JSON")->required();
  add_common(*run_cmd, c_run);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter grid over seeds");
  sweep_cmd->add_option("sweep", sweep_path, "Sweep JSON")->required();
  add_common(*sweep_cmd, c_sweep);

  auto* cmp_cmd = app.add_subcommand("compare-levels", "Compare pure reasoning levels");
  cmp_cmd->add_option("config", config_path, "Config JSON")->required();
  cmp_cmd->add_option("--levels", levels, "Levels to compare")->delimiter(',');
  cmp_cmd->add_option("--seeds", seed_count, "Seeds per level, starting at the config seed");
  add_common(*cmp_cmd, c_cmp);

  auto* spne_cmd = app.add_subcommand("spne-check", "Level-k vs backward induction report");
  spne_cmd->add_option("config", spne_config, "Config JSON for weights and kinematics");
  spne_cmd->add_option("--count", spne_count, "Random snapshots");
  add_common(*spne_cmd, c_spne);

  auto* plot_cmd = app.add_subcommand("plot", "Render a results CSV as an SVG line chart");
  plot_cmd->add_option("csv", csv_path, "Results CSV")->required();
  plot_cmd->add_option("--x", plot.x, "Column on the x axis")->required();
  plot_cmd->add_option("--y", plot.y, "Metric on the y axis")->required();
  plot_cmd->add_option("--group-by", plot.group_by, "One series per value of this column");
  plot_cmd->add_option("--title", plot.title, "Chart title");
  plot_cmd->add_option("--file", plot_file, "File name inside --out");
  add_common(*plot_cmd, c_plot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*run_cmd) return cmd_run(config_path, c_run, out, err);
    if (*sweep_cmd) return cmd_sweep(sweep_path, c_sweep, out, err);
    if (*cmp_cmd) return cmd_compare(config_path, levels, seed_count, c_cmp, out, err);
    if (*spne_cmd) return cmd_spne(spne_config, spne_count, c_spne, out);
    if (*plot_cmd) return cmd_plot(csv_path, plot, plot_file, c_plot, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace crossgame
