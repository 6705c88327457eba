#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

#include "crossgame/cli.hpp"
#include "crossgame/io.hpp"

using namespace crossgame;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "crossgame");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("crossgame_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string small_config(int steps = 30) {
  return R"({"schema": "crossgame-config/1", "steps": )" + std::to_string(steps) +
         R"(, "h": 3, "T": 2})";
}

// Two vehicles whose raw choices collide once the safety filter is off.
const char* kCollisionConfig = R"({
  "schema": "crossgame-config/1", "steps": 10, "arrival": "bernoulli", "lambda": 0,
  "p_rand": 0, "level_mix": {"0": 1}, "safety_filter": false,
  "initial_vehicles": [
    {"route": "W-straight", "cell_index": 10, "speed": 1, "level": 0},
    {"route": "S-straight", "cell_index": 9, "speed": 1, "level": 0}]
})";

}  // namespace

TEST_CASE("cli run writes summary, trace and config echo") {
  const fs::path dir = scratch("run");
  write_file(dir / "c.json", small_config());
  const Result r = cli({"run", (dir / "c.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "o" / "summary.json"));
  CHECK(fs::exists(dir / "o" / "trace.jsonl"));
  // The echo is itself a valid config and reproduces the trace.
  const Result again = cli({"run", (dir / "o" / "config.json").string(), "--out",
                            (dir / "p").string(), "--quiet"});
  CHECK(again.code == kExitOk);
  CHECK(again.out.empty());
  CHECK(read_file(dir / "o" / "trace.jsonl") == read_file(dir / "p" / "trace.jsonl"));
}

TEST_CASE("cli run: overrides and input errors") {
  const fs::path dir = scratch("run_err");
  write_file(dir / "c.json", small_config());
  const Result zero = cli({"run", (dir / "c.json").string(), "--steps", "0", "--out",
                           (dir / "o").string(), "--quiet"});
  CHECK(zero.code == kExitOk);
  CHECK(Json::parse(read_file(dir / "o" / "summary.json"))["spawned"] == 0);

  write_file(dir / "bad.json", R"({"schema": "crossgame-config/1", "gamma": 1.5})");
  const Result bad = cli({"run", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  CHECK(bad.code == kExitInput);
  CHECK(bad.err.find("gamma") != std::string::npos);
  CHECK(bad.err.find("(0,1]") != std::string::npos);

  CHECK(cli({"run", (dir / "missing.json").string()}).code == kExitInput);
  CHECK(cli({"run"}).code == kExitInput);
  CHECK(cli({"frobnicate"}).code == kExitInput);
  CHECK(cli({}).code == kExitInput);
  CHECK(cli({"run", (dir / "c.json").string(), "--steps", "-4"}).code == kExitInput);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("cli run: collision abort exits 3") {
  const fs::path dir = scratch("abort");
  write_file(dir / "c.json", kCollisionConfig);
  const Result r = cli({"run", (dir / "c.json").string(), "--out", (dir / "o").string(), "--quiet"});
  CHECK(r.code == kExitInvariant);
  CHECK(r.err.find("collision") != std::string::npos);
  CHECK(Json::parse(read_file(dir / "o" / "summary.json"))["aborted"] == true);
}

TEST_CASE("cli sweep: row count, order and determinism") {
  const fs::path dir = scratch("sweep");
  write_file(dir / "base.json", small_config(20));
  write_file(dir / "s.json", R"({"schema": "crossgame-sweep/1", "base_config": "base.json",
    "axes": [{"param": "v_max", "values": [1, 2, 3]}], "seeds": {"start": 1, "count": 5}})");
  const Result r = cli({"sweep", (dir / "s.json").string(), "--out", (dir / "a").string(),
                        "--jobs", "3", "--quiet"});
  REQUIRE(r.code == kExitOk);
  const CsvTable t = parse_csv(read_file(dir / "a" / "results.csv"));
  REQUIRE(t.rows.size() == 15);
  CHECK(t.header[0] == "v_max");
  CHECK(t.header[1] == "seed");
  CHECK(t.rows[0][0] == "1");
  CHECK(t.rows[0][1] == "1");
  CHECK(t.rows[14][0] == "3");
  CHECK(t.rows[14][1] == "5");
  for (const auto& col : metric_columns()) CHECK(t.column(col).has_value());

  CHECK(cli({"sweep", (dir / "s.json").string(), "--out", (dir / "b").string(), "--quiet"}).code ==
        kExitOk);
  CHECK(read_file(dir / "a" / "results.csv") == read_file(dir / "b" / "results.csv"));

  write_file(dir / "empty.json", R"({"schema": "crossgame-sweep/1", "base_config": "base.json",
    "seeds": [3, 4]})");
  CHECK(cli({"sweep", (dir / "empty.json").string(), "--out", (dir / "c").string(), "--quiet"})
            .code == kExitOk);
  CHECK(parse_csv(read_file(dir / "c" / "results.csv")).rows.size() == 2);

  write_file(dir / "huge.json", R"({"schema": "crossgame-sweep/1", "max_runs": 10,
    "axes": [{"param": "v_max", "values": [1, 2, 3]}], "seeds": {"start": 1, "count": 5}})");
  CHECK(cli({"sweep", (dir / "huge.json").string(), "--out", (dir / "d").string()}).code ==
        kExitInput);
}

TEST_CASE("cli compare-levels: counting and consistency with run") {
  const fs::path dir = scratch("compare");
  write_file(dir / "c.json", small_config(25));
  const Result r = cli({"compare-levels", (dir / "c.json").string(), "--levels", "0,1",
                        "--seeds", "3", "--out", (dir / "o").string()});
  REQUIRE(r.code == kExitOk);
  const CsvTable t = parse_csv(read_file(dir / "o" / "compare.csv"));
  int runs = 0;
  int aggs = 0;
  for (const auto& row : t.rows) (row[0] == "run" ? runs : aggs)++;
  CHECK(runs == 6);
  CHECK(aggs == 2);
  const CsvTable w = parse_csv(read_file(dir / "o" / "win_rates.csv"));
  CHECK(w.rows.size() == 1);

  const Result one = cli({"compare-levels", (dir / "c.json").string(), "--levels", "1",
                          "--seeds", "1", "--out", (dir / "p").string(), "--quiet"});
  REQUIRE(one.code == kExitOk);
  CHECK(cli({"run", (dir / "c.json").string(), "--out", (dir / "q").string(), "--quiet"}).code ==
        kExitOk);
  const CsvTable single = parse_csv(read_file(dir / "p" / "compare.csv"));
  const Json summary = Json::parse(read_file(dir / "q" / "summary.json"));
  const auto& agg = single.rows.back();
  REQUIRE(agg[0] == "aggregate");
  const auto tt = *single.column("mean_travel_time");
  CHECK(std::stod(agg[tt]) == summary["mean_travel_time"].get<double>());
  CHECK(std::stod(agg[*single.column("exited")]) == summary["exited"].get<double>());

  CHECK(cli({"compare-levels", (dir / "c.json").string(), "--levels", "0,7"}).code == kExitInput);
}

TEST_CASE("cli spne-check") {
  const Result none = cli({"spne-check", "--count", "0"});
  CHECK(none.code == kExitOk);
  CHECK(none.out.find("snapshots 0") != std::string::npos);
  const Result some = cli({"spne-check", "--count", "40", "--seed", "5"});
  CHECK(some.code == kExitOk);
  CHECK(some.out.find("level 1 agreement") != std::string::npos);
}

TEST_CASE("cli plot") {
  const fs::path dir = scratch("plot");
  CsvTable t;
  t.header = {"v_max", "seed", "mean_travel_time"};
  t.rows = {{"1", "1", "40"}, {"2", "1", "30"}, {"1", "2", "44"}, {"2", "2", "31"}};
  write_file(dir / "r.csv", to_csv(t));
  const Result r = cli({"plot", (dir / "r.csv").string(), "--x", "v_max", "--y",
                        "mean_travel_time", "--out", (dir / "o").string(), "--quiet"});
  CHECK(r.code == kExitOk);
  const fs::path svg = dir / "o" / "mean_travel_time_vs_v_max.svg";
  REQUIRE(fs::exists(svg));
  const std::string first = read_file(svg);
  CHECK(cli({"plot", (dir / "r.csv").string(), "--x", "v_max", "--y", "mean_travel_time", "--out",
             (dir / "o").string(), "--quiet"}).code == kExitOk);
  CHECK(read_file(svg) == first);
  const Result bad = cli({"plot", (dir / "r.csv").string(), "--x", "v_max", "--y", "speed"});
  CHECK(bad.code == kExitInput);
  CHECK(bad.err.find("speed") != std::string::npos);
}

TEST_CASE("tool binary exit codes") {
  const fs::path dir = scratch("binary");
  write_file(dir / "ok.json", small_config(5));
  write_file(dir / "bad.json", R"({"schema": "crossgame-config/1", "T": 0})");
  write_file(dir / "crash.json", kCollisionConfig);
  const auto status = [&](const std::string& args) {
    const std::string cmd = std::string(CROSSGAME_TOOL) + " " + args + " > /dev/null 2>&1";
    const int s = std::system(cmd.c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  const std::string out = " --quiet --out " + (dir / "o").string();
  CHECK(status("run " + (dir / "ok.json").string() + out) == 0);
  CHECK(status("run " + (dir / "bad.json").string() + out) == 2);
  CHECK(status("run " + (dir / "crash.json").string() + out) == 3);
  CHECK(status("--bogus") == 2);
}
