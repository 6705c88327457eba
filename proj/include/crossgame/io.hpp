#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crossgame/sim.hpp"

namespace crossgame {

inline constexpr const char* kConfigSchema = "crossgame-config/1";
inline constexpr const char* kTraceSchema = "crossgame-trace/1";
inline constexpr const char* kSummarySchema = "crossgame-summary/1";
inline constexpr const char* kSweepSchema = "crossgame-sweep/1";

using Json = nlohmann::ordered_json;

/// Parses and validates a config document. Syntax errors carry "line L, column C"; field
/// errors name the field and, when it can be located, its line.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig config_from_json(const Json& doc);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Full config document (every field, defaults included); parse_config round-trips it.
Json config_to_json(const ScenarioConfig& config);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

Json step_to_json(const StepRecord& rec, const IntersectionLayout& layout);
void write_trace(std::ostream& out, std::span<const StepRecord> trace,
                 const IntersectionLayout& layout);

Json summary_to_json(const MetricsSummary& m);

/// Metric columns shared by every results CSV, in order.
const std::vector<std::string>& metric_columns();
std::vector<std::string> metric_values(const MetricsSummary& m);

/// Number formatting used in every text output: shortest form that round-trips.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header, or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
};

std::string to_csv(const CsvTable& table);
/// Throws std::runtime_error on ragged rows or an empty document.
CsvTable parse_csv(const std::string& text);

struct SweepAxis {
  std::string param;
  std::vector<Json> values;
};

struct SweepSpec {
  Json base;  // config document
  std::vector<SweepAxis> axes;
  std::vector<std::uint64_t> seeds;
  std::size_t max_runs = 10000;
};

/// Throws ConfigError on schema problems (field "axes", "seeds", ...).
SweepSpec parse_sweep(const std::string& text, const std::filesystem::path& base_dir = {});

struct SweepPoint {
  std::vector<std::string> labels;  // one per axis
  ScenarioConfig config;
};

/// Cartesian product in axis order (last axis varies fastest). Every point is validated.
std::vector<SweepPoint> expand_sweep(const SweepSpec& spec);

struct PlotRequest {
  std::string x;
  std::string y;
  std::string group_by;  // empty: single series
  std::string title;
};

/// Line chart, one series per group value, mean with min/max whiskers per x value.
/// Throws ConfigError naming an unknown column.
std::string render_plot(const CsvTable& table, const PlotRequest& request);

}  // namespace crossgame
