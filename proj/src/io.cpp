#include "crossgame/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace crossgame {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& message) {
  throw ConfigError(field, message);
}

int line_of(const std::string& text, std::size_t offset) {
  return 1 + static_cast<int>(std::count(text.begin(),
                                         text.begin() + static_cast<std::ptrdiff_t>(
                                                            std::min(offset, text.size())),
                                         '\n'));
}

// Line of the first occurrence of "key" in the document, 0 if absent.
int locate_key(const std::string& text, const std::string& field) {
  std::string key = field.substr(0, field.find_first_of(".["));
  const std::size_t at = text.find('"' + key + '"');
  return at == std::string::npos ? 0 : line_of(text, at);
}

std::int64_t get_int(const Json& v, const std::string& field) {
  if (!v.is_number_integer()) fail(field, "expected an integer");
  return v.get<std::int64_t>();
}

int get_small_int(const Json& v, const std::string& field) {
  const std::int64_t x = get_int(v, field);
  if (x < -1000000 || x > 1000000) fail(field, "integer out of range");
  return static_cast<int>(x);
}

double get_number(const Json& v, const std::string& field) {
  if (!v.is_number()) fail(field, "expected a number");
  return v.get<double>();
}

bool get_bool(const Json& v, const std::string& field) {
  if (!v.is_boolean()) fail(field, "expected true or false");
  return v.get<bool>();
}

std::string get_string(const Json& v, const std::string& field) {
  if (!v.is_string()) fail(field, "expected a string");
  return v.get<std::string>();
}

RouteKey parse_route(const std::string& s, const std::string& field) {
  const auto dash = s.find('-');
  if (dash != std::string::npos) {
    const auto a = parse_approach(s.substr(0, dash));
    const auto t = parse_turn(s.substr(dash + 1));
    if (a && t) return RouteKey{*a, *t};
  }
  fail(field, "unknown route '" + s + "' (expected e.g. S-straight, E-left)");
}

VehicleClass parse_class(const std::string& s, const std::string& field) {
  if (s == "normal") return VehicleClass::Normal;
  if (s == "emergency") return VehicleClass::Emergency;
  fail(field, "unknown class '" + s + "' (normal|emergency)");
}

InitialVehicle parse_initial(const Json& v, const std::string& field) {
  if (!v.is_object()) fail(field, "expected an object");
  InitialVehicle iv;
  bool has_route = false;
  for (const auto& [key, val] : v.items()) {
    const std::string f = field + "." + key;
    if (key == "route") {
      iv.route = parse_route(get_string(val, f), f);
      has_route = true;
    } else if (key == "cell_index") {
      iv.cell_index = get_small_int(val, f);
    } else if (key == "speed") {
      iv.speed = get_small_int(val, f);
    } else if (key == "class") {
      iv.cls = parse_class(get_string(val, f), f);
    } else if (key == "level") {
      iv.level = get_small_int(val, f);
    } else {
      fail(f, "unknown field");
    }
  }
  if (!has_route) fail(field + ".route", "required");
  return iv;
}

}  // namespace

ScenarioConfig config_from_json(const Json& doc) {
  if (!doc.is_object()) fail("config", "top level must be a JSON object");
  if (!doc.contains("schema")) fail("schema", std::string("required (\"") + kConfigSchema + "\")");
  ScenarioConfig c;
  for (const auto& [key, v] : doc.items()) {
    if (key == "schema") {
      if (get_string(v, key) != kConfigSchema) {
        fail(key, "unsupported schema '" + v.get<std::string>() + "', expected " + kConfigSchema);
      }
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "steps") {
      c.steps = get_small_int(v, key);
    } else if (key == "L_in") {
      c.entry_len = get_small_int(v, key);
    } else if (key == "L_out") {
      c.exit_len = get_small_int(v, key);
    } else if (key == "v_max") {
      c.limits.v_max = get_small_int(v, key);
    } else if (key == "d_min") {
      c.limits.d_min = get_small_int(v, key);
    } else if (key == "w_prog") {
      c.weights.w_prog = get_number(v, key);
    } else if (key == "w_wait") {
      c.weights.w_wait = get_number(v, key);
    } else if (key == "w_safe") {
      c.weights.w_safe = get_number(v, key);
    } else if (key == "c_col") {
      c.weights.c_col = get_number(v, key);
    } else if (key == "rho") {
      c.weights.rho = get_number(v, key);
    } else if (key == "T") {
      c.horizon.T = get_small_int(v, key);
    } else if (key == "gamma") {
      c.horizon.gamma = get_number(v, key);
    } else if (key == "k_max") {
      c.k_max = get_small_int(v, key);
    } else if (key == "level_mix") {
      if (!v.is_object()) fail(key, "expected an object mapping level to probability");
      c.level_mix.clear();
      for (const auto& [lk, lv] : v.items()) {
        int level = -1;
        const auto [p, ec] = std::from_chars(lk.data(), lk.data() + lk.size(), level);
        if (ec != std::errc{} || p != lk.data() + lk.size()) {
          fail(key, "level key '" + lk + "' is not an integer");
        }
        c.level_mix[level] = get_number(lv, key + "." + lk);
      }
    } else if (key == "arrival") {
      const std::string mode = get_string(v, key);
      if (mode == "fixed_interval") {
        c.arrival = ArrivalMode::FixedInterval;
      } else if (mode == "bernoulli") {
        c.arrival = ArrivalMode::Bernoulli;
      } else {
        fail(key, "unknown mode '" + mode + "' (fixed_interval|bernoulli)");
      }
    } else if (key == "h") {
      c.interval = get_small_int(v, key);
    } else if (key == "lambda") {
      c.rate = get_number(v, key);
    } else if (key == "route_probs") {
      if (!v.is_object()) fail(key, "expected an object");
      for (const auto& [rk, rv] : v.items()) {
        const std::string f = key + "." + rk;
        if (rk == "straight") {
          c.route_probs.straight = get_number(rv, f);
        } else if (rk == "left") {
          c.route_probs.left = get_number(rv, f);
        } else if (rk == "right") {
          c.route_probs.right = get_number(rv, f);
        } else {
          fail(f, "unknown field");
        }
      }
    } else if (key == "p_rand") {
      c.p_rand = get_number(v, key);
    } else if (key == "emergency_prob") {
      c.emergency_prob = get_number(v, key);
    } else if (key == "emergency_order_priority") {
      c.emergency_order_priority = get_bool(v, key);
    } else if (key == "safety_filter") {
      c.safety_filter = get_bool(v, key);
    } else if (key == "initial_vehicles") {
      if (!v.is_array()) fail(key, "expected an array");
      for (std::size_t i = 0; i < v.size(); ++i) {
        c.initial_vehicles.push_back(parse_initial(v[i], key + "[" + std::to_string(i) + "]"));
      }
    } else {
      fail(key, "unknown field");
    }
  }
  validate(c);
  return c;
}

ScenarioConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail("json", std::string("syntax error at line ") + std::to_string(line_of(text, e.byte - 1)) +
                     ": " + e.what());
  }
  try {
    return config_from_json(doc);
  } catch (const ConfigError& e) {
    const int line = locate_key(text, e.field());
    if (line == 0) throw;
    const std::string what = e.what();
    throw ConfigError(e.field(),
                      what.substr(e.field().size() + 2) + " (line " + std::to_string(line) + ")");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    fail("config", e.what());
  }
  return parse_config(text);
}

Json config_to_json(const ScenarioConfig& c) {
  Json j;
  j["schema"] = kConfigSchema;
  j["seed"] = c.seed;
  j["steps"] = c.steps;
  j["L_in"] = c.entry_len;
  j["L_out"] = c.exit_len;
  j["v_max"] = c.limits.v_max;
  j["d_min"] = c.limits.d_min;
  j["w_prog"] = c.weights.w_prog;
  j["w_wait"] = c.weights.w_wait;
  j["w_safe"] = c.weights.w_safe;
  j["c_col"] = c.weights.c_col;
  j["rho"] = c.weights.rho;
  j["T"] = c.horizon.T;
  j["gamma"] = c.horizon.gamma;
  j["k_max"] = c.k_max;
  Json mix = Json::object();
  for (const auto& [k, p] : c.level_mix) mix[std::to_string(k)] = p;
  j["level_mix"] = mix;
  j["arrival"] = c.arrival == ArrivalMode::FixedInterval ? "fixed_interval" : "bernoulli";
  j["h"] = c.interval;
  j["lambda"] = c.rate;
  j["route_probs"] = {{"straight", c.route_probs.straight},
                      {"left", c.route_probs.left},
                      {"right", c.route_probs.right}};
  j["p_rand"] = c.p_rand;
  j["emergency_prob"] = c.emergency_prob;
  j["emergency_order_priority"] = c.emergency_order_priority;
  j["safety_filter"] = c.safety_filter;
  Json init = Json::array();
  for (const auto& iv : c.initial_vehicles) {
    init.push_back({{"route", iv.route.name()},
                    {"cell_index", iv.cell_index},
                    {"speed", iv.speed},
                    {"class", std::string(to_string(iv.cls))},
                    {"level", iv.level}});
  }
  j["initial_vehicles"] = init;
  return j;
}

Json step_to_json(const StepRecord& rec, const IntersectionLayout& layout) {
  Json j;
  j["schema"] = kTraceSchema;
  j["step"] = rec.step;
  Json vs = Json::array();
  for (const auto& vr : rec.vehicles) {
    const VehicleState& v = vr.before;
    const Route& r = layout.route(v.route);
    vs.push_back({{"id", v.id},
                  {"class", std::string(to_string(v.cls))},
                  {"route", r.key.name()},
                  {"level", v.level},
                  {"index", v.cell_index},
                  {"cell", layout.cell_name(r.cells[v.cell_index])},
                  {"speed", v.speed},
                  {"planned", std::string(to_string(vr.planned))},
                  {"chosen", std::string(to_string(vr.chosen))},
                  {"executed", std::string(to_string(vr.executed))},
                  {"disturbed", vr.disturbed},
                  {"advanced", vr.advanced}});
  }
  j["vehicles"] = vs;
  j["arrivals"] = rec.arrivals;
  Json spawns = Json::array();
  for (const auto& v : rec.spawns) {
    spawns.push_back({{"id", v.id},
                      {"class", std::string(to_string(v.cls))},
                      {"route", layout.route(v.route).key.name()},
                      {"level", v.level},
                      {"arrival_step", v.arrival_step}});
  }
  j["spawns"] = spawns;
  Json exits = Json::array();
  for (const auto& e : rec.exits) {
    exits.push_back({{"id", e.id},
                     {"class", std::string(to_string(e.cls))},
                     {"travel_time", e.travel_time}});
  }
  j["exits"] = exits;
  Json cols = Json::array();
  for (const auto& [a, b] : rec.collisions) cols.push_back({a, b});
  j["collisions"] = cols;
  j["queue"] = rec.queue;
  j["backlog"] = rec.backlog;
  j["active"] = rec.active;
  return j;
}

void write_trace(std::ostream& out, std::span<const StepRecord> trace,
                 const IntersectionLayout& layout) {
  for (const auto& rec : trace) out << step_to_json(rec, layout).dump() << '\n';
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json summary_to_json(const MetricsSummary& m) {
  Json j;
  j["schema"] = kSummarySchema;
  j["steps"] = m.steps;
  j["spawned"] = m.spawned;
  j["exited"] = m.exited;
  j["remaining"] = m.remaining;
  j["backlog"] = m.backlog;
  j["mean_travel_time"] = opt(m.mean_travel_time);
  j["median_travel_time"] = opt(m.median_travel_time);
  j["mean_travel_time_normal"] = opt(m.mean_travel_time_normal);
  j["mean_travel_time_emergency"] = opt(m.mean_travel_time_emergency);
  j["exited_normal"] = m.exited_normal;
  j["exited_emergency"] = m.exited_emergency;
  j["mean_speed"] = m.mean_speed;
  j["throughput"] = m.throughput;
  j["mean_queue_length"] = m.mean_queue_length;
  j["max_queue_length"] = m.max_queue_length;
  j["collisions"] = m.collisions;
  j["aborted"] = m.aborted;
  return j;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{
      "steps",          "spawned",         "exited",
      "remaining",      "backlog",         "mean_travel_time",
      "median_travel_time", "mean_travel_time_normal", "mean_travel_time_emergency",
      "exited_normal",  "exited_emergency", "mean_speed",
      "throughput",     "mean_queue_length", "max_queue_length",
      "collisions",     "aborted"};
  return cols;
}

std::vector<std::string> metric_values(const MetricsSummary& m) {
  const auto o = [](const std::optional<double>& v) { return v ? format_number(*v) : ""; };
  return {std::to_string(m.steps),
          std::to_string(m.spawned),
          std::to_string(m.exited),
          std::to_string(m.remaining),
          std::to_string(m.backlog),
          o(m.mean_travel_time),
          o(m.median_travel_time),
          o(m.mean_travel_time_normal),
          o(m.mean_travel_time_emergency),
          std::to_string(m.exited_normal),
          std::to_string(m.exited_emergency),
          format_number(m.mean_speed),
          format_number(m.throughput),
          format_number(m.mean_queue_length),
          std::to_string(m.max_queue_length),
          std::to_string(m.collisions),
          m.aborted ? "1" : "0"};
}

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::string to_csv(const CsvTable& t) {
  std::string out;
  const auto line = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out += ',';
      out += csv_field(row[i]);
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw std::runtime_error("csv line " + std::to_string(n) + ": expected " +
                               std::to_string(t.header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw std::runtime_error("csv: empty document");
  return t;
}

SweepSpec parse_sweep(const std::string& text, const std::filesystem::path& base_dir) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail("json", std::string("syntax error at line ") + std::to_string(line_of(text, e.byte - 1)) +
                     ": " + e.what());
  }
  if (!doc.is_object()) fail("sweep", "top level must be a JSON object");
  SweepSpec spec;
  bool has_schema = false;
  bool has_base = false;
  for (const auto& [key, v] : doc.items()) {
    if (key == "schema") {
      if (get_string(v, key) != kSweepSchema) {
        fail(key, "unsupported schema, expected " + std::string(kSweepSchema));
      }
      has_schema = true;
    } else if (key == "base") {
      if (!v.is_object()) fail(key, "expected a config object");
      spec.base = v;
      has_base = true;
    } else if (key == "base_config") {
      std::filesystem::path p = get_string(v, key);
      if (p.is_relative()) p = base_dir / p;
      try {
        spec.base = Json::parse(read_file(p));
      } catch (const std::exception& e) {
        fail(key, e.what());
      }
      has_base = true;
    } else if (key == "axes") {
      if (!v.is_array()) fail(key, "expected an array");
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string f = "axes[" + std::to_string(i) + "]";
        const Json& a = v[i];
        if (!a.is_object() || !a.contains("param") || !a.contains("values")) {
          fail(f, "expected {\"param\": ..., \"values\": [...]}");
        }
        SweepAxis axis;
        axis.param = get_string(a.at("param"), f + ".param");
        if (!a.at("values").is_array() || a.at("values").empty()) {
          fail(f + ".values", "expected a non-empty array");
        }
        for (const auto& x : a.at("values")) axis.values.push_back(x);
        for (const auto& [ak, av] : a.items()) {
          if (ak != "param" && ak != "values") fail(f + "." + ak, "unknown field");
        }
        spec.axes.push_back(std::move(axis));
      }
    } else if (key == "seeds") {
      if (v.is_array()) {
        for (const auto& s : v) {
          if (!s.is_number_unsigned()) fail(key, "seeds must be non-negative integers");
          spec.seeds.push_back(s.get<std::uint64_t>());
        }
      } else if (v.is_object()) {
        std::uint64_t start = 1;
        std::int64_t count = 0;
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "start") {
            if (!sv.is_number_unsigned()) fail("seeds.start", "expected a non-negative integer");
            start = sv.get<std::uint64_t>();
          } else if (sk == "count") {
            count = get_int(sv, "seeds.count");
          } else {
            fail("seeds." + sk, "unknown field");
          }
        }
        if (count < 1 || count > 100000) fail("seeds.count", "must be in [1, 100000]");
        for (std::int64_t i = 0; i < count; ++i) spec.seeds.push_back(start + i);
      } else {
        fail(key, "expected an array or {\"start\", \"count\"}");
      }
    } else if (key == "max_runs") {
      const std::int64_t m = get_int(v, key);
      if (m < 1) fail(key, "must be >= 1");
      spec.max_runs = static_cast<std::size_t>(m);
    } else {
      fail(key, "unknown field");
    }
  }
  if (!has_schema) fail("schema", std::string("required (\"") + kSweepSchema + "\")");
  if (!has_base) spec.base = Json{{"schema", kConfigSchema}};
  if (spec.seeds.empty()) {
    spec.seeds.push_back(spec.base.contains("seed") && spec.base["seed"].is_number_unsigned()
                             ? spec.base["seed"].get<std::uint64_t>()
                             : 1);
  }
  std::set<std::uint64_t> distinct(spec.seeds.begin(), spec.seeds.end());
  if (distinct.size() != spec.seeds.size()) fail("seeds", "duplicate seed");
  return spec;
}

namespace {

void set_path(Json& doc, const std::string& path, const Json& value) {
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) fail("axes", "malformed parameter path '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    Json& child = (*node)[part];
    if (child.is_null()) child = Json::object();
    if (!child.is_object()) fail("axes", "parameter path '" + path + "' crosses a non-object");
    node = &child;
    start = dot + 1;
  }
}

std::string label_of(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return format_number(v.get<double>());
  return v.dump();
}

const std::set<std::string>& known_params() {
  static const std::set<std::string> keys{
      "seed",   "steps",  "L_in",  "L_out",  "v_max",         "d_min",
      "w_prog", "w_wait", "w_safe", "c_col", "rho",           "T",
      "gamma",  "k_max",  "level_mix", "arrival", "h",        "lambda",
      "route_probs", "p_rand", "emergency_prob", "emergency_order_priority",
      "safety_filter"};
  return keys;
}

}  // namespace

std::vector<SweepPoint> expand_sweep(const SweepSpec& spec) {
  std::size_t total = spec.seeds.size();
  for (const auto& axis : spec.axes) {
    const std::string root = axis.param.substr(0, axis.param.find('.'));
    if (!known_params().contains(root) || root == "seed") {
      fail("axes", "parameter '" + axis.param + "' does not name a sweepable config field");
    }
    total *= axis.values.size();
    if (total > spec.max_runs) {
      fail("axes", "sweep expands to more than " + std::to_string(spec.max_runs) + " runs");
    }
  }
  std::size_t points = 1;
  for (const auto& axis : spec.axes) points *= axis.values.size();
  std::vector<SweepPoint> out;
  out.reserve(points);
  std::vector<std::size_t> digit(spec.axes.size(), 0);
  for (std::size_t p = 0; p < points; ++p) {
    std::size_t rem = p;
    for (std::size_t a = spec.axes.size(); a-- > 0;) {
      digit[a] = rem % spec.axes[a].values.size();
      rem /= spec.axes[a].values.size();
    }
    Json doc = spec.base;
    SweepPoint pt;
    for (std::size_t a = 0; a < spec.axes.size(); ++a) {
      const Json& v = spec.axes[a].values[digit[a]];
      set_path(doc, spec.axes[a].param, v);
      pt.labels.push_back(label_of(v));
    }
    try {
      pt.config = config_from_json(doc);
    } catch (const ConfigError& e) {
      std::string where;
      for (std::size_t a = 0; a < spec.axes.size(); ++a) {
        where += (a ? ", " : "") + spec.axes[a].param + "=" + pt.labels[a];
      }
      throw ConfigError(e.field(), std::string(e.what()).substr(e.field().size() + 2) +
                                       (where.empty() ? "" : " at sweep point " + where));
    }
    out.push_back(std::move(pt));
  }
  return out;
}

namespace {

double parse_double(const std::string& s, bool& ok) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  ok = res.ec == std::errc{} && res.ptr == s.data() + s.size();
  return v;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << (std::abs(v) < 0.5 * std::pow(10.0, -digits) ? 0.0 : v);
  return os.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct Stat {
  double sum = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;
  void add(double v) {
    lo = n == 0 ? v : std::min(lo, v);
    hi = n == 0 ? v : std::max(hi, v);
    sum += v;
    ++n;
  }
  double mean() const { return sum / n; }
};

// Round step for about `target` ticks over [lo, hi].
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

bool numeric_less(const std::string& a, const std::string& b) {
  bool oa = false;
  bool ob = false;
  const double x = parse_double(a, oa);
  const double y = parse_double(b, ob);
  if (oa && ob && x != y) return x < y;
  if (oa != ob) return oa;
  return a < b;
}

}  // namespace

std::string render_plot(const CsvTable& table, const PlotRequest& req) {
  const auto xc = table.column(req.x);
  if (!xc) fail(req.x, "unknown column");
  const auto yc = table.column(req.y);
  if (!yc) fail(req.y, "unknown column");
  std::optional<std::size_t> gc;
  if (!req.group_by.empty()) {
    gc = table.column(req.group_by);
    if (!gc) fail(req.group_by, "unknown column");
  }
  const auto kind = table.column("kind");

  // group -> x -> stat, groups in numeric-aware order
  std::map<std::string, std::map<double, Stat>, decltype(&numeric_less)> series(&numeric_less);
  for (const auto& row : table.rows) {
    if (kind && row[*kind] != "run") continue;
    bool okx = false;
    bool oky = false;
    const double x = parse_double(row[*xc], okx);
    const double y = parse_double(row[*yc], oky);
    if (!okx) fail(req.x, "non-numeric value '" + row[*xc] + "'");
    if (!oky) continue;  // absent metric
    series[gc ? row[*gc] : std::string()][x].add(y);
  }

  const double W = 720;
  const double H = 440;
  const double left = 70;
  const double right = req.group_by.empty() ? 20 : 140;
  const double top = 40;
  const double bottom = 55;
  const double pw = W - left - right;
  const double ph = H - top - bottom;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& [g, pts] : series) {
    for (const auto& [x, st] : pts) {
      if (!any) {
        xmin = xmax = x;
        ymin = st.lo;
        ymax = st.hi;
        any = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, st.lo);
      ymax = std::max(ymax, st.hi);
    }
  }
  if (xmax == xmin) {
    xmin -= 1;
    xmax += 1;
  }
  if (ymax == ymin) {
    ymin -= 1;
    ymax += 1;
  }
  const double ystep = nice_step(ymax - ymin, 5);
  ymin = std::floor(ymin / ystep) * ystep;
  ymax = std::ceil(ymax / ystep) * ystep;
  const double xstep = nice_step(xmax - xmin, 6);

  const auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  const auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W
     << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H
     << "\" fill=\"white\"/>\n";
  const std::string title = req.title.empty() ? req.y + " vs " + req.x : req.title;
  os << "<text x=\"" << fixed(W / 2, 1) << "\" y=\"22\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (double y = ymin; y <= ymax + ystep * 1e-9; y += ystep) {
    os << "<line x1=\"" << fixed(left, 2) << "\" y1=\"" << fixed(sy(y), 2) << "\" x2=\""
       << fixed(left + pw, 2) << "\" y2=\"" << fixed(sy(y), 2)
       << "\" stroke=\"#e5e5e5\"/>\n";
    os << "<text x=\"" << fixed(left - 6, 2) << "\" y=\"" << fixed(sy(y) + 4, 2)
       << "\" text-anchor=\"end\">" << format_number(std::round(y / ystep) * ystep) << "</text>\n";
  }
  for (double x = std::ceil(xmin / xstep) * xstep; x <= xmax + xstep * 1e-9; x += xstep) {
    os << "<line x1=\"" << fixed(sx(x), 2) << "\" y1=\"" << fixed(top + ph, 2) << "\" x2=\""
       << fixed(sx(x), 2) << "\" y2=\"" << fixed(top + ph + 5, 2) << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << fixed(sx(x), 2) << "\" y=\"" << fixed(top + ph + 18, 2)
       << "\" text-anchor=\"middle\">" << format_number(std::round(x / xstep) * xstep)
       << "</text>\n";
  }
  os << "</g>\n";
  os << "<rect x=\"" << fixed(left, 2) << "\" y=\"" << fixed(top, 2) << "\" width=\""
     << fixed(pw, 2) << "\" height=\"" << fixed(ph, 2)
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  os << "<text x=\"" << fixed(left + pw / 2, 2) << "\" y=\"" << fixed(H - 12, 2)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << xml_escape(req.x) << "</text>\n";
  os << "<text transform=\"translate(16 " << fixed(top + ph / 2, 2)
     << ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << xml_escape(req.y) << "</text>\n";

  int si = 0;
  for (const auto& [g, pts] : series) {
    const char* color = palette[si % 8];
    os << "<g stroke=\"" << color << "\" fill=\"" << color << "\">\n";
    if (pts.size() > 1) {
      os << "<polyline fill=\"none\" stroke-width=\"2\" points=\"";
      bool first = true;
      for (const auto& [x, st] : pts) {
        os << (first ? "" : " ") << fixed(sx(x), 2) << ',' << fixed(sy(st.mean()), 2);
        first = false;
      }
      os << "\"/>\n";
    }
    for (const auto& [x, st] : pts) {
      if (st.hi > st.lo) {
        os << "<line x1=\"" << fixed(sx(x), 2) << "\" y1=\"" << fixed(sy(st.lo), 2)
           << "\" x2=\"" << fixed(sx(x), 2) << "\" y2=\"" << fixed(sy(st.hi), 2)
           << "\" stroke-width=\"1\"/>\n";
        for (double yv : {st.lo, st.hi}) {
          os << "<line x1=\"" << fixed(sx(x) - 4, 2) << "\" y1=\"" << fixed(sy(yv), 2)
             << "\" x2=\"" << fixed(sx(x) + 4, 2) << "\" y2=\"" << fixed(sy(yv), 2)
             << "\" stroke-width=\"1\"/>\n";
        }
      }
      os << "<circle cx=\"" << fixed(sx(x), 2) << "\" cy=\"" << fixed(sy(st.mean()), 2)
         << "\" r=\"3.5\"/>\n";
    }
    os << "</g>\n";
    if (gc) {
      const double ly = top + 10 + 18 * si;
      os << "<line x1=\"" << fixed(left + pw + 14, 2) << "\" y1=\"" << fixed(ly, 2)
         << "\" x2=\"" << fixed(left + pw + 34, 2) << "\" y2=\"" << fixed(ly, 2)
         << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << fixed(left + pw + 40, 2) << "\" y=\"" << fixed(ly + 4, 2)
         << "\" font-family=\"sans-serif\" font-size=\"11\">"
         << xml_escape(req.group_by + "=" + g) << "</text>\n";
    }
    ++si;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace crossgame
