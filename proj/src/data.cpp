#include "emos/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace emos {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void fail_at(const std::string& path, std::size_t line,
                          const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

// Splits a comma-separated line into trimmed views over the line buffer.
void split_line(const std::string& line, std::vector<std::string_view>& out) {
  out.clear();
  std::string_view rest(line);
  if (!rest.empty() && rest.back() == '\r') rest.remove_suffix(1);
  while (true) {
    const std::size_t comma = rest.find(',');
    std::string_view field = rest.substr(0, comma);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t'))
      field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t'))
      field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
}

double parse_double_field(std::string_view s, const std::string& path,
                          std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail_at(path, line, "bad number '" + std::string(s) + "'");
  return v;
}

long parse_int_field(std::string_view s, const std::string& path, std::size_t line) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail_at(path, line, "bad integer '" + std::string(s) + "'");
  return v;
}

Date parse_date_field(std::string_view s, const std::string& path, std::size_t line) {
  try {
    return Date::parse(s);
  } catch (const std::exception& e) {
    fail_at(path, line, e.what());
  }
}

void expect_header(const std::vector<std::string_view>& fields,
                   std::initializer_list<const char*> want, const std::string& path,
                   std::size_t line) {
  bool ok = fields.size() == want.size();
  if (ok) {
    std::size_t i = 0;
    for (const char* w : want)
      if (fields[i++] != w) ok = false;
  }
  if (!ok) {
    std::string msg = "unexpected header; want";
    for (const char* w : want) msg += std::string(" ") + w + ",";
    msg.pop_back();
    fail_at(path, line, msg);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

ForecastTable load_forecasts(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::vector<std::string_view> f;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) fail_at(path, 1, "empty file");
  split_line(line, f);
  expect_header(f, {"valid_time", "point_id", "member", "value"}, path, 1);

  ForecastTable t;
  std::unordered_map<std::string, std::size_t> seen;       // (time,point,member)
  std::unordered_map<std::string, int> group_count;        // (time,point)
  std::string key;
  int max_member = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    split_line(line, f);
    if (f.size() != 4) fail_at(path, line_no, "expected 4 fields");
    ForecastRecord r;
    r.valid_time = parse_date_field(f[0], path, line_no);
    r.point_id = std::string(f[1]);
    if (r.point_id.empty()) fail_at(path, line_no, "empty point_id");
    const long member = parse_int_field(f[2], path, line_no);
    if (member < 1) fail_at(path, line_no, "member index must be >= 1");
    r.member = static_cast<int>(member);
    r.value = parse_double_field(f[3], path, line_no);
    if (!(r.value >= 0.0)) fail_at(path, line_no, "negative precipitation amount");

    key = std::to_string(r.valid_time.days_since_epoch());
    key += '|';
    key += r.point_id;
    const std::string group = key;
    key += '|';
    key += std::to_string(r.member);
    const auto [it, inserted] = seen.emplace(key, line_no);
    if (!inserted)
      fail_at(path, line_no,
              "duplicate (valid_time, point_id, member); first seen at line " +
                  std::to_string(it->second));
    ++group_count[group];
    max_member = std::max(max_member, r.member);
    t.records.push_back(std::move(r));
  }
  if (t.records.empty()) fail_at(path, line_no, "no forecast rows");
  t.n_members = max_member;
  for (const auto& [group, count] : group_count)
    if (count != max_member)
      throw std::runtime_error(path + ": inconsistent member count for " + group +
                               " (" + std::to_string(count) + " of " +
                               std::to_string(max_member) + ")");
  return t;
}

ObservationTable load_observations(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::vector<std::string_view> f;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) fail_at(path, 1, "empty file");
  split_line(line, f);
  expect_header(f, {"valid_time", "station_id", "value"}, path, 1);

  ObservationTable t;
  std::unordered_map<std::string, std::size_t> seen;
  std::string key;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    split_line(line, f);
    if (f.size() != 3) fail_at(path, line_no, "expected 3 fields");
    ObservationRecord r;
    r.valid_time = parse_date_field(f[0], path, line_no);
    r.station_id = std::string(f[1]);
    if (r.station_id.empty()) fail_at(path, line_no, "empty station_id");
    r.value = parse_double_field(f[2], path, line_no);
    if (!(r.value >= 0.0)) fail_at(path, line_no, "negative precipitation amount");
    key = std::to_string(r.valid_time.days_since_epoch());
    key += '|';
    key += r.station_id;
    const auto [it, inserted] = seen.emplace(key, line_no);
    if (!inserted)
      fail_at(path, line_no, "duplicate (valid_time, station_id); first seen at line " +
                                 std::to_string(it->second));
    t.records.push_back(std::move(r));
  }
  return t;
}

std::vector<Station> load_stations(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::vector<std::string_view> f;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) fail_at(path, 1, "empty file");
  split_line(line, f);
  expect_header(f, {"station_id", "coord_a", "coord_b"}, path, 1);

  std::vector<Station> out;
  std::unordered_map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    split_line(line, f);
    if (f.size() != 3) fail_at(path, line_no, "expected 3 fields");
    Station s;
    s.id = std::string(f[0]);
    if (s.id.empty()) fail_at(path, line_no, "empty station_id");
    s.coord_a = parse_double_field(f[1], path, line_no);
    s.coord_b = parse_double_field(f[2], path, line_no);
    const auto [it, inserted] = seen.emplace(s.id, line_no);
    if (!inserted)
      fail_at(path, line_no,
              "duplicate station_id; first seen at line " + std::to_string(it->second));
    out.push_back(std::move(s));
  }
  if (out.empty()) fail_at(path, line_no, "no stations");
  return out;
}

Grid load_grid(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::vector<std::string_view> f;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) fail_at(path, 1, "empty file");
  split_line(line, f);
  if (f.size() != 2 || f[0] != "coordsys")
    fail_at(path, 1, "first line must declare the coordinate system: coordsys,<tag>");
  Grid g;
  if (f[1] == "lonlat") {
    g.coord_system = CoordSystem::LonLat;
  } else if (f[1] == "xy_km") {
    g.coord_system = CoordSystem::XyKm;
  } else {
    fail_at(path, 1, "unknown coordinate system '" + std::string(f[1]) +
                         "' (want lonlat or xy_km)");
  }

  if (!std::getline(in, line)) fail_at(path, 2, "missing column header");
  ++line_no;
  split_line(line, f);
  if (f.size() == 4 && f[3] == "climo_factor") {
    expect_header(f, {"point_id", "coord_a", "coord_b", "climo_factor"}, path, 2);
    g.has_climo = true;
  } else {
    expect_header(f, {"point_id", "coord_a", "coord_b"}, path, 2);
  }

  std::unordered_map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    split_line(line, f);
    if (f.size() != (g.has_climo ? 4u : 3u))
      fail_at(path, line_no, "wrong field count");
    GridPoint p;
    p.id = std::string(f[0]);
    if (p.id.empty()) fail_at(path, line_no, "empty point_id");
    p.coord_a = parse_double_field(f[1], path, line_no);
    p.coord_b = parse_double_field(f[2], path, line_no);
    if (g.has_climo) {
      p.climo_factor = parse_double_field(f[3], path, line_no);
      if (!(p.climo_factor > 0.0))
        fail_at(path, line_no, "climo_factor must be > 0");
    }
    const auto [it, inserted] = seen.emplace(p.id, line_no);
    if (!inserted)
      fail_at(path, line_no,
              "duplicate point_id; first seen at line " + std::to_string(it->second));
    g.points.push_back(std::move(p));
  }
  if (g.points.empty()) fail_at(path, line_no, "no gridpoints");
  return g;
}

void write_forecasts(const std::string& path, const ForecastTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "valid_time,point_id,member,value\n";
  for (const ForecastRecord& r : t.records)
    out << r.valid_time.to_string() << ',' << r.point_id << ',' << r.member << ','
        << format_double(r.value) << '\n';
}

void write_observations(const std::string& path, const ObservationTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "valid_time,station_id,value\n";
  for (const ObservationRecord& r : t.records)
    out << r.valid_time.to_string() << ',' << r.station_id << ','
        << format_double(r.value) << '\n';
}

void write_stations(const std::string& path, std::span<const Station> stations) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "station_id,coord_a,coord_b\n";
  for (const Station& s : stations)
    out << s.id << ',' << format_double(s.coord_a) << ',' << format_double(s.coord_b)
        << '\n';
}

void write_grid(const std::string& path, const Grid& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "coordsys," << (grid.coord_system == CoordSystem::LonLat ? "lonlat" : "xy_km")
      << '\n';
  out << (grid.has_climo ? "point_id,coord_a,coord_b,climo_factor"
                         : "point_id,coord_a,coord_b")
      << '\n';
  for (const GridPoint& p : grid.points) {
    out << p.id << ',' << format_double(p.coord_a) << ',' << format_double(p.coord_b);
    if (grid.has_climo) out << ',' << format_double(p.climo_factor);
    out << '\n';
  }
}

void write_coefficients(const std::string& path, std::span<const DayFit> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "valid_day,alpha0,alpha1,alpha2,beta0,beta1,beta2,xi,objective_value,"
         "n_pairs\n";
  for (const DayFit& d : rows) {
    const EmosCoefficients& c = d.coefficients;
    out << c.valid_day.to_string() << ',' << format_double(c.alpha0) << ','
        << format_double(c.alpha1) << ',' << format_double(c.alpha2) << ','
        << format_double(c.beta0) << ',' << format_double(c.beta1) << ','
        << (c.beta2 ? format_double(*c.beta2) : std::string()) << ','
        << format_double(c.xi) << ','
        << (std::isnan(d.objective_value) ? std::string()
                                          : format_double(d.objective_value))
        << ',' << d.n_pairs << '\n';
  }
}

std::vector<CoefficientRow> load_coefficients(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::vector<std::string_view> f;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) fail_at(path, 1, "empty file");
  split_line(line, f);
  expect_header(f,
                {"valid_day", "alpha0", "alpha1", "alpha2", "beta0", "beta1", "beta2",
                 "xi", "objective_value", "n_pairs"},
                path, 1);
  std::vector<CoefficientRow> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    split_line(line, f);
    if (f.size() != 10) fail_at(path, line_no, "expected 10 fields");
    CoefficientRow r;
    EmosCoefficients& c = r.coefficients;
    c.valid_day = parse_date_field(f[0], path, line_no);
    c.alpha0 = parse_double_field(f[1], path, line_no);
    c.alpha1 = parse_double_field(f[2], path, line_no);
    c.alpha2 = parse_double_field(f[3], path, line_no);
    c.beta0 = parse_double_field(f[4], path, line_no);
    c.beta1 = parse_double_field(f[5], path, line_no);
    if (!f[6].empty()) c.beta2 = parse_double_field(f[6], path, line_no);
    c.xi = parse_double_field(f[7], path, line_no);
    r.objective_value = f[8].empty() ? kNaN : parse_double_field(f[8], path, line_no);
    r.n_pairs = f[9].empty()
                    ? 0
                    : static_cast<std::size_t>(parse_int_field(f[9], path, line_no));
    if (!out.empty() && c.valid_day <= out.back().coefficients.valid_day)
      fail_at(path, line_no, "valid_day not strictly increasing");
    out.push_back(std::move(r));
  }
  if (out.empty()) fail_at(path, line_no, "no coefficient rows");
  return out;
}

StationAssignment associate_stations(std::span<const Station> stations,
                                     const Grid& grid, double cutoff_km) {
  if (!(cutoff_km > 0.0))
    throw std::invalid_argument("associate_stations: cutoff must be > 0");
  if (grid.points.empty())
    throw std::invalid_argument("associate_stations: empty grid");
  StationAssignment out;
  out.grid_index.resize(stations.size(), -1);
  out.dist_km.resize(stations.size(), kNaN);
  for (std::size_t i = 0; i < stations.size(); ++i) {
    const Station& s = stations[i];
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < grid.points.size(); ++j) {
      const GridPoint& p = grid.points[j];
      const double d =
          distance_km(grid.coord_system, s.coord_a, s.coord_b, p.coord_a, p.coord_b);
      if (d < best_d ||
          (d == best_d && best >= 0 && p.id < grid.points[best].id)) {
        best = static_cast<int>(j);
        best_d = d;
      }
    }
    if (best_d > cutoff_km) {
      out.warnings.push_back("station " + s.id + " excluded: nearest gridpoint " +
                             grid.points[best].id + " at " + format_double(best_d) +
                             " km exceeds the " + format_double(cutoff_km) +
                             " km cutoff");
      continue;
    }
    out.grid_index[i] = best;
    out.dist_km[i] = best_d;
  }
  return out;
}

std::vector<double> parse_threshold_list(const std::string& text) {
  std::vector<double> out;
  std::string_view rest(text);
  while (!rest.empty()) {
    const std::size_t comma = rest.find(',');
    std::string_view field = rest.substr(0, comma);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
      throw std::runtime_error("bad threshold '" + std::string(field) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (out.empty()) throw std::runtime_error("empty threshold list");
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i] > out[i - 1]))
      throw std::runtime_error("thresholds must be strictly ascending");
  return out;
}

void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
  auto as_int = [&](int min_v) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size() || v < min_v)
      throw std::runtime_error("bad value '" + value + "' for " + key);
    return static_cast<int>(v);
  };
  auto as_double = [&]() {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
      throw std::runtime_error("bad value '" + value + "' for " + key);
    return v;
  };
  auto as_bool = [&]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::runtime_error("bad value '" + value + "' for " + key);
  };

  if (key == "window_days") {
    cfg.window_days = as_int(1);
  } else if (key == "radius_km") {
    cfg.radius_km = as_double();
    if (cfg.radius_km < 0.0) throw std::runtime_error("radius_km must be >= 0");
  } else if (key == "use_climo") {
    cfg.use_climo = as_bool();
  } else if (key == "trace_threshold") {
    cfg.trace_threshold = as_double();
    if (cfg.trace_threshold < 0.0)
      throw std::runtime_error("trace_threshold must be >= 0");
  } else if (key == "thresholds") {
    cfg.thresholds = parse_threshold_list(value);
  } else if (key == "bootstrap_replicates") {
    cfg.bootstrap_replicates = as_int(1);
  } else if (key == "bootstrap_level") {
    cfg.bootstrap_level = as_double();
    if (!(cfg.bootstrap_level > 0.0 && cfg.bootstrap_level <= 100.0))
      throw std::runtime_error("bootstrap_level must lie in (0,100]");
  } else if (key == "seed") {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
      throw std::runtime_error("bad value '" + value + "' for seed");
    cfg.seed = v;
  } else if (key == "first_day_iterations") {
    cfg.first_day_iterations = as_int(0);
  } else if (key == "daily_iterations") {
    cfg.daily_iterations = as_int(0);
  } else if (key == "min_window_days") {
    cfg.min_window_days = as_int(1);
  } else if (key == "station_cutoff_km") {
    cfg.station_cutoff_km = as_double();
    if (!(cfg.station_cutoff_km > 0.0))
      throw std::runtime_error("station_cutoff_km must be > 0");
  } else if (key == "threads") {
    cfg.threads = as_int(0);
  } else {
    throw std::runtime_error("unknown config key '" + key + "'");
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    if (line[b] == '#') continue;
    const std::size_t eq = line.find('=', b);
    if (eq == std::string::npos) fail_at(path, line_no, "expected key=value");
    auto trim = [](std::string s) {
      const std::size_t from = s.find_first_not_of(" \t");
      const std::size_t to = s.find_last_not_of(" \t");
      return from == std::string::npos ? std::string() : s.substr(from, to - from + 1);
    };
    const std::string key = trim(line.substr(b, eq - b));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_config_entry(cfg, key, value);
    } catch (const std::exception& e) {
      fail_at(path, line_no, e.what());
    }
  }
  return cfg;
}

}  // namespace emos
