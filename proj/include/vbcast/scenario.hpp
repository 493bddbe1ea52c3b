#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "vbcast/error.hpp"
#include "vbcast/rng.hpp"

namespace vbcast {

struct StationPosition {
  std::int64_t id = 0;
  double x_m = 0.0;
  std::optional<int> lane;
};

/// A static one-dimensional scenario with periodic boundary.
///
/// Stations that share a closed neighbourhood (same set of stations in range, themselves
/// included) form one analytical station ("group"). Topological distance is counted in group
/// hops along the ring, so co-located vehicles on different lanes are at distance zero.
struct ScenarioSnapshot {
  std::vector<StationPosition> positions;
  double loop_length_m = 0.0;
  double sensing_range_m = 0.0;
  std::vector<std::vector<std::uint32_t>> neighbor_sets;  // sorted, both sides, self excluded

  std::vector<std::uint32_t> group_of;  // station -> group index, groups ordered by position
  std::size_t group_count = 0;

  double r_one_side_vehicles = 0.0;  // mean one-side count of individual vehicles
  double r_one_side_mean = 0.0;      // mean one-side count of merged stations
  int effective_r = 0;

  std::size_t n_stations() const { return positions.size(); }

  /// Hops between the groups of stations a and b along the ring.
  int topological_distance(std::size_t a, std::size_t b) const {
    const auto ga = static_cast<std::int64_t>(group_of[a]);
    const auto gb = static_cast<std::int64_t>(group_of[b]);
    const auto g = static_cast<std::int64_t>(group_count);
    std::int64_t d = ga > gb ? ga - gb : gb - ga;
    return static_cast<int>(std::min(d, g - d));
  }
};

/// Smallest integer >= mean, with a 1e-9 guard so that 16.0000000001 from summation noise
/// stays 16.
inline int effective_station_count(double mean_one_side) {
  return static_cast<int>(std::ceil(mean_one_side - 1e-9));
}

inline int effective_station_count(const ScenarioSnapshot& s) {
  return effective_station_count(s.r_one_side_mean);
}

namespace detail {

inline double ring_distance(double a, double b, double loop) {
  double d = std::fabs(a - b);
  if (loop > 0.0) {
    d = std::fmod(d, loop);
    d = std::min(d, loop - d);
  }
  return d;
}

struct DisjointSets {
  std::vector<std::uint32_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Fills neighbour sets, co-location groups and the one-side statistics from positions.
/// Range uses the x coordinate only; lanes never affect it. `merge_tolerance_m` > 0
/// additionally merges vehicles closer than that along x.
inline void finalize_snapshot(ScenarioSnapshot& s, double merge_tolerance_m = 0.0) {
  const std::size_t n = s.positions.size();
  require(n >= 2, ErrorKind::Scenario, "a scenario needs at least two stations");
  require(s.sensing_range_m > 0.0, ErrorKind::Scenario, "sensing range must be positive");
  require(s.loop_length_m > 0.0, ErrorKind::Scenario, "loop length must be positive");
  require(s.sensing_range_m < s.loop_length_m / 2.0, ErrorKind::Scenario,
          "sensing range must be shorter than half the loop");

  // Tolerance absorbs representation error of positions built as k * spacing.
  const double tol = 1e-9 * std::max(1.0, s.sensing_range_m);
  s.neighbor_sets.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (detail::ring_distance(s.positions[i].x_m, s.positions[j].x_m, s.loop_length_m) <=
          s.sensing_range_m + tol) {
        s.neighbor_sets[i].push_back(static_cast<std::uint32_t>(j));
        s.neighbor_sets[j].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
  for (auto& ns : s.neighbor_sets) std::sort(ns.begin(), ns.end());

  // Group by identical closed neighbourhood.
  detail::DisjointSets sets(n);
  std::map<std::vector<std::uint32_t>, std::uint32_t> seen;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> closed = s.neighbor_sets[i];
    closed.insert(std::lower_bound(closed.begin(), closed.end(), static_cast<std::uint32_t>(i)),
                  static_cast<std::uint32_t>(i));
    auto [it, inserted] = seen.emplace(std::move(closed), static_cast<std::uint32_t>(i));
    if (!inserted) sets.unite(it->second, static_cast<std::uint32_t>(i));
  }
  if (merge_tolerance_m > 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::uint32_t j : s.neighbor_sets[i])
        if (j > i && detail::ring_distance(s.positions[i].x_m, s.positions[j].x_m, s.loop_length_m) <=
                         merge_tolerance_m)
          sets.unite(static_cast<std::uint32_t>(i), j);
  }

  // Order groups by the position of their representative.
  std::vector<std::uint32_t> roots;
  for (std::size_t i = 0; i < n; ++i)
    if (sets.find(static_cast<std::uint32_t>(i)) == i) roots.push_back(static_cast<std::uint32_t>(i));
  std::sort(roots.begin(), roots.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double xa = std::fmod(s.positions[a].x_m, s.loop_length_m);
    const double xb = std::fmod(s.positions[b].x_m, s.loop_length_m);
    return xa != xb ? xa < xb : a < b;
  });
  std::vector<std::uint32_t> rank_of_root(n, 0);
  for (std::size_t k = 0; k < roots.size(); ++k) rank_of_root[roots[k]] = static_cast<std::uint32_t>(k);
  s.group_count = roots.size();
  s.group_of.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) s.group_of[i] = rank_of_root[sets.find(static_cast<std::uint32_t>(i))];

  // One-side means: half of the two-sided count.
  double vehicles = 0.0;
  for (const auto& ns : s.neighbor_sets) vehicles += static_cast<double>(ns.size());
  s.r_one_side_vehicles = vehicles / static_cast<double>(n) / 2.0;

  std::vector<std::set<std::uint32_t>> group_neighbors(s.group_count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t j : s.neighbor_sets[i])
      if (s.group_of[j] != s.group_of[i]) group_neighbors[s.group_of[i]].insert(s.group_of[j]);
  double stations = 0.0;
  for (const auto& g : group_neighbors) stations += static_cast<double>(g.size());
  s.r_one_side_mean = stations / static_cast<double>(s.group_count) / 2.0;
  s.effective_r = effective_station_count(s.r_one_side_mean);
}

/// Equidistant ring of `n_stations` with spacing 1/beta. Every station hears exactly
/// floor(r * beta) stations on each side.
inline ScenarioSnapshot build_loop_topology(std::size_t n_stations, double beta, double r) {
  require(n_stations >= 2, ErrorKind::Scenario, "need at least two stations");
  require(beta > 0.0 && std::isfinite(beta), ErrorKind::Scenario, "station density must be positive");
  require(r > 0.0, ErrorKind::Scenario, "sensing range must be positive");
  const double spacing = 1.0 / beta;
  const double loop = static_cast<double>(n_stations) * spacing;
  require(r < loop / 2.0, ErrorKind::Scenario,
          "sensing range " + std::to_string(r) + " m too large for a loop of " + std::to_string(loop) + " m");

  ScenarioSnapshot s;
  s.loop_length_m = loop;
  s.sensing_range_m = r;
  s.positions.reserve(n_stations);
  for (std::size_t i = 0; i < n_stations; ++i)
    s.positions.push_back({static_cast<std::int64_t>(i), static_cast<double>(i) * spacing, std::nullopt});

  // Ring neighbourhoods are computed directly by hop count; the generic O(n^2) pass is
  // unnecessary and would suffer from spacing round-off at the range boundary.
  const double tol = 1e-9 * std::max(1.0, r);
  int per_side = 0;
  while (static_cast<double>(per_side + 1) * spacing <= r + tol) ++per_side;
  require(static_cast<std::size_t>(2 * per_side) < n_stations, ErrorKind::Scenario,
          "neighbourhood wraps around the loop");

  s.neighbor_sets.assign(n_stations, {});
  for (std::size_t i = 0; i < n_stations; ++i) {
    auto& ns = s.neighbor_sets[i];
    for (int k = 1; k <= per_side; ++k) {
      ns.push_back(static_cast<std::uint32_t>((i + static_cast<std::size_t>(k)) % n_stations));
      ns.push_back(static_cast<std::uint32_t>((i + n_stations - static_cast<std::size_t>(k)) % n_stations));
    }
    std::sort(ns.begin(), ns.end());
  }
  s.group_count = n_stations;
  s.group_of.resize(n_stations);
  std::iota(s.group_of.begin(), s.group_of.end(), 0u);
  s.r_one_side_vehicles = per_side;
  s.r_one_side_mean = per_side;
  s.effective_r = per_side;
  return s;
}


/// Synthetic multi-lane ring: `n_clusters` lateral clusters spread evenly over a loop of
/// n_vehicles / beta metres, each jittered by up to `jitter` of the cluster spacing. Every
/// cluster holds 1..max_lanes vehicles at one x on distinct lanes; the surplus vehicles are
/// assigned to random clusters. The result mimics a frozen highway snapshot where vehicles
/// driving side by side become a single analytical station.
inline ScenarioSnapshot build_multilane_snapshot(std::size_t n_vehicles, double beta, double r,
                                                 std::size_t n_clusters, int max_lanes, std::uint64_t seed,
                                                 double jitter = 0.35) {
  require(n_clusters >= 2 && n_clusters <= n_vehicles, ErrorKind::Scenario,
          "cluster count must lie in [2, vehicles]");
  require(max_lanes >= 1 && static_cast<std::size_t>(max_lanes) * n_clusters >= n_vehicles,
          ErrorKind::Scenario, "not enough lanes to place every vehicle");
  require(beta > 0.0 && std::isfinite(beta), ErrorKind::Scenario, "vehicle density must be positive");
  require(jitter >= 0.0 && jitter < 0.5, ErrorKind::Scenario, "jitter must lie in [0, 0.5)");
  Rng rng(seed);
  ScenarioSnapshot s;
  s.loop_length_m = static_cast<double>(n_vehicles) / beta;
  s.sensing_range_m = r;
  const double spacing = s.loop_length_m / static_cast<double>(n_clusters);

  std::vector<int> size(n_clusters, 1);
  for (std::size_t extra = n_vehicles - n_clusters; extra > 0;) {
    const auto c = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_clusters) - 1));
    if (size[c] < max_lanes) {
      ++size[c];
      --extra;
    }
  }
  std::int64_t id = 0;
  for (std::size_t c = 0; c < n_clusters; ++c) {
    double x = (static_cast<double>(c) + jitter * (2.0 * rng.uniform() - 1.0)) * spacing;
    if (x < 0.0) x += s.loop_length_m;
    for (int lane = 0; lane < size[c]; ++lane) s.positions.push_back({id++, x, lane});
  }
  finalize_snapshot(s);
  return s;
}

/// Picks the cluster count whose merged one-side mean lands closest to `target_mean` from
/// below, so that the effective neighbourhood size is exactly ceil(target_mean).
inline ScenarioSnapshot calibrate_multilane_snapshot(std::size_t n_vehicles, double beta, double r,
                                                     double target_mean, int max_lanes, std::uint64_t seed) {
  const double loop = static_cast<double>(n_vehicles) / beta;
  auto lo = static_cast<std::size_t>(std::ceil(static_cast<double>(n_vehicles) / max_lanes));
  auto hi = n_vehicles;
  require(lo >= 2, ErrorKind::Scenario, "too few vehicles");
  // The one-side mean grows with the cluster count; bisect on it.
  const auto guess = static_cast<std::size_t>(target_mean * loop / r);
  lo = std::max(lo, guess > 40 ? guess - 40 : std::size_t{2});
  hi = std::min(hi, guess + 40);
  std::optional<ScenarioSnapshot> best;
  for (std::size_t c = lo; c <= hi; ++c) {
    ScenarioSnapshot s = build_multilane_snapshot(n_vehicles, beta, r, c, max_lanes, seed);
    if (s.r_one_side_mean <= target_mean + 1e-12 &&
        (!best || s.r_one_side_mean > best->r_one_side_mean))
      best = std::move(s);
  }
  require(best.has_value(), ErrorKind::Scenario, "no cluster count reaches the requested density");
  return *best;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view tok, double& out) {
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

template <class Int>
inline bool parse_int(std::string_view tok, Int& out) {
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

/// Parses the position snapshot text format:
///
///   # comment
///   loop_length_m=7272.7 sensing_range_m=184.6
///   <id> <x_meters> [<lane_index>]
inline ScenarioSnapshot parse_position_snapshot(std::istream& in, double merge_tolerance_m = 0.0) {
  ScenarioSnapshot s;
  bool have_header = false;
  std::unordered_set<std::int64_t> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = detail::split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    const std::string where = "line " + std::to_string(lineno);
    if (!have_header) {
      bool got_loop = false, got_range = false;
      for (auto t : toks) {
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) fail(ErrorKind::Parse, where + ": expected key=value header");
        const auto key = t.substr(0, eq);
        double v = 0.0;
        if (!detail::parse_double(t.substr(eq + 1), v)) fail(ErrorKind::Parse, where + ": bad number in header");
        if (key == "loop_length_m") {
          s.loop_length_m = v;
          got_loop = true;
        } else if (key == "sensing_range_m") {
          s.sensing_range_m = v;
          got_range = true;
        } else {
          fail(ErrorKind::Parse, where + ": unknown header key '" + std::string(key) + "'");
        }
      }
      if (!got_loop || !got_range)
        fail(ErrorKind::Parse, where + ": header needs loop_length_m and sensing_range_m");
      have_header = true;
      continue;
    }
    if (toks.size() < 2 || toks.size() > 3) fail(ErrorKind::Parse, where + ": expected 'id x_meters [lane_index]'");
    StationPosition p;
    if (!detail::parse_int(toks[0], p.id)) fail(ErrorKind::Parse, where + ": bad station id");
    if (!detail::parse_double(toks[1], p.x_m)) fail(ErrorKind::Parse, where + ": bad x coordinate");
    if (toks.size() == 3) {
      int lane = 0;
      if (!detail::parse_int(toks[2], lane)) fail(ErrorKind::Parse, where + ": bad lane index");
      p.lane = lane;
    }
    if (!ids.insert(p.id).second)
      fail(ErrorKind::Validation, where + ": duplicate station id " + std::to_string(p.id));
    if (p.x_m < 0.0 || p.x_m >= s.loop_length_m)
      fail(ErrorKind::Validation, where + ": x outside [0, loop_length_m)");
    s.positions.push_back(p);
  }
  if (!have_header) fail(ErrorKind::Parse, "missing header line");
  finalize_snapshot(s, merge_tolerance_m);
  return s;
}

inline ScenarioSnapshot load_position_snapshot(const std::string& path, double merge_tolerance_m = 0.0) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Parse, "cannot open " + path);
  return parse_position_snapshot(in, merge_tolerance_m);
}

/// Canonical text form: header, then one line per station in stored order, numbers in
/// shortest round-trip notation, no comments.
inline std::string serialize_position_snapshot(const ScenarioSnapshot& s) {
  std::ostringstream out;
  out << "loop_length_m=" << detail::format_double(s.loop_length_m)
      << " sensing_range_m=" << detail::format_double(s.sensing_range_m) << '\n';
  for (const auto& p : s.positions) {
    out << p.id << ' ' << detail::format_double(p.x_m);
    if (p.lane) out << ' ' << *p.lane;
    out << '\n';
  }
  return out.str();
}

inline void save_position_snapshot(const ScenarioSnapshot& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Config, "cannot write " + path);
  out << serialize_position_snapshot(s);
}

}  // namespace vbcast
