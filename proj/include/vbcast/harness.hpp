#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vbcast/cam.hpp"
#include "vbcast/config.hpp"
#include "vbcast/io.hpp"
#include "vbcast/model.hpp"
#include "vbcast/protocol_sim.hpp"
#include "vbcast/provider.hpp"
#include "vbcast/scenario.hpp"

namespace vbcast {

inline constexpr const char* kVersion = "0.1.0";

enum class TopologyKind { Loop, Multilane, File };

inline const char* to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::Loop: return "loop";
    case TopologyKind::Multilane: return "multilane";
    case TopologyKind::File: return "file";
  }
  return "loop";
}

/// Everything a command needs; defaults are the idealised loop at desk scale.
struct RunConfig {
  ProtocolConfig protocol;
  TrafficConfig traffic;
  std::optional<std::int64_t> payload_bytes;  // overrides frame_len_slots when set
  PhyMode phy_mode = PhyMode::Qpsk12;

  TopologyKind topology = TopologyKind::Loop;
  std::size_t n_stations = 800;
  double beta = 1.0 / 30.0;
  double sensing_range_m = 480.0;
  std::string snapshot_path;
  double merge_tolerance_m = 0.0;
  double multilane_target_mean = 15.98;
  int multilane_max_lanes = 3;
  std::uint64_t snapshot_seed = 7;

  std::uint64_t seed = 1;
  std::int64_t warmup_slots = 20'000;
  std::int64_t measure_slots = 400'000;
  std::size_t batches = 20;
  bool strict_80211 = false;
  bool auto_size = false;
  std::int64_t max_measure_slots = 3'200'000;
  double auto_size_target = 0.05;

  OracleControls oracle;
  double grid_min = 2e-5;
  double grid_max = 0.5;
  std::size_t grid_points = 22;
  std::vector<double> grid_extra = {0.225, 0.25, 0.275, 0.3, 0.325, 0.35, 0.375, 0.4, 0.45};
  std::string cache_dir;

  std::string sweep_parameter = "lambda_f";
  std::vector<double> sweep_values;
  std::vector<std::uint64_t> sweep_seeds;
  std::vector<std::string> engines = {"analytic", "protocol_sim"};

  std::string compare_profile = "auto";
  int compare_d_max = 0;  // 0: every distance
  double tolerance_scale = 1.0;

  std::size_t jobs = 0;  // 0: hardware concurrency
  bool fast = false;

  int frame_len() const {
    return payload_bytes ? frame_bytes_to_slots(*payload_bytes, phy_mode) : protocol.frame_len_slots;
  }
  ProtocolConfig effective_protocol() const {
    ProtocolConfig p = protocol;
    p.frame_len_slots = frame_len();
    return p;
  }
  bool has_engine(const std::string& e) const { return std::find(engines.begin(), engines.end(), e) != engines.end(); }

  void validate() const {
    effective_protocol().validate();
    traffic.validate();
    require(n_stations >= 2, ErrorKind::Config, "n_stations must be >= 2");
    require(beta > 0.0 && std::isfinite(beta), ErrorKind::Config, "beta must be positive");
    require(sensing_range_m > 0.0, ErrorKind::Config, "sensing_range_m must be positive");
    require(warmup_slots >= 0 && measure_slots > 0, ErrorKind::Config, "bad simulation length");
    require(batches >= 2, ErrorKind::Config, "batches must be >= 2");
    require(grid_min > 0.0 && grid_max > grid_min && grid_max < 1.0, ErrorKind::Config, "bad provider grid bounds");
    require(grid_points >= 2, ErrorKind::Config, "grid_points must be >= 2");
    require(!engines.empty(), ErrorKind::Config, "no engine selected");
    for (const auto& e : engines)
      require(e == "analytic" || e == "protocol_sim", ErrorKind::Config, "unknown engine '" + e + "'");
    require(tolerance_scale > 0.0, ErrorKind::Config, "tolerance_scale must be positive");
    for (std::size_t k = 1; k < sweep_values.size(); ++k)
      require(sweep_values[k] > sweep_values[k - 1], ErrorKind::Config, "sweep values must be strictly increasing");
    if (topology == TopologyKind::File)
      require(!snapshot_path.empty(), ErrorKind::Config, "topology 'file' needs topology.snapshot");
  }
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Overrides the fields present in `doc`. Unknown keys are configuration errors.
inline void apply_document(RunConfig& c, const ConfigDocument& doc) {
  auto count = [](std::int64_t v, const char* key) {
    require(v >= 0, ErrorKind::Config, std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.protocol.cw_min = static_cast<int>(doc.integer("protocol.cw_min", c.protocol.cw_min));
  c.protocol.frame_len_slots = static_cast<int>(doc.integer("protocol.frame_len_slots", c.protocol.frame_len_slots));
  c.protocol.slot_seconds = doc.number("protocol.slot_seconds", c.protocol.slot_seconds);
  if (doc.has("protocol.payload_bytes")) c.payload_bytes = doc.integer("protocol.payload_bytes", 0);
  if (doc.has("protocol.phy_mode")) c.phy_mode = parse_phy_mode(doc.string("protocol.phy_mode", ""));

  c.traffic.lambda_f = doc.number("traffic.lambda_f", c.traffic.lambda_f);
  if (doc.has("traffic.queue_policy")) c.traffic.queue_policy = parse_queue_policy(doc.string("traffic.queue_policy", ""));

  if (doc.has("topology.kind")) {
    const std::string k = doc.string("topology.kind", "");
    if (k == "loop") c.topology = TopologyKind::Loop;
    else if (k == "multilane") c.topology = TopologyKind::Multilane;
    else if (k == "file") c.topology = TopologyKind::File;
    else fail(ErrorKind::Config, "unknown topology kind '" + k + "'");
  }
  c.n_stations = count(doc.integer("topology.n_stations", static_cast<std::int64_t>(c.n_stations)), "n_stations");
  c.beta = doc.number("topology.beta", c.beta);
  c.sensing_range_m = doc.number("topology.sensing_range_m", c.sensing_range_m);
  if (doc.has("topology.r_neighbors")) {
    // Loop shorthand: exactly R stations per side.
    const auto r = doc.integer("topology.r_neighbors", 0);
    require(r >= 1, ErrorKind::Config, "r_neighbors must be >= 1");
    c.sensing_range_m = static_cast<double>(r) / c.beta;
  }
  c.snapshot_path = doc.string("topology.snapshot", c.snapshot_path);
  c.merge_tolerance_m = doc.number("topology.merge_tolerance_m", c.merge_tolerance_m);
  c.multilane_target_mean = doc.number("topology.target_mean", c.multilane_target_mean);
  c.multilane_max_lanes = static_cast<int>(doc.integer("topology.max_lanes", c.multilane_max_lanes));
  c.snapshot_seed = static_cast<std::uint64_t>(doc.integer("topology.snapshot_seed", static_cast<std::int64_t>(c.snapshot_seed)));

  c.seed = static_cast<std::uint64_t>(doc.integer("seed", static_cast<std::int64_t>(c.seed)));
  c.jobs = count(doc.integer("jobs", static_cast<std::int64_t>(c.jobs)), "jobs");
  c.warmup_slots = doc.integer("sim.warmup_slots", c.warmup_slots);
  c.measure_slots = doc.integer("sim.measure_slots", c.measure_slots);
  c.batches = count(doc.integer("sim.batches", static_cast<std::int64_t>(c.batches)), "sim.batches");
  c.strict_80211 = doc.boolean("sim.strict_80211", c.strict_80211);
  c.auto_size = doc.boolean("sim.auto_size", c.auto_size);
  c.max_measure_slots = doc.integer("sim.max_measure_slots", c.max_measure_slots);
  c.auto_size_target = doc.number("sim.auto_size_target", c.auto_size_target);

  c.oracle.n_stations = count(doc.integer("oracle.n_stations", static_cast<std::int64_t>(c.oracle.n_stations)), "oracle.n_stations");
  c.oracle.warmup_slots = doc.integer("oracle.warmup_slots", c.oracle.warmup_slots);
  c.oracle.measure_slots = doc.integer("oracle.measure_slots", c.oracle.measure_slots);
  c.oracle.batches = count(doc.integer("oracle.batches", static_cast<std::int64_t>(c.oracle.batches)), "oracle.batches");
  c.oracle.seed = static_cast<std::uint64_t>(doc.integer("oracle.seed", static_cast<std::int64_t>(c.oracle.seed)));
  c.grid_min = doc.number("oracle.grid_min", c.grid_min);
  c.grid_max = doc.number("oracle.grid_max", c.grid_max);
  c.grid_points = count(doc.integer("oracle.grid_points", static_cast<std::int64_t>(c.grid_points)), "oracle.grid_points");
  c.grid_extra = doc.numbers("oracle.grid_extra", c.grid_extra);
  c.cache_dir = doc.string("oracle.cache_dir", c.cache_dir);

  c.sweep_parameter = doc.string("sweep.parameter", c.sweep_parameter);
  c.sweep_values = doc.numbers("sweep.values", c.sweep_values);
  if (doc.has("sweep.seeds")) {
    c.sweep_seeds.clear();
    for (double s : doc.numbers("sweep.seeds", {})) {
      require(s >= 0 && s == std::floor(s), ErrorKind::Config, "seeds must be non-negative integers");
      c.sweep_seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  c.engines = doc.strings("sweep.engines", c.engines);

  c.compare_profile = doc.string("compare.profile", c.compare_profile);
  c.compare_d_max = static_cast<int>(doc.integer("compare.d_max", c.compare_d_max));
  c.tolerance_scale = doc.number("compare.tolerance_scale", c.tolerance_scale);

  const auto unused = doc.unused_keys();
  require(unused.empty(), ErrorKind::Config, "unknown config key '" + (unused.empty() ? "" : unused.front()) + "'");
}

/// CI profile: fewer stations, shorter windows, coarser provider grid, wider tolerances.
inline void apply_fast_profile(RunConfig& c) {
  c.fast = true;
  if (c.topology == TopologyKind::Loop) c.n_stations = std::min<std::size_t>(c.n_stations, 200);
  c.measure_slots = std::min<std::int64_t>(c.measure_slots, 100'000);
  c.warmup_slots = std::min<std::int64_t>(c.warmup_slots, 10'000);
  c.oracle.n_stations = std::min<std::size_t>(c.oracle.n_stations, 200);
  c.oracle.measure_slots = std::min<std::int64_t>(c.oracle.measure_slots, 100'000);
  c.oracle.warmup_slots = std::min<std::int64_t>(c.oracle.warmup_slots, 10'000);
  c.grid_points = std::min<std::size_t>(c.grid_points, 12);
  c.tolerance_scale = std::max(c.tolerance_scale, 1.5);
}

/// Stable text form of every field; hashed into output headers.
inline std::string canonical_config(const RunConfig& c) {
  std::ostringstream os;
  auto num = [](double v) { return detail::format_double(v); };
  auto list = [&](const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + num(v[k]);
    return s + "]";
  };
  os << "cw_min=" << c.protocol.cw_min << "\nframe_len_slots=" << c.frame_len() << "\nslot_seconds=" << num(c.protocol.slot_seconds)
     << "\nlambda_f=" << num(c.traffic.lambda_f) << "\nqueue_policy=" << to_string(c.traffic.queue_policy)
     << "\ntopology=" << to_string(c.topology) << "\nn_stations=" << c.n_stations << "\nbeta=" << num(c.beta)
     << "\nsensing_range_m=" << num(c.sensing_range_m) << "\nsnapshot=" << c.snapshot_path
     << "\nmerge_tolerance_m=" << num(c.merge_tolerance_m) << "\ntarget_mean=" << num(c.multilane_target_mean)
     << "\nmax_lanes=" << c.multilane_max_lanes << "\nsnapshot_seed=" << c.snapshot_seed << "\nseed=" << c.seed
     << "\nwarmup_slots=" << c.warmup_slots << "\nmeasure_slots=" << c.measure_slots << "\nbatches=" << c.batches
     << "\nstrict_80211=" << c.strict_80211 << "\nauto_size=" << c.auto_size << "\nmax_measure_slots=" << c.max_measure_slots
     << "\noracle.n_stations=" << c.oracle.n_stations << "\noracle.warmup_slots=" << c.oracle.warmup_slots
     << "\noracle.measure_slots=" << c.oracle.measure_slots << "\noracle.batches=" << c.oracle.batches
     << "\noracle.seed=" << c.oracle.seed << "\ngrid=" << num(c.grid_min) << ":" << num(c.grid_max) << ":" << c.grid_points
     << "\ngrid_extra=" << list(c.grid_extra) << "\nsweep.parameter=" << c.sweep_parameter
     << "\nsweep.values=" << list(c.sweep_values) << "\nsweep.seeds=";
  for (auto s : c.sweep_seeds) os << s << ",";
  os << "\nengines=";
  for (const auto& e : c.engines) os << e << ",";
  os << "\ncompare.profile=" << c.compare_profile << "\ncompare.d_max=" << c.compare_d_max
     << "\ntolerance_scale=" << num(c.tolerance_scale) << "\n";
  return os.str();
}

inline std::string config_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : canonical_config(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline ScenarioSnapshot make_scenario(const RunConfig& c) {
  switch (c.topology) {
    case TopologyKind::Loop: return build_loop_topology(c.n_stations, c.beta, c.sensing_range_m);
    case TopologyKind::Multilane:
      return calibrate_multilane_snapshot(c.n_stations, c.beta, c.sensing_range_m, c.multilane_target_mean,
                                          c.multilane_max_lanes, c.snapshot_seed);
    case TopologyKind::File: return load_position_snapshot(c.snapshot_path, c.merge_tolerance_m);
  }
  fail(ErrorKind::Config, "unknown topology");
}

/// Provider grid: log-spaced nodes plus the configured extras and 2/W, so the saturated point
/// is always an exact node.
inline std::vector<double> provider_grid(const RunConfig& c) {
  std::vector<double> extra;
  const double top = 2.0 / static_cast<double>(c.protocol.w());
  for (double e : c.grid_extra)
    if (e >= c.grid_min && e <= std::max(c.grid_max, top)) extra.push_back(e);
  if (std::find(extra.begin(), extra.end(), top) == extra.end()) extra.push_back(top);
  return log_grid(c.grid_min, c.grid_max, c.grid_points, extra);
}

/// Lazily built oracle providers keyed by (L, R); shared read-only by the workers.
class ProviderPool {
 public:
  ProviderPool(std::string cache_dir, std::ostream* progress) : cache_dir_(std::move(cache_dir)), progress_(progress) {}

  const InterpolatingProvider& get(const RunConfig& c, int R) {
    std::lock_guard<std::mutex> lock(mu_);
    const auto grid = provider_grid(c);
    std::ostringstream key;
    key << c.frame_len() << '/' << R << '/' << c.oracle.n_stations << '/' << c.oracle.measure_slots << '/' << c.oracle.seed;
    for (double g : grid) key << '/' << detail::format_double(g);
    auto it = providers_.find(key.str());
    if (it != providers_.end()) return *it->second;
    OracleControls oc = c.oracle;
    oc.n_stations = std::max(oc.n_stations, 4 * static_cast<std::size_t>(R) + 8);
    auto p = std::make_unique<InterpolatingProvider>(
        InterpolatingProvider::build(grid, c.frame_len(), R, oc, cache_dir_, progress_));
    return *providers_.emplace(key.str(), std::move(p)).first->second;
  }

 private:
  std::string cache_dir_;
  std::ostream* progress_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<InterpolatingProvider>> providers_;
};

/// Outcome of one engine at one grid point.
struct EngineResult {
  std::string engine;
  bool ok = false;
  std::string error;  // "<kind>: message" when !ok
  ErrorKind error_kind = ErrorKind::Config;
  std::optional<ModelSolution> analytic;
  std::optional<CamPerformance> cam;
  std::optional<SimStats> sim;

  std::vector<MetricRow> rows() const {
    std::vector<MetricRow> r;
    if (analytic) r = metric_rows(*analytic);
    if (cam) {
      auto extra = metric_rows(*cam);
      r.insert(r.end(), extra.begin(), extra.end());
    }
    if (sim) r = metric_rows(*sim);
    return r;
  }

  std::optional<MetricRow> find(const std::string& metric, int d) const {
    for (const auto& row : rows())
      if (row.metric == metric && row.d == d) return row;
    return std::nullopt;
  }
};

template <class F>
EngineResult guarded(const std::string& engine, F&& body) {
  EngineResult r;
  r.engine = engine;
  try {
    body(r);
    r.ok = true;
  } catch (const Error& e) {
    r.error = e.what();
    r.error_kind = e.kind();
  }
  return r;
}

inline EngineResult run_analytic(const RunConfig& c, int R, ProviderPool& pool) {
  return guarded("analytic", [&](EngineResult& r) {
    c.validate();
    const auto& provider = pool.get(c, R);
    const ProtocolConfig pc = c.effective_protocol();
    const double lam = rate_per_slot(c.traffic.lambda_f, pc.slot_seconds);
    if (c.traffic.queue_policy == QueuePolicy::SingleOverwrite) {
      ModelSolution sol = solve_cam(pc.w(), pc.frame_len_slots, lam, provider);
      r.cam = cam_report(sol, sol.channel, pc);
      r.analytic = std::move(sol);
    } else {
      r.analytic = solve_fifo(pc.w(), pc.frame_len_slots, lam, provider);
    }
  });
}

/// Widest relative CI half-width among the headline estimates that are meaningfully nonzero.
inline double widest_relative_ci(const SimStats& s) {
  double w = 0.0;
  for (const Estimate* e : {&s.tau_hat, &s.eta_hat, &s.rho_hat, &s.p_i_hat}) {
    if (!e->valid() || !(e->value > 1e-9) || !std::isfinite(e->ci)) continue;
    w = std::max(w, e->ci / e->value);
  }
  return w;
}

inline EngineResult run_simulation(const RunConfig& c, const ScenarioSnapshot& scenario) {
  return guarded("protocol_sim", [&](EngineResult& r) {
    c.validate();
    SimParams p;
    p.protocol = c.effective_protocol();
    p.traffic = c.traffic;
    p.seed = c.seed;
    p.warmup_slots = c.warmup_slots;
    p.measure_slots = c.measure_slots;
    p.batches = c.batches;
    p.strict_80211 = c.strict_80211;
    SimStats s = run_protocol_sim(p, scenario);
    // Duration auto-sizing: double the window until the CI target or the budget is met.
    while (c.auto_size && widest_relative_ci(s) > c.auto_size_target && p.measure_slots * 2 <= c.max_measure_slots) {
      p.measure_slots *= 2;
      s = run_protocol_sim(p, scenario);
    }
    require(s.tau_hat.valid(), ErrorKind::InsufficientSamples, "no protocol slot completed in the measurement window");
    r.sim = std::move(s);
  });
}

/// Runs f(i) for i in [0, n) on a worker pool; results are written by index, so the output
/// order never depends on completion order.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Applies a swept value to a copy of the base config.
inline RunConfig with_parameter(RunConfig c, const std::string& name, double v) {
  auto as_int = [&](const char* what) {
    require(v == std::floor(v), ErrorKind::Config, std::string(what) + " values must be integers");
    return static_cast<std::int64_t>(v);
  };
  if (name == "lambda_f") {
    c.traffic.lambda_f = v;
  } else if (name == "cw_min") {
    c.protocol.cw_min = static_cast<int>(as_int("cw_min"));
  } else if (name == "L") {
    c.payload_bytes.reset();
    c.protocol.frame_len_slots = static_cast<int>(as_int("L"));
  } else if (name == "R") {
    require(c.topology == TopologyKind::Loop, ErrorKind::Config, "sweeping R needs the loop topology");
    c.sensing_range_m = static_cast<double>(as_int("R")) / c.beta;
  } else if (name == "r") {
    c.sensing_range_m = v;
  } else if (name == "payload_bytes") {
    c.payload_bytes = as_int("payload_bytes");
  } else {
    fail(ErrorKind::Config, "unknown sweep parameter '" + name + "'");
  }
  return c;
}

struct PointRun {
  double x = 0.0;
  std::uint64_t seed = 0;
  RunConfig config;
  int r_neighbors = 0;
  std::vector<EngineResult> engines;

  const EngineResult* engine(const std::string& name) const {
    for (const auto& e : engines)
      if (e.engine == name) return &e;
    return nullptr;
  }
};

/// Evaluates every (value, seed) pair of the sweep with the selected engines.
inline std::vector<PointRun> run_sweep(const RunConfig& base, ProviderPool& pool) {
  base.validate();
  require(!base.sweep_values.empty(), ErrorKind::Config, "sweep grid is empty");
  const auto seeds = base.sweep_seeds.empty() ? std::vector<std::uint64_t>{base.seed} : base.sweep_seeds;
  std::vector<PointRun> runs;
  for (double v : base.sweep_values)
    for (auto s : seeds) {
      PointRun p;
      p.x = v;
      p.seed = s;
      p.config = with_parameter(base, base.sweep_parameter, v);
      p.config.seed = s;
      runs.push_back(std::move(p));
    }
  // Scenarios and providers first, serially, so workers only read shared state.
  std::vector<std::optional<ScenarioSnapshot>> scenarios(runs.size());
  std::vector<std::string> setup_error(runs.size());
  std::vector<ErrorKind> setup_kind(runs.size(), ErrorKind::Config);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    try {
      runs[i].config.validate();
      scenarios[i] = make_scenario(runs[i].config);
      runs[i].r_neighbors = scenarios[i]->effective_r;
      if (runs[i].config.has_engine("analytic")) pool.get(runs[i].config, runs[i].r_neighbors);
    } catch (const Error& e) {
      setup_error[i] = e.what();
      setup_kind[i] = e.kind();
    }
  }
  parallel_for(runs.size(), base.jobs, [&](std::size_t i) {
    auto& p = runs[i];
    for (const auto& name : p.config.engines) {
      if (!scenarios[i]) {
        EngineResult r;
        r.engine = name;
        r.error = setup_error[i];
        r.error_kind = setup_kind[i];
        p.engines.push_back(std::move(r));
        continue;
      }
      p.engines.push_back(name == "analytic" ? run_analytic(p.config, p.r_neighbors, pool)
                                             : run_simulation(p.config, *scenarios[i]));
    }
  });
  return runs;
}

inline std::string output_header(const RunConfig& c, const std::string& what, const std::vector<std::string>& notes = {}) {
  std::ostringstream os;
  os << "# vbcast " << kVersion << " " << what << "\n";
  os << "# config_hash=" << config_hash(c) << " seed=" << c.seed << (c.fast ? " profile=fast" : " profile=full") << "\n";
  for (const auto& n : notes) os << "# " << n << "\n";
  return os.str();
}

inline std::string sweep_csv(const RunConfig& base, const std::vector<PointRun>& runs) {
  std::ostringstream os;
  os << output_header(base, "sweep", {"parameter=" + base.sweep_parameter});
  os << "x,seed,engine,metric,d,value,ci,n_samples,status\n";
  for (const auto& p : runs)
    for (const auto& e : p.engines) {
      if (!e.ok) {
        os << csv_number(p.x) << ',' << p.seed << ',' << e.engine << ",error,0,,,0,\"" << e.error << "\"\n";
        continue;
      }
      for (const auto& r : e.rows())
        os << csv_number(p.x) << ',' << p.seed << ',' << e.engine << ',' << r.metric << ',' << r.d << ','
           << csv_number(r.value) << ',' << csv_number(r.ci) << ',' << r.n << ",ok\n";
    }
  return os.str();
}

// ---------------------------------------------------------------------------------------------
// Comparison

enum class RuleKind { RelativeOrAbsolute, Relative, Directional };

struct ToleranceRule {
  RuleKind kind = RuleKind::Relative;
  double rel = 0.0;
  double abs = 0.0;
  std::string label() const {
    std::ostringstream os;
    if (kind == RuleKind::Directional) return "analytic<=sim+ci";
    os << "rel<=" << rel;
    if (kind == RuleKind::RelativeOrAbsolute) os << "|abs<=" << abs;
    return os.str();
  }
};

struct ProfileEntry {
  std::string metric;
  ToleranceRule rule;
  bool per_distance = false;
};

/// Metric rules of a named profile. "auto" picks cam for the overwrite queue, directional for
/// very small contention windows, default otherwise.
inline std::vector<ProfileEntry> tolerance_profile(const RunConfig& c) {
  std::string name = c.compare_profile;
  if (name == "auto") {
    if (c.traffic.queue_policy == QueuePolicy::SingleOverwrite) name = "cam";
    else if (c.protocol.cw_min <= 7) name = "directional";
    else name = "default";
  }
  const double s = c.tolerance_scale;
  const ToleranceRule prob{RuleKind::RelativeOrAbsolute, 0.10 * s, 0.02 * s};
  const ToleranceRule time{RuleKind::Relative, 0.15 * s, 0.0};
  if (name == "default")
    return {{"tau", prob}, {"eta", prob}, {"rho", prob}, {"p_i", prob},
            {"mean_t_bp", time}, {"mean_t_ntp", time}, {"mean_d_s", time}};
  if (name == "directional") {
    const ToleranceRule dir{RuleKind::Directional, 0.0, 0.0};
    return {{"p_if", dir}, {"goodput", dir}};
  }
  if (name == "cam") {
    const ToleranceRule loose{RuleKind::Relative, 0.25 * s, 0.0};
    return {{"t_ui", loose, true}, {"p_fif", loose, true}};
  }
  fail(ErrorKind::Config, "unknown compare profile '" + c.compare_profile + "'");
}

struct ComparisonRow {
  double x = 0.0;
  std::uint64_t seed = 0;
  std::string metric;
  int d = 0;
  double analytic = std::numeric_limits<double>::quiet_NaN();
  double simulated = std::numeric_limits<double>::quiet_NaN();
  double sim_ci = std::numeric_limits<double>::quiet_NaN();
  double abs_err = std::numeric_limits<double>::quiet_NaN();
  double rel_err = std::numeric_limits<double>::quiet_NaN();
  bool within_ci = false;
  std::string rule;
  std::string status;  // pass, fail, gap, insufficient
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::size_t failures = 0, gaps = 0, insufficient = 0;

  int exit_code() const {
    if (failures > 0 || gaps > 0) return 3;
    if (insufficient > 0) return 4;
    return 0;
  }
};

inline ComparisonRow judge(double a, const Estimate& s, const ToleranceRule& rule) {
  ComparisonRow r;
  r.analytic = a;
  r.simulated = s.value;
  r.sim_ci = s.ci;
  r.rule = rule.label();
  if (!s.valid()) {
    r.status = "insufficient";
    return r;
  }
  if (!std::isfinite(a)) {
    r.status = "gap";
    return r;
  }
  r.abs_err = std::fabs(a - s.value);
  r.rel_err = s.value != 0.0 ? r.abs_err / std::fabs(s.value) : (r.abs_err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  r.within_ci = std::isfinite(s.ci) && r.abs_err <= s.ci;
  bool pass = false;
  switch (rule.kind) {
    case RuleKind::RelativeOrAbsolute: pass = r.rel_err <= rule.rel || r.abs_err <= rule.abs; break;
    case RuleKind::Relative: pass = r.rel_err <= rule.rel; break;
    case RuleKind::Directional: pass = a <= s.value + (std::isfinite(s.ci) ? s.ci : 0.0) + 1e-12; break;
  }
  r.status = pass ? "pass" : "fail";
  return r;
}

inline ComparisonReport compare_runs(const RunConfig& base, const std::vector<PointRun>& runs) {
  ComparisonReport rep;
  for (const auto& p : runs) {
    const EngineResult* a = p.engine("analytic");
    const EngineResult* s = p.engine("protocol_sim");
    for (const auto& entry : tolerance_profile(p.config)) {
      auto push = [&](ComparisonRow row, const std::string& metric, int d) {
        row.x = p.x;
        row.seed = p.seed;
        row.metric = metric;
        row.d = d;
        if (row.status == "fail") ++rep.failures;
        if (row.status == "gap") ++rep.gaps;
        if (row.status == "insufficient") ++rep.insufficient;
        rep.rows.push_back(std::move(row));
      };
      const int d_hi = entry.per_distance ? (base.compare_d_max > 0 ? std::min(base.compare_d_max, p.r_neighbors) : p.r_neighbors) : 0;
      for (int d = entry.per_distance ? 1 : 0; d <= d_hi; ++d) {
        if (!a || !s || !a->ok || !s->ok) {
          ComparisonRow row;
          row.rule = entry.rule.label();
          row.status = (s && !s->ok && s->error_kind == ErrorKind::InsufficientSamples) ? "insufficient" : "gap";
          push(row, entry.metric, d);
          continue;
        }
        const auto ar = a->find(entry.metric, d);
        const auto sr = s->find(entry.metric, d);
        if (!ar || !sr) {
          ComparisonRow row;
          row.rule = entry.rule.label();
          row.status = "gap";
          push(row, entry.metric, d);
          continue;
        }
        Estimate se;
        se.value = sr->value;
        se.ci = sr->ci;
        se.n = sr->n;
        push(judge(ar->value, se, entry.rule), entry.metric, d);
      }
    }
  }
  return rep;
}

inline std::string comparison_csv(const RunConfig& base, const ComparisonReport& rep) {
  std::ostringstream os;
  os << output_header(base, "compare", {"parameter=" + base.sweep_parameter});
  os << "x,seed,metric,d,analytic,simulated,sim_ci,abs_err,rel_err,within_ci,rule,status\n";
  for (const auto& r : rep.rows)
    os << csv_number(r.x) << ',' << r.seed << ',' << r.metric << ',' << r.d << ',' << csv_number(r.analytic) << ','
       << csv_number(r.simulated) << ',' << csv_number(r.sim_ci) << ',' << csv_number(r.abs_err) << ','
       << csv_number(r.rel_err) << ',' << (r.within_ci ? 1 : 0) << ",\"" << r.rule << "\"," << r.status << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------------------------
// Figure presets

struct FigureSeriesPoint {
  double x;
  std::string series;
  double y;
  double ci;
};

struct FigureFile {
  std::string name;  // e.g. fig6_a.csv
  std::vector<std::string> notes;
  std::string x_label;
  std::vector<FigureSeriesPoint> points;
};

inline const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> names = {"fig6", "fig7", "fig8", "fig10", "fig11", "fig12", "fig13"};
  return names;
}

/// Base configuration of a preset before user overrides.
inline RunConfig figure_base(const std::string& name) {
  RunConfig c;
  if (name == "fig6" || name == "fig7" || name == "fig8") {
    c.sweep_parameter = "lambda_f";
    c.sweep_values = {10, 20, 30, 40, 60, 80, 100, 120, 150, 200, 300, 500, 700, 1000, 1300};
  } else if (name == "fig10" || name == "fig11") {
    c.topology = TopologyKind::Multilane;
    c.n_stations = 800;
    c.beta = 0.11;
    c.sensing_range_m = 184.6;
    c.traffic.queue_policy = QueuePolicy::SingleOverwrite;
    c.sweep_parameter = "lambda_f";
    c.sweep_values = {10, 40, 60};
  } else if (name == "fig12" || name == "fig13") {
    c.protocol.cw_min = name == "fig13" ? 127 : 63;
    c.beta = 0.2;
    c.traffic.queue_policy = QueuePolicy::SingleOverwrite;
    c.engines = {"analytic"};
    c.sweep_parameter = "lambda_f";
    c.sweep_values = {5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    c.grid_min = 2e-5;
    c.grid_max = 2.0 / static_cast<double>(c.protocol.w());
    c.grid_points = 14;
    c.grid_extra.clear();
  } else {
    fail(ErrorKind::Config, "unknown figure '" + name + "' (known: fig6 fig7 fig8 fig10 fig11 fig12 fig13)");
  }
  return c;
}

inline std::vector<FigureFile> build_figure(const std::string& name, const RunConfig& cfg, ProviderPool& pool) {
  std::vector<FigureFile> files;
  auto scalar_value = [](const EngineResult& e, const std::string& metric) -> std::pair<double, double> {
    const auto r = e.find(metric, 0);
    return r ? std::pair{r->value, r->ci} : std::pair{std::numeric_limits<double>::quiet_NaN(), 0.0};
  };
  auto describe = [](const RunConfig& c, int R) {
    std::ostringstream os;
    os << "preset: topology=" << to_string(c.topology) << " n=" << c.n_stations << " beta=" << detail::format_double(c.beta)
       << " r=" << detail::format_double(c.sensing_range_m) << "m R=" << R << " L=" << c.frame_len()
       << " cw_min=" << c.protocol.cw_min << " queue=" << to_string(c.traffic.queue_policy)
       << " slot=" << detail::format_double(c.protocol.slot_seconds) << "s";
    return os.str();
  };

  if (name == "fig6" || name == "fig7" || name == "fig8") {
    const std::vector<std::string> metrics =
        name == "fig6" ? std::vector<std::string>{"tau", "eta", "rho", "p_i"}
        : name == "fig7" ? std::vector<std::string>{"mean_t_bp", "mean_t_ntp", "mean_d_s"}
                         : std::vector<std::string>{"p_if", "goodput"};
    const std::vector<std::pair<std::string, int>> subplots = {{"a", 3}, {"b", 63}};
    for (const auto& [tag, cw] : subplots) {
      RunConfig c = cfg;
      c.protocol.cw_min = cw;
      const auto runs = run_sweep(c, pool);
      FigureFile f;
      f.name = name + "_" + tag + ".csv";
      f.x_label = "lambda_f [frames/s]";
      f.notes.push_back(describe(c, runs.empty() ? 0 : runs.front().r_neighbors));
      f.notes.push_back(name == "fig7" ? "y unit: slots" : "y unit: probability");
      for (const auto& p : runs)
        for (const auto& e : p.engines)
          for (const auto& m : metrics) {
            if (!e.ok) continue;
            const auto [y, ci] = scalar_value(e, m);
            f.points.push_back({p.x, m + "/" + e.engine, y, e.engine == "analytic" ? 0.0 : ci});
          }
      files.push_back(std::move(f));
    }
  } else if (name == "fig10" || name == "fig11") {
    const std::string metric = name == "fig10" ? "t_ui" : "p_fif";
    const std::vector<std::pair<std::string, int>> subplots = {{"a", 32}, {"b", 64}};
    for (const auto& [tag, L] : subplots) {
      RunConfig c = cfg;
      c.payload_bytes.reset();
      c.protocol.frame_len_slots = L;
      const auto runs = run_sweep(c, pool);
      FigureFile f;
      f.name = name + "_" + tag + ".csv";
      f.x_label = "d_rx [stations]";
      f.notes.push_back(describe(c, runs.empty() ? 0 : runs.front().r_neighbors));
      f.notes.push_back(name == "fig10" ? "y unit: seconds" : "y unit: probability");
      const double scale = name == "fig10" ? c.protocol.slot_seconds : 1.0;
      for (const auto& p : runs)
        for (const auto& e : p.engines) {
          if (!e.ok) continue;
          for (const auto& r : e.rows()) {
            if (r.metric != metric || r.d < 1) continue;
            f.points.push_back({static_cast<double>(r.d), "lambda_f=" + detail::format_double(p.x) + "/" + e.engine,
                                r.value * scale, std::isfinite(r.ci) ? r.ci * scale : 0.0});
          }
        }
      files.push_back(std::move(f));
    }
  } else if (name == "fig12" || name == "fig13") {
    const std::vector<std::pair<std::string, std::int64_t>> subplots = {{"a", 200}, {"b", 512}};
    const std::vector<double> ranges = {20, 40, 80, 160, 320, 640};
    for (const auto& [tag, bytes] : subplots) {
      FigureFile f;
      f.name = name + "_" + tag + ".csv";
      f.x_label = "lambda_f [Hz]";
      f.notes.push_back("y unit: seconds; series r=<range m>/d=<receiver distance>");
      for (double r : ranges) {
        RunConfig c = cfg;
        c.payload_bytes = bytes;
        c.sensing_range_m = r;
        const auto runs = run_sweep(c, pool);
        if (r == ranges.front()) f.notes.push_back(describe(c, runs.empty() ? 0 : runs.front().r_neighbors));
        for (const auto& p : runs) {
          const EngineResult* a = p.engine("analytic");
          if (!a || !a->ok || !a->cam) continue;
          std::vector<int> ds;
          if (p.r_neighbors >= 8) ds.push_back(8);
          if (p.r_neighbors != 8) ds.push_back(p.r_neighbors);
          for (int d : ds)
            f.points.push_back({p.x, "r=" + detail::format_double(r) + "/d=" + std::to_string(d),
                                a->cam->t_ui_seconds[static_cast<std::size_t>(d - 1)], 0.0});
        }
      }
      files.push_back(std::move(f));
    }
  }
  return files;
}

inline std::string figure_csv(const RunConfig& c, const std::string& figure, const FigureFile& f) {
  std::vector<std::string> notes = f.notes;
  notes.push_back("x: " + f.x_label);
  std::ostringstream os;
  os << output_header(c, "figure=" + figure + " file=" + f.name, notes);
  os << "x,series,y,ci\n";
  for (const auto& p : f.points)
    os << csv_number(p.x) << ',' << p.series << ',' << csv_number(p.y) << ',' << csv_number(p.ci) << '\n';
  return os.str();
}

}  // namespace vbcast
