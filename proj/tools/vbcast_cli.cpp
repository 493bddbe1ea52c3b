// Command-line front end: sweep, compare, figure, oracle, sim.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vbcast/harness.hpp"
#include "vbcast/oracle.hpp"

namespace fs = std::filesystem;
using namespace vbcast;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTolerance = 3;
constexpr int kExitInsufficient = 4;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool fast = false;
  std::string engines;
  bool strict = false;
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value configuration file");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out-dir", f.out_dir, "output directory")->capture_default_str();
  cmd->add_flag("--fast", f.fast, "reduced-scale profile (N=200, short windows, wider tolerances)");
  cmd->add_option("--engines", f.engines, "comma list from {analytic, protocol_sim}");
  cmd->add_flag("--strict-80211", f.strict, "draw backoff counters from [0, CW] as the standard does");
  cmd->add_option("--jobs", f.jobs, "worker threads (default: hardware concurrency)");
}

RunConfig resolve(RunConfig base, const CommonFlags& f) {
  if (!f.config_path.empty()) apply_document(base, ConfigDocument::load(f.config_path));
  if (f.fast) apply_fast_profile(base);
  if (f.seed) base.seed = *f.seed;
  if (!f.engines.empty()) base.engines = split_list(f.engines);
  if (f.strict) base.strict_80211 = true;
  if (f.jobs) base.jobs = *f.jobs;
  if (base.sweep_values.empty() && base.sweep_parameter == "lambda_f") base.sweep_values = {base.traffic.lambda_f};
  if (base.cache_dir.empty()) base.cache_dir = (fs::path(f.out_dir) / "oracle_cache").string();
  base.validate();
  return base;
}

void write_out(const CommonFlags& f, const std::string& name, const std::string& text) {
  fs::create_directories(f.out_dir);
  const auto path = fs::path(f.out_dir) / name;
  write_text_file(path.string(), text);
  std::cerr << "wrote " << path.string() << "\n";
}

int exit_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::Parse:
    case ErrorKind::Scenario:
    case ErrorKind::Validation:
    case ErrorKind::UnsupportedMode: return kExitConfig;
    case ErrorKind::InsufficientSamples: return kExitInsufficient;
    default: return kExitError;
  }
}

int cmd_sweep(const CommonFlags& f) {
  const RunConfig cfg = resolve(RunConfig{}, f);
  ProviderPool pool(cfg.cache_dir, &std::cerr);
  const auto runs = run_sweep(cfg, pool);
  write_out(f, "sweep.csv", sweep_csv(cfg, runs));
  return kExitOk;
}

int cmd_compare(const CommonFlags& f) {
  const RunConfig cfg = resolve(RunConfig{}, f);
  require(cfg.has_engine("analytic") && cfg.has_engine("protocol_sim"), ErrorKind::Config,
          "compare needs both engines");
  ProviderPool pool(cfg.cache_dir, &std::cerr);
  const auto runs = run_sweep(cfg, pool);
  const auto rep = compare_runs(cfg, runs);
  write_out(f, "sweep.csv", sweep_csv(cfg, runs));
  write_out(f, "compare.csv", comparison_csv(cfg, rep));
  std::cout << "compared " << rep.rows.size() << " metric pairs: " << rep.failures << " failed, " << rep.gaps
            << " gaps, " << rep.insufficient << " without samples\n";
  return rep.exit_code();
}

int cmd_figure(const CommonFlags& f, const std::string& name) {
  const RunConfig cfg = resolve(figure_base(name), f);
  ProviderPool pool(cfg.cache_dir, &std::cerr);
  for (const auto& file : build_figure(name, cfg, pool)) write_out(f, file.name, figure_csv(cfg, name, file));
  return kExitOk;
}

int cmd_oracle(const CommonFlags& f, const std::vector<double>& p_tx) {
  RunConfig cfg = resolve(RunConfig{}, f);
  const auto scenario = make_scenario(cfg);
  const int R = scenario.effective_r;
  std::vector<ChannelQuantities> nodes;
  if (p_tx.empty()) {
    ProviderPool pool(cfg.cache_dir, &std::cerr);
    nodes = pool.get(cfg, R).nodes();
  } else {
    for (double p : p_tx) {
      OracleParams prm;
      prm.p_tx = p;
      prm.frame_len_slots = cfg.frame_len();
      prm.r_neighbors = R;
      prm.n_stations = std::max(cfg.oracle.n_stations, 4 * static_cast<std::size_t>(R) + 8);
      prm.warmup_slots = cfg.oracle.warmup_slots;
      prm.measure_slots = cfg.oracle.measure_slots;
      prm.batches = cfg.oracle.batches;
      prm.seed = grid_point_seed(cfg.oracle.seed, p);
      nodes.push_back(run_oracle(prm));
    }
  }
  Json all = Json::array();
  std::ostringstream csv;
  csv << output_header(cfg, "oracle", {"L=" + std::to_string(cfg.frame_len()) + " R=" + std::to_string(R)});
  csv << "p_tx,p_ii,p_tx_given_idle,mean_t_rb,p_i,p_of,p_if,mean_t_rxp,mean_t_txp,goodput\n";
  for (const auto& q : nodes) {
    all.push_back(to_json(q));
    csv << csv_number(q.p_tx);
    for (const Estimate* e : {&q.p_ii, &q.p_tx_given_idle, &q.mean_t_rb, &q.p_i, &q.p_of, &q.p_if, &q.mean_t_rxp,
                              &q.mean_t_txp, &q.goodput})
      csv << ',' << csv_number(e->value);
    csv << '\n';
  }
  write_out(f, "oracle.csv", csv.str());
  write_out(f, "oracle.json", all.dump(1) + "\n");
  return kExitOk;
}

int cmd_sim(const CommonFlags& f, bool reception_log) {
  const RunConfig cfg = resolve(RunConfig{}, f);
  const auto scenario = make_scenario(cfg);
  SimParams p;
  p.protocol = cfg.effective_protocol();
  p.traffic = cfg.traffic;
  p.seed = cfg.seed;
  p.warmup_slots = cfg.warmup_slots;
  p.measure_slots = cfg.measure_slots;
  p.batches = cfg.batches;
  p.strict_80211 = cfg.strict_80211;
  std::ofstream log;
  if (reception_log) {
    fs::create_directories(f.out_dir);
    log.open(fs::path(f.out_dir) / "receptions.csv");
    p.reception_log = &log;
  }
  const SimStats s = run_protocol_sim(p, scenario);
  Json j = to_json(s);
  j["config_hash"] = config_hash(cfg);
  j["version"] = kVersion;
  j["r_neighbors"] = scenario.effective_r;
  write_out(f, "sim.json", j.dump(1) + "\n");
  std::ostringstream csv;
  csv << output_header(cfg, "sim");
  write_metric_csv(csv, metric_rows(s));
  write_out(f, "sim.csv", csv.str());
  if (!s.tau_hat.valid() || !s.rho_hat.valid()) {
    std::cerr << "insufficient samples: no complete protocol slot in the measurement window\n";
    return kExitInsufficient;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Broadcast CSMA analytics and simulation with hidden stations"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags flags;
  auto* sweep = app.add_subcommand("sweep", "parameter sweep, one CSV row per point, engine and metric");
  auto* compare = app.add_subcommand("compare", "analytic vs simulated comparison against a tolerance profile");
  auto* figure = app.add_subcommand("figure", "plot-ready CSV for a named preset");
  auto* oracle = app.add_subcommand("oracle", "raw channel-quantity oracle runs");
  auto* sim = app.add_subcommand("sim", "single protocol simulation run");
  for (auto* c : {sweep, compare, figure, oracle, sim}) add_common(c, flags);

  std::string figure_name;
  figure->add_option("name", figure_name, "fig6 fig7 fig8 fig10 fig11 fig12 fig13")
      ->required()
      ->check(CLI::IsMember(figure_names()));
  std::vector<double> p_tx;
  oracle->add_option("--p-tx", p_tx, "transmission probabilities; default: the provider grid")->delimiter(',');
  bool reception_log = false;
  sim->add_flag("--reception-log", reception_log, "also write every reception to receptions.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sweep->parsed()) return cmd_sweep(flags);
    if (compare->parsed()) return cmd_compare(flags);
    if (figure->parsed()) return cmd_figure(flags, figure_name);
    if (oracle->parsed()) return cmd_oracle(flags, p_tx);
    if (sim->parsed()) return cmd_sim(flags, reception_log);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
