#include <catch_amalgamated.hpp>

#include <filesystem>

#include "vbcast/harness.hpp"

using namespace vbcast;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.n_stations = 200;
  c.sensing_range_m = 4.0 / c.beta;
  c.warmup_slots = 5'000;
  c.measure_slots = 40'000;
  c.oracle.n_stations = 200;
  c.oracle.warmup_slots = 2'000;
  c.oracle.measure_slots = 20'000;
  c.grid_points = 6;
  c.grid_extra.clear();
  c.sweep_values = {30, 60};
  c.jobs = 1;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vbcast_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Config;
}

}  // namespace

TEST_CASE("config documents override defaults and reject unknown keys", "[harness]") {
  RunConfig c;
  apply_document(c, ConfigDocument::parse_string(
                        "seed = 9\n[protocol]\ncw_min = 3\npayload_bytes = 512\n[traffic]\nlambda_f = 60\n"
                        "queue_policy = \"cam\"\n[topology]\nbeta = 0.2\nr_neighbors = 8\n[sweep]\nvalues = [10, 20]\n"));
  CHECK(c.seed == 9);
  CHECK(c.protocol.cw_min == 3);
  CHECK(c.frame_len() == 64);
  CHECK(c.traffic.queue_policy == QueuePolicy::SingleOverwrite);
  CHECK(c.sensing_range_m == Catch::Approx(40.0));
  CHECK(c.sweep_values == std::vector<double>{10, 20});

  CHECK(kind_of([] {
          RunConfig d;
          apply_document(d, ConfigDocument::parse_string("[traffic]\nlamda_f = 3\n"));
        }) == ErrorKind::Config);
  CHECK(kind_of([] {
          RunConfig d;
          apply_document(d, ConfigDocument::parse_string("[topology]\nkind = \"ring\"\n"));
        }) == ErrorKind::Config);
  RunConfig bad;
  bad.sweep_values = {20, 10};
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::Config);
  bad.sweep_values = {10};
  bad.engines = {"ns3"};
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::Config);
}

TEST_CASE("swept parameters land in the right field", "[harness]") {
  RunConfig c;
  CHECK(with_parameter(c, "lambda_f", 42).traffic.lambda_f == 42);
  CHECK(with_parameter(c, "cw_min", 15).protocol.w() == 16);
  CHECK(with_parameter(c, "L", 64).frame_len() == 64);
  CHECK(with_parameter(c, "payload_bytes", 512).frame_len() == 64);
  CHECK(build_loop_topology(800, c.beta, with_parameter(c, "R", 8).sensing_range_m).effective_r == 8);
  CHECK(with_parameter(c, "r", 300).sensing_range_m == 300);
  CHECK(kind_of([&] { with_parameter(c, "cw_min", 15.5); }) == ErrorKind::Config);
  CHECK(kind_of([&] { with_parameter(c, "gamma", 1); }) == ErrorKind::Config);
}

TEST_CASE("fast profile only shrinks the workload", "[harness]") {
  RunConfig c;
  apply_fast_profile(c);
  CHECK(c.fast);
  CHECK(c.n_stations == 200);
  CHECK(c.measure_slots == 100'000);
  CHECK(c.tolerance_scale == 1.5);
  RunConfig tiny = small_config();
  apply_fast_profile(tiny);
  CHECK(tiny.measure_slots == 40'000);
  CHECK(config_hash(tiny) != config_hash(small_config()));
}

TEST_CASE("tolerance profiles and judging", "[harness]") {
  RunConfig c;
  CHECK(tolerance_profile(c).size() == 7);
  c.protocol.cw_min = 3;
  CHECK(tolerance_profile(c).front().rule.kind == RuleKind::Directional);
  c.traffic.queue_policy = QueuePolicy::SingleOverwrite;
  CHECK(tolerance_profile(c).front().per_distance);
  c.compare_profile = "strictest";
  CHECK_THROWS_AS(tolerance_profile(c), Error);

  const ToleranceRule rel{RuleKind::Relative, 0.1, 0.0};
  CHECK(judge(1.0, {1.0, 0.01, 10}, rel).status == "pass");
  CHECK(judge(1.0, {1.0, 0.01, 10}, rel).abs_err == 0.0);
  CHECK(judge(1.2, {1.0, 0.01, 10}, rel).status == "fail");
  CHECK(judge(1.0, {}, rel).status == "insufficient");
  CHECK(judge(std::numeric_limits<double>::quiet_NaN(), {1.0, 0.1, 10}, rel).status == "gap");
  const ToleranceRule either{RuleKind::RelativeOrAbsolute, 0.1, 0.02};
  CHECK(judge(0.015, {0.001, 0.0, 10}, either).status == "pass");
  const ToleranceRule dir{RuleKind::Directional, 0, 0};
  CHECK(judge(0.5, {0.6, 0.01, 10}, dir).status == "pass");
  CHECK(judge(0.7, {0.6, 0.01, 10}, dir).status == "fail");

  ComparisonReport rep;
  CHECK(rep.exit_code() == 0);
  rep.insufficient = 1;
  CHECK(rep.exit_code() == 4);
  rep.gaps = 1;
  CHECK(rep.exit_code() == 3);
}

TEST_CASE("sweeps are reproducible byte for byte", "[harness][property]") {
  const auto dir = scratch("repro");
  auto c = small_config();
  std::string first, second;
  {
    ProviderPool pool(dir.string(), nullptr);
    first = sweep_csv(c, run_sweep(c, pool));
  }
  {
    // Fresh pool, warm cache.
    ProviderPool pool(dir.string(), nullptr);
    second = sweep_csv(c, run_sweep(c, pool));
  }
  CHECK(first == second);
  CHECK(first.rfind("# vbcast ", 0) == 0);
  CHECK(first.find("x,seed,engine,metric,d,value,ci,n_samples,status") != std::string::npos);
  CHECK(first.find(",error,") == std::string::npos);

  SECTION("the same engine compared with itself has zero error") {
    ProviderPool pool(dir.string(), nullptr);
    auto runs = run_sweep(c, pool);
    for (auto& p : runs) {
      auto copy = *p.engine("protocol_sim");
      auto& a = p.engines[0];
      REQUIRE(a.engine == "analytic");
      a.analytic.reset();
      a.sim = copy.sim;
    }
    const auto rep = compare_runs(c, runs);
    REQUIRE(!rep.rows.empty());
    for (const auto& r : rep.rows) {
      CHECK(r.status == "pass");
      CHECK(r.abs_err == 0.0);
    }
    CHECK(rep.exit_code() == 0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("degenerate sweeps", "[harness]") {
  const auto dir = scratch("degenerate");
  ProviderPool pool(dir.string(), nullptr);
  auto c = small_config();
  c.engines = {"protocol_sim"};
  c.sweep_values = {40};
  const auto one = run_sweep(c, pool);
  REQUIRE(one.size() == 1);
  CHECK(one[0].engines.size() == 1);

  c.sweep_values.clear();
  CHECK_THROWS_AS(run_sweep(c, pool), Error);

  // A bad point becomes an error row instead of aborting the sweep.
  c.sweep_parameter = "cw_min";
  c.sweep_values = {1, 15};
  const auto runs = run_sweep(c, pool);
  REQUIRE(runs.size() == 2);
  CHECK_FALSE(runs[0].engines[0].ok);
  CHECK(runs[1].engines[0].ok);
  CHECK(sweep_csv(c, runs).find("protocol_sim,error,") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("figure presets", "[harness]") {
  CHECK(figure_names().size() == 7);
  CHECK(figure_base("fig13").protocol.cw_min == 127);
  CHECK(figure_base("fig12").protocol.cw_min == 63);
  CHECK(figure_base("fig10").topology == TopologyKind::Multilane);
  CHECK(figure_base("fig6").sweep_values.size() == 15);
  CHECK(kind_of([] { figure_base("fig9"); }) == ErrorKind::Config);
}
