#include <catch_amalgamated.hpp>

#include <filesystem>

#include "vbcast/io.hpp"
#include "vbcast/oracle.hpp"
#include "vbcast/provider.hpp"

using namespace vbcast;
using Sense = BusyRunTracker::Sense;

namespace {

OracleParams table_params(double p, std::int64_t measure = 100'000) {
  OracleParams prm;
  prm.p_tx = p;
  prm.frame_len_slots = 32;
  prm.r_neighbors = 16;
  prm.n_stations = 800;
  prm.warmup_slots = 10'000;
  prm.measure_slots = measure;
  prm.seed = 17;
  return prm;
}

bool in_unit(const Estimate& e) { return e.valid() && e.value >= 0.0 && e.value <= 1.0; }

}  // namespace

TEST_CASE("silent network", "[oracle]") {
  auto q = run_oracle(table_params(0.0, 20'000));
  CHECK(q.p_i.value == 1.0);
  CHECK(q.p_ii.value == 1.0);
  CHECK_FALSE(q.p_if.valid());
  CHECK(q.goodput.value == 0.0);
  CHECK_FALSE(q.mean_t_rb.valid());
}

TEST_CASE("synchronisation point: everybody always transmits", "[oracle]") {
  auto q = run_oracle(table_params(1.0, 20'000));
  REQUIRE(q.p_if.valid());
  CHECK(q.p_if.value == 0.0);
  CHECK(q.goodput.value == 0.0);
}

TEST_CASE("isolated stations never sense a busy channel", "[oracle]") {
  OracleParams prm = table_params(0.05, 20'000);
  prm.r_neighbors = 0;
  prm.n_stations = 10;
  auto q = run_oracle(prm);
  CHECK(q.p_i.value == 1.0);
  CHECK_FALSE(q.mean_t_rb.valid());
  CHECK(q.f_d_given_if.empty());
}

TEST_CASE("oracle rejects a loop that wraps onto itself", "[oracle]") {
  OracleParams prm = table_params(0.01);
  prm.n_stations = 64;
  CHECK_THROWS_AS(run_oracle(prm), Error);
}

TEST_CASE("full quantity set at the saturated access probability", "[oracle][statistical]") {
  const auto q = run_oracle(table_params(0.03125));
  for (const Estimate* e : {&q.p_ii, &q.p_tx_given_idle, &q.p_i, &q.p_of, &q.p_if, &q.goodput}) CHECK(in_unit(*e));
  CHECK(q.p_of.value > 0.0);
  CHECK(q.p_of.value < 1.0);
  CHECK(q.mean_t_rb.value > 32.0);
  REQUIRE(q.f_d_given_if.size() == 16);
  double sum = 0.0;
  for (const auto& f : q.f_d_given_if) sum += f.value;
  CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  // Construction check: the access probability comes back within about three standard errors.
  CHECK(std::fabs(q.p_tx_given_idle.value - 0.03125) <= 1.5 * q.p_tx_given_idle.ci + 1e-12);
  // Goodput computed two ways.
  CHECK(q.goodput.value == Catch::Approx(q.goodput_by_distance).margin(1e-12));
  // Nearer receivers see fewer hidden stations: the whole vector trends down, single bins may wobble.
  CHECK(q.f_d_given_if.front().value > q.f_d_given_if.back().value);
  int violations = 0;
  for (std::size_t d = 1; d < q.f_d_given_if.size(); ++d)
    if (q.f_d_given_if[d].value > q.f_d_given_if[d - 1].value + q.f_d_given_if[d].ci + q.f_d_given_if[d - 1].ci) ++violations;
  CHECK(violations <= 1);
}

TEST_CASE("oracle is deterministic given its seed", "[oracle]") {
  const auto a = run_oracle(table_params(0.01, 20'000));
  const auto b = run_oracle(table_params(0.01, 20'000));
  CHECK(to_json(a).dump() == to_json(b).dump());
  auto other = table_params(0.01, 20'000);
  other.seed = 18;
  CHECK(to_json(run_oracle(other)).dump() != to_json(a).dump());
}

TEST_CASE("busy-run estimator on constructed traces", "[oracle]") {
  SECTION("one isolated frame") {
    std::vector<Sense> t(1, Sense::Idle);
    t.insert(t.end(), 32, Sense::Busy);
    t.push_back(Sense::Idle);
    auto e = estimate_busy_runs({t});
    CHECK(e.value == 32.0);
  }
  SECTION("two hidden frames overlapping by one slot") {
    std::vector<Sense> t(1, Sense::Idle);
    t.insert(t.end(), 63, Sense::Busy);
    t.push_back(Sense::Idle);
    t.push_back(Sense::Idle);
    CHECK(estimate_busy_runs({t}).value == 63.0);
  }
  SECTION("runs touching the window or cut by an own frame are discarded") {
    std::vector<Sense> t = {Sense::Busy, Sense::Busy, Sense::Idle, Sense::Busy, Sense::Transmit, Sense::Idle,
                            Sense::Busy, Sense::Busy, Sense::Busy, Sense::Idle, Sense::Busy};
    CHECK(estimate_busy_runs({t}).value == 3.0);
  }
  SECTION("no complete run is flagged") {
    std::vector<Sense> t(10, Sense::Idle);
    CHECK_FALSE(estimate_busy_runs({t}).valid());
  }
}

TEST_CASE("idle-run parameter on constructed traces", "[oracle]") {
  std::vector<std::uint8_t> all(50, 1);
  CHECK(estimate_idle_run_parameter({all, all}).value == Catch::Approx(1.0 / 50));
  std::vector<std::uint8_t> alt(50);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2;
  CHECK(estimate_idle_run_parameter({alt, alt}).value == 1.0);
  std::vector<std::uint8_t> none(50, 0);
  CHECK_FALSE(estimate_idle_run_parameter({none}).valid());
  // Runs of three separated by one busy station.
  std::vector<std::uint8_t> threes(40);
  for (std::size_t i = 0; i < threes.size(); ++i) threes[i] = i % 4 != 0;
  CHECK(estimate_idle_run_parameter({threes}).value == Catch::Approx(1.0 / 3));
}

TEST_CASE("PCHIP reproduces nodes, flat data and monotone data", "[provider]") {
  Pchip flat({0, 1, 2, 3}, {5, 5, 5, 5});
  CHECK(flat(1.5) == 5.0);
  Pchip mono({0, 1, 2, 4, 5}, {0, 0.1, 2, 2.1, 7});
  CHECK(mono(2.0) == 2.0);
  double prev = -1;
  for (double x = 0; x <= 5.0; x += 0.01) {
    const double y = mono(x);
    CHECK(y >= prev - 1e-12);
    prev = y;
  }
}

TEST_CASE("interpolating provider contract", "[provider]") {
  OracleControls c;
  c.n_stations = 200;
  c.warmup_slots = 5'000;
  c.measure_slots = 40'000;
  const auto dir = std::filesystem::temp_directory_path() / "vbcast_provider_test";
  std::filesystem::remove_all(dir);
  const std::vector<double> grid = {0.002, 0.005, 0.01, 0.02, 0.03125};
  auto p = InterpolatingProvider::build(grid, 32, 16, c, dir.string());

  SECTION("query at a node returns the node") {
    for (const auto& nd : p.nodes()) CHECK(to_json(p.at(nd.p_tx)).dump() == to_json(nd).dump());
  }
  SECTION("outside the hull is an extrapolation error") {
    try {
      p.at(0.001);
      FAIL("expected extrapolation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Extrapolation);
    }
    CHECK_THROWS_AS(p.at(0.05), Error);
  }
  SECTION("interpolated values stay between neighbours for monotone fields") {
    const auto q = p.at(0.015);
    const auto& a = p.nodes()[2];
    const auto& b = p.nodes()[3];
    CHECK(q.p_i.value <= a.p_i.value);
    CHECK(q.p_i.value >= b.p_i.value);
    double sum = 0;
    for (const auto& f : q.f_d_given_if) sum += f.value;
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("busy runs grow with access probability") {
    for (std::size_t k = 1; k < p.nodes().size(); ++k)
      CHECK(p.nodes()[k].mean_t_rb.value >= p.nodes()[k - 1].mean_t_rb.value - p.nodes()[k].mean_t_rb.ci);
  }
  SECTION("cache round-trip is exact") {
    auto again = InterpolatingProvider::build(grid, 32, 16, c, dir.string());
    for (std::size_t k = 0; k < grid.size(); ++k)
      CHECK(to_json(again.nodes()[k]).dump() == to_json(p.nodes()[k]).dump());
  }
  SECTION("a flat field interpolates to the flat value") {
    std::vector<ChannelQuantities> nodes(3);
    for (std::size_t k = 0; k < 3; ++k) {
      nodes[k].p_tx = 0.01 * static_cast<double>(k + 1);
      nodes[k].frame_len_slots = 32;
      nodes[k].r_neighbors = 1;
      nodes[k].p_i = {0.7, 0.0, 1};
      nodes[k].f_d_given_if = {{1.0, 0.0, 1}};
    }
    InterpolatingProvider flat(nodes);
    CHECK(flat.at(0.015).p_i.value == Catch::Approx(0.7).epsilon(1e-15));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid helpers", "[provider]") {
  auto g = log_grid(1e-4, 0.5, 10, {0.03125, 0.25});
  CHECK(std::is_sorted(g.begin(), g.end()));
  CHECK(std::find(g.begin(), g.end(), 0.03125) != g.end());
  CHECK(std::find(g.begin(), g.end(), 0.25) != g.end());
  CHECK(g.front() == 1e-4);
  CHECK(g.back() == 0.5);
  // Seeds depend on the value, not on the position in the grid.
  CHECK(grid_point_seed(1, 0.01) == grid_point_seed(1, 0.01));
  CHECK(grid_point_seed(1, 0.01) != grid_point_seed(1, 0.02));
  CHECK(grid_point_seed(1, 0.01) != grid_point_seed(2, 0.01));
}
