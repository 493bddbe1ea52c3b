#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "vbcast/config.hpp"
#include "vbcast/scenario.hpp"
#include "vbcast/units.hpp"

using namespace vbcast;
using Catch::Approx;

TEST_CASE("seconds and slots convert through the slot duration", "[units]") {
  CHECK(seconds_to_slots(13e-6, 13e-6) == 1.0);
  CHECK(seconds_to_slots(416e-6, 13e-6) == Approx(32.0).epsilon(1e-15));
  CHECK(seconds_to_slots(0.0, 13e-6) == 0.0);
  CHECK_THROWS_AS(seconds_to_slots(1.0, 0.0), Error);
  CHECK_THROWS_AS(slots_to_seconds(1.0, -1.0), Error);
  CHECK(rate_per_slot(100.0, 13e-6) == Approx(1.3e-3));
}

TEST_CASE("slots round-trip exactly for integers", "[units][property]") {
  for (std::int64_t k = 0; k <= 100'000; k += 7) {
    const double sigma = 13e-6;
    // Round-trip through seconds; integer counts survive because both steps are one rounding each.
    CHECK(std::round(seconds_to_slots(slots_to_seconds(static_cast<double>(k), sigma), sigma)) == static_cast<double>(k));
    CHECK(seconds_to_slots(slots_to_seconds(static_cast<double>(k), sigma), sigma) == Approx(static_cast<double>(k)).margin(1e-9));
  }
}

TEST_CASE("payload bytes map onto frame slots", "[units]") {
  CHECK(frame_bytes_to_slots(200) == 32);
  CHECK(frame_bytes_to_slots(512) == 64);
  CHECK(frame_bytes_to_slots(356) == 48);
  CHECK_THROWS_AS(frame_bytes_to_slots(0), Error);
  try {
    frame_bytes_to_slots(200, PhyMode::Bpsk12);
    FAIL("expected unsupported mode");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedMode);
  }
  int prev = 0;
  for (std::int64_t b = 1; b <= 4000; ++b) {
    const int l = frame_bytes_to_slots(b);
    CHECK(l >= prev);
    prev = l;
  }
}

TEST_CASE("protocol config invariants", "[units]") {
  ProtocolConfig p;
  CHECK(p.w() == 64);
  p.cw_min = 1;
  CHECK_THROWS_AS(p.validate(), Error);
  p.cw_min = 2;
  CHECK_NOTHROW(p.validate());
  p.frame_len_slots = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  TrafficConfig t;
  t.lambda_f = -1;
  CHECK_THROWS_AS(t.validate(), Error);
  t.lambda_f = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(t.validate(), Error);
  CHECK(parse_queue_policy("SINGLE_OVERWRITE") == QueuePolicy::SingleOverwrite);
  CHECK_THROWS_AS(parse_queue_policy("lifo"), Error);
}

namespace {
int one_side_count(const ScenarioSnapshot& s, std::size_t i) {
  int c = 0;
  for (auto j : s.neighbor_sets[i]) {
    const double dx = std::fmod(s.positions[j].x_m - s.positions[i].x_m + s.loop_length_m, s.loop_length_m);
    if (dx > 0 && dx < s.loop_length_m / 2) ++c;
  }
  return c;
}
}  // namespace

TEST_CASE("loop topology has R = floor(r beta) per side", "[scenario]") {
  auto s = build_loop_topology(800, 1.0 / 30, 480);
  CHECK(s.effective_r == 16);
  CHECK(s.n_stations() == 800);
  for (std::size_t i = 0; i < 800; ++i) CHECK(one_side_count(s, i) == 16);

  auto small = build_loop_topology(10, 1.0, 1.0);
  CHECK(small.effective_r == 1);
  CHECK(small.neighbor_sets[0] == std::vector<std::uint32_t>{1, 9});

  // Boundary: count in-range stations directly.
  CHECK(build_loop_topology(800, 1.0 / 30, 481).effective_r == 16);
  CHECK(build_loop_topology(800, 1.0 / 30, 479).effective_r == 15);

  CHECK_THROWS_AS(build_loop_topology(10, 1.0, 5.0), Error);
  CHECK_THROWS_AS(build_loop_topology(1, 1.0, 0.5), Error);
}

TEST_CASE("loop neighbour sets are symmetric and translation invariant", "[scenario][property]") {
  for (auto [n, beta, r] : {std::tuple{800, 1.0 / 30, 480.0}, {101, 0.5, 13.0}, {64, 0.2, 20.0}}) {
    auto s = build_loop_topology(static_cast<std::size_t>(n), beta, r);
    std::set<std::int64_t> ref;
    for (auto j : s.neighbor_sets[0]) ref.insert(static_cast<std::int64_t>(j));
    for (std::size_t i = 0; i < s.n_stations(); ++i) {
      std::set<std::int64_t> offs;
      for (auto j : s.neighbor_sets[i]) {
        offs.insert((static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i) + n) % n);
        const auto& back = s.neighbor_sets[j];
        CHECK(std::binary_search(back.begin(), back.end(), static_cast<std::uint32_t>(i)));
      }
      CHECK(offs == ref);
    }
  }
}

TEST_CASE("effective station count is the ceiling of the mean", "[scenario]") {
  CHECK(effective_station_count(15.98) == 16);
  CHECK(effective_station_count(16.0) == 16);
  CHECK(effective_station_count(15.01) == 16);
  CHECK(effective_station_count(16.0 + 1e-12) == 16);
}

TEST_CASE("position snapshots parse, validate and round-trip", "[scenario]") {
  SECTION("two distant stations have no neighbours") {
    std::istringstream in("# two\nloop_length_m=1000 sensing_range_m=10\n1 0 0\n2 500 1\n");
    auto s = parse_position_snapshot(in);
    CHECK(s.neighbor_sets[0].empty());
    CHECK(s.neighbor_sets[1].empty());
  }
  SECTION("three stations in range see each other") {
    std::istringstream in("loop_length_m=1000 sensing_range_m=10\n1 0\n2 4\n3 8\n");
    auto s = parse_position_snapshot(in);
    for (std::size_t i = 0; i < 3; ++i) CHECK(s.neighbor_sets[i].size() == 2);
  }
  SECTION("malformed line reports the line number") {
    std::istringstream in("loop_length_m=1000 sensing_range_m=10\n1 0\n2 abc\n");
    try {
      parse_position_snapshot(in);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SECTION("duplicate id is a validation error") {
    std::istringstream in("loop_length_m=1000 sensing_range_m=10\n1 0\n1 4\n");
    try {
      parse_position_snapshot(in);
      FAIL("expected validation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Validation);
    }
  }
  SECTION("canonical form round-trips byte for byte") {
    const std::string text = "loop_length_m=1000.5 sensing_range_m=12.25\n7 0.125 2\n3 10 0\n9 999.75\n";
    std::istringstream in(text);
    auto s = parse_position_snapshot(in);
    CHECK(serialize_position_snapshot(s) == text);
    const auto path = std::filesystem::temp_directory_path() / "vbcast_snapshot_roundtrip.txt";
    save_position_snapshot(s, path.string());
    auto again = load_position_snapshot(path.string());
    CHECK(serialize_position_snapshot(again) == text);
    std::filesystem::remove(path);
  }
  SECTION("co-located vehicles merge into one station") {
    std::istringstream in("loop_length_m=1000 sensing_range_m=10\n1 100 0\n2 100 1\n3 105 0\n4 113 0\n5 300 0\n6 300 2\n");
    auto s = parse_position_snapshot(in);
    CHECK(s.group_count == 4);
    CHECK(s.group_of[0] == s.group_of[1]);
    CHECK(s.group_of[4] == s.group_of[5]);
    CHECK(s.group_of[0] != s.group_of[2]);
    CHECK(s.topological_distance(0, 1) == 0);
    CHECK(s.topological_distance(0, 2) == 1);
    CHECK(s.topological_distance(0, 3) == 2);
  }
  SECTION("merge tolerance joins nearby vehicles") {
    // 100 and 100.5 differ only in whether they hear 110.3.
    std::istringstream exact("loop_length_m=1000 sensing_range_m=10\n1 100\n2 100.5\n3 110.3\n");
    std::istringstream loose("loop_length_m=1000 sensing_range_m=10\n1 100\n2 100.5\n3 110.3\n");
    auto a = parse_position_snapshot(exact);
    auto b = parse_position_snapshot(loose, 1.0);
    CHECK(a.group_count == 3);
    CHECK(b.group_count == 2);
  }
}

TEST_CASE("synthetic multi-lane snapshot matches the requested density", "[scenario]") {
  auto s = calibrate_multilane_snapshot(800, 0.11, 184.6, 15.98, 3, 7);
  CHECK(s.n_stations() == 800);
  CHECK(s.effective_r == 16);
  CHECK(s.r_one_side_mean <= 15.98 + 1e-12);
  CHECK(s.r_one_side_mean > 15.5);
  CHECK(s.r_one_side_vehicles > s.r_one_side_mean);
  CHECK(s.r_one_side_vehicles == Approx(0.11 * 184.6).epsilon(0.1));
  // Lanes never affect range: every vehicle sharing an x shares a group.
  for (std::size_t i = 1; i < s.n_stations(); ++i)
    if (s.positions[i].x_m == s.positions[i - 1].x_m) CHECK(s.group_of[i] == s.group_of[i - 1]);
  // Deterministic given the seed.
  auto again = calibrate_multilane_snapshot(800, 0.11, 184.6, 15.98, 3, 7);
  CHECK(serialize_position_snapshot(again) == serialize_position_snapshot(s));
}

TEST_CASE("config documents accept the key = value subset", "[config]") {
  auto doc = ConfigDocument::parse_string(
      "# comment\nseed = 42\n[traffic]\nlambda_f = 1_300 # inline\nqueue_policy = \"cam\"\n"
      "[sweep]\nvalues = [10, 20.5, 3e2]\nengines = [\"analytic\"]\n[sim]\nstrict_80211 = true\n");
  CHECK(doc.integer("seed", 0) == 42);
  CHECK(doc.number("traffic.lambda_f", 0) == 1300.0);
  CHECK(doc.string("traffic.queue_policy", "") == "cam");
  CHECK(doc.numbers("sweep.values", {}) == std::vector<double>{10, 20.5, 300});
  CHECK(doc.strings("sweep.engines", {}) == std::vector<std::string>{"analytic"});
  CHECK(doc.boolean("sim.strict_80211", false));
  CHECK(doc.number("missing", 7.0) == 7.0);
  CHECK(doc.unused_keys().empty());

  auto bad = [](const std::string& text) {
    try {
      ConfigDocument::parse_string(text);
    } catch (const Error& e) {
      return e.kind() == ErrorKind::Config;
    }
    return false;
  };
  CHECK(bad("novalue\n"));
  CHECK(bad("a = 1\na = 2\n"));
  CHECK(bad("a = 1x\n"));
  CHECK(bad("[unterminated\n"));
  CHECK(bad("a = [1, 2\n"));
  auto typed = ConfigDocument::parse_string("a = \"text\"\n");
  CHECK_THROWS_AS(typed.number("a", 0), Error);
  auto frac = ConfigDocument::parse_string("n = 2.5\n");
  CHECK_THROWS_AS(frac.integer("n", 0), Error);
}
