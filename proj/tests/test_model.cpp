#include <catch_amalgamated.hpp>

#include <numeric>

#include "chain_oracle.hpp"
#include "synthetic_channel.hpp"
#include "vbcast/model.hpp"
#include "vbcast/rng.hpp"

using namespace vbcast;
using Catch::Approx;

namespace {

// Monte-Carlo of the same chain, recording the counter each frame starts its backoff with.
std::vector<double> simulate_k(int w, double eta, double p_i, double q_i, double q_b, std::int64_t frames,
                               std::uint64_t seed) {
  Rng rng(seed);
  const int n = w - 1;
  std::vector<std::int64_t> hist(static_cast<std::size_t>(n), 0);
  std::int64_t got = 0;
  bool backoff = true;
  int k = 0;
  auto record = [&](int kk) {
    ++hist[static_cast<std::size_t>(kk)];
    ++got;
  };
  while (got < frames) {
    if (backoff && k == 0) {
      const int c = static_cast<int>(rng.uniform_int(0, n - 1));
      backoff = rng.uniform() < eta;
      k = c;
      if (backoff) record(c);
      continue;
    }
    if (backoff) {
      --k;
      continue;
    }
    const bool idle = rng.uniform() < p_i;
    const bool arrival = rng.uniform() < (idle ? q_i : q_b);
    if (k > 0) {
      --k;
      if (arrival) {
        backoff = true;
        record(k);
      }
    } else if (arrival) {
      backoff = true;
      k = idle ? 0 : static_cast<int>(rng.uniform_int(0, n - 1));
      record(k);
    }
  }
  std::vector<double> out;
  for (auto h : hist) out.push_back(static_cast<double>(h) / static_cast<double>(got));
  return out;
}

double tau_of(int w, double eta, double p_i, double q_i, double q_b) {
  return tau_closed_form(w, eta, p_i, q_i, q_b, p_i * q_i + (1.0 - p_i) * q_b);
}

}  // namespace

TEST_CASE("arrival probabilities per protocol slot", "[model]") {
  const auto q = q_probs(0.013, 1.0, 33.0, 0.5);
  CHECK(q.q_i == Approx(0.0129159).epsilon(1e-5));
  CHECK(q.q_b == Approx(0.348840).epsilon(1e-5));
  CHECK(q.q_ntp == Approx(0.5 * q.q_i + 0.5 * q.q_b).epsilon(1e-15));
  const auto none = q_probs(0.0, 1.0, 33.0, 0.5);
  CHECK(none.q_ntp == 0.0);
}

TEST_CASE("closed form reduces to 2/W when the queue never empties", "[model]") {
  for (int w = 3; w <= 1024; ++w) CHECK(tau_closed_form(w, 1.0, 0.7, 0.1, 0.5, 0.2) == 2.0 / w);
  CHECK(tau_closed_form(64, 1.0, 0.3, 0.0, 0.0, 0.0) == 0.03125);
  CHECK_THROWS_AS(tau_closed_form(2, 1.0, 0.3, 0.1, 0.1, 0.1), Error);
  try {
    tau_closed_form(64, 0.5, 0.3, 0.0, 0.0, 0.0);
    FAIL("expected degenerate input");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("closed form equals the stationary solve of the backoff chain", "[model][property]") {
  Rng rng(20240611);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(3, 64));
    const double eta = rng.uniform();
    const double p_i = 0.01 + 0.98 * rng.uniform();
    const double q_i = 1e-3 + 0.5 * rng.uniform();
    const double q_b = q_i + (1.0 - q_i) * rng.uniform();
    const double q = p_i * q_i + (1.0 - p_i) * q_b;
    const auto chain = testing::solve_chain(w, eta, p_i, q_i, q_b);
    const double tau = tau_of(w, eta, p_i, q_i, q_b);
    worst = std::max(worst, std::fabs(tau - chain.tau));
    REQUIRE(tau == Approx(chain.tau).margin(1e-9).epsilon(1e-9));
    REQUIRE(1.0 - tau * (1.0 - eta) / q == Approx(chain.b0).margin(1e-9));
  }
  INFO("largest absolute difference " << worst);
  CHECK(worst < 1e-9);
}

TEST_CASE("conditional idle probability", "[model]") {
  CHECK(p_idle_conditional(0.9, 0.05) == Approx(0.947368421).epsilon(1e-8));
  CHECK(p_idle_conditional(0.0, 0.5) == 0.0);
  try {
    p_idle_conditional(0.5, 1.0);
    FAIL("expected degenerate input");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("K distribution: saturated shape and normalisation", "[model][property]") {
  const auto sat = k_pmf_nonsaturated(4, 1.0, 0.5, 0.1, 0.2, 0.15);
  REQUIRE(sat.size() == 3);
  for (double v : sat) CHECK(v == Approx(1.0 / 3).epsilon(1e-15));
  CHECK(mean_k(k_pmf_nonsaturated(64, 1.0, 1.0, 0, 0, 0)) == Approx(31.0));

  Rng rng(77);
  for (int trial = 0; trial < 10'000; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(3, 128));
    const double eta = rng.uniform();
    const double p_i = rng.uniform();
    const double q_i = 1e-4 + 0.5 * rng.uniform();
    const double q_b = q_i + (1.0 - q_i) * rng.uniform();
    const auto pk = k_pmf_nonsaturated(w, eta, p_i, q_i, q_b, p_i * q_i + (1.0 - p_i) * q_b);
    REQUIRE(pk.size() == static_cast<std::size_t>(w - 1));
    REQUIRE(std::accumulate(pk.begin(), pk.end(), 0.0) == Approx(1.0).margin(1e-9));
    for (double v : pk) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("K distribution matches a Monte-Carlo run of the chain", "[model][statistical]") {
  for (auto [w, eta, p_i, q_i, q_b] : {std::tuple{8, 0.3, 0.6, 0.05, 0.4}, {3, 0.5, 0.3, 0.2, 0.7}, {16, 0.1, 0.9, 0.01, 0.2}}) {
    const double q = p_i * q_i + (1.0 - p_i) * q_b;
    const auto pk = k_pmf_nonsaturated(w, eta, p_i, q_i, q_b, q);
    const std::int64_t frames = 1'000'000;
    const auto mc = simulate_k(w, eta, p_i, q_i, q_b, frames, 4242 + static_cast<std::uint64_t>(w));
    for (std::size_t k = 0; k < pk.size(); ++k) {
      const double sigma = std::sqrt(pk[k] * (1.0 - pk[k]) / static_cast<double>(frames));
      INFO("w=" << w << " k=" << k << " model " << pk[k] << " chain " << mc[k]);
      CHECK(std::fabs(mc[k] - pk[k]) <= 3.0 * sigma + 1e-12);
    }
  }
}

TEST_CASE("mean service time and its generating function", "[model]") {
  const auto sat = k_pmf_nonsaturated(64, 1.0, 1.0, 0, 0, 0);
  CHECK(mean_service_time(32, sat, 1.0, 40.0) == Approx(64.0));
  std::vector<double> at_zero(63, 0.0);
  at_zero[0] = 1.0;
  CHECK(mean_service_time(32, at_zero, 0.4, 40.0) == 33.0);
  for (double z : {0.3, 0.9, 1.0}) CHECK(service_time_pgf(z, 32, at_zero, 0.4, 40.0) == Approx(std::pow(z, 33.0)).epsilon(1e-14));

  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(3, 64));
    const int L = static_cast<int>(rng.uniform_int(1, 64));
    const double eta = rng.uniform();
    const double p_i = rng.uniform();
    const double q_i = 1e-3 + 0.2 * rng.uniform();
    const double q_b = q_i + (1.0 - q_i) * rng.uniform();
    const double t_rb = L * (1.0 + rng.uniform());
    const auto pk = k_pmf_nonsaturated(w, eta, p_i, q_i, q_b, p_i * q_i + (1.0 - p_i) * q_b);
    REQUIRE(service_time_pgf(1.0, L, pk, p_i, t_rb) == Approx(1.0).margin(1e-12));
    auto g = [&](double z) { return service_time_pgf(z, L, pk, p_i, t_rb); };
    // Fourth-order central stencil; the second-order one is too coarse for services of thousands of slots.
    const double h = 1e-6;
    const double deriv = (g(1 - 2 * h) - 8 * g(1 - h) + 8 * g(1 + h) - g(1 + 2 * h)) / (12 * h);
    REQUIRE(deriv == Approx(mean_service_time(L, pk, p_i, t_rb)).epsilon(1e-6));
  }
}

TEST_CASE("overwrite-queue eta", "[model]") {
  CHECK(eta_cam(10.0 * 13e-6) == Approx(1.29992e-4).epsilon(1e-5));
  CHECK(eta_cam(0.0) == 0.0);
  CHECK_THROWS_AS(eta_cam(-1.0), Error);
}

TEST_CASE("saturated operating points", "[model]") {
  const auto p = testing::synthetic_provider(32, 16);
  const auto s64 = solve_saturated(64, 32, p);
  CHECK(s64.p_tx == 0.03125);
  CHECK(s64.eta == 1.0);
  CHECK(s64.rho == 1.0);
  CHECK(s64.lambda_f_sat == Approx(1.0 / s64.mean_d_s));
  CHECK(solve_saturated(4, 32, p).p_tx == 0.5);
}

TEST_CASE("infinite-queue solver on a closed-form channel", "[model][property]") {
  const auto p = testing::synthetic_provider(32, 16);
  const auto sat = solve_saturated(64, 32, p);
  std::vector<ModelSolution> sweep;
  for (double frac : {0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.97}) {
    const auto s = solve_fifo(64, 32, frac * sat.lambda_f_sat, p);
    CHECK(std::fabs(s.residual) < kResidualTolerance);
    CHECK(s.eta >= 0.0);
    CHECK(s.eta <= 1.0);
    CHECK(s.p_tx > 0.0);
    CHECK(s.p_tx <= 2.0 / 64);
    CHECK(s.rho == Approx(s.lambda_per_slot * s.mean_d_s));
    CHECK(std::accumulate(s.k_pmf.begin(), s.k_pmf.end(), 0.0) == Approx(1.0).margin(1e-9));
    sweep.push_back(s);
  }
  for (std::size_t k = 1; k < sweep.size(); ++k) {
    CHECK(sweep[k].p_tx > sweep[k - 1].p_tx);
    CHECK(sweep[k].eta >= sweep[k - 1].eta);
    CHECK(sweep[k].rho > sweep[k - 1].rho);
    CHECK(sweep[k].p_i < sweep[k - 1].p_i);
  }

  SECTION("no load means no transmissions") {
    const auto z = solve_fifo(64, 32, 0.0, p);
    CHECK(z.p_tx == 0.0);
    CHECK(z.rho == 0.0);
    CHECK(z.mean_d_s == Approx(64.0));
  }
  SECTION("continuous at the saturation boundary") {
    const auto near = solve_fifo(64, 32, 0.999 * sat.lambda_f_sat, p);
    CHECK(near.p_tx == Approx(2.0 / 64).epsilon(0.02));
    CHECK(near.rho == Approx(1.0).margin(0.01));
    const auto over = solve_fifo(64, 32, 2.0 * sat.lambda_f_sat, p);
    CHECK(over.saturated);
    CHECK(over.p_tx == 2.0 / 64);
    CHECK_THROWS_AS(solve_nonsaturated(64, 32, 2.0 * sat.lambda_f_sat, p), Error);
  }
}

TEST_CASE("overwrite-queue solver on a closed-form channel", "[model][property]") {
  const auto p = testing::synthetic_provider(32, 16);
  const auto z = solve_cam(64, 32, 0.0, p);
  CHECK(z.p_tx == 0.0);
  CHECK(z.eta == 0.0);
  double prev = 0.0;
  for (double hz : {5.0, 10.0, 40.0, 100.0, 300.0, 1000.0}) {
    const auto s = solve_cam(64, 32, rate_per_slot(hz, kSlotSeconds), p);
    CHECK(std::fabs(s.residual) < kResidualTolerance);
    CHECK(s.eta == Approx(eta_cam(s.lambda_per_slot)));
    CHECK(s.p_tx > prev);
    CHECK(s.p_tx <= 2.0 / 64);
    CHECK(s.rho >= 0.0);
    CHECK(s.rho <= 1.0);
    prev = s.p_tx;
  }
}
