#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vbcast/error.hpp"
#include "vbcast/quantities.hpp"
#include "vbcast/units.hpp"

namespace vbcast {

/// Anything that maps a channel-access probability to hidden-station channel quantities.
template <class P>
concept ChannelSource = requires(const P& p, double x) {
  { p.at(x) } -> std::convertible_to<ChannelQuantities>;
  { p.min_p_tx() } -> std::convertible_to<double>;
  { p.max_p_tx() } -> std::convertible_to<double>;
};

struct QProbs {
  double q_i = 0.0;
  double q_b = 0.0;
  double q_ntp = 0.0;
};

/// Probabilities of at least one arrival during an idle protocol slot, a busy protocol slot,
/// and a non-TX protocol slot of either kind.
inline QProbs q_probs(double lambda_per_slot, double t_ip, double mean_t_bp, double p_i) {
  QProbs q;
  q.q_i = -std::expm1(-lambda_per_slot * t_ip);
  q.q_b = -std::expm1(-lambda_per_slot * mean_t_bp);
  q.q_ntp = p_i * q.q_i + (1.0 - p_i) * q.q_b;
  return q;
}

/// Limiting probability of state {0,0}, i.e. the per-protocol-slot transmission probability.
inline double tau_closed_form(int w, double eta, double p_i, double q_i, double q_b, double q_ntp) {
  require(w >= 3, ErrorKind::Config, "W must be >= 3");
  if (eta >= 1.0) return 2.0 / w;
  require(q_ntp > 0.0, ErrorKind::Degenerate, "no arrivals in non-TX protocol slots with eta < 1");
  (void)q_i;
  const double W = w;
  const double a = (1.0 - q_ntp) / q_ntp;
  const double inner = (1.0 - eta) / q_ntp + 1.0 +
                       (W - 2.0) / 2.0 * (q_b * (1.0 - p_i)) / q_ntp * (1.0 - eta) / (W - 1.0) *
                           (1.0 + a * (1.0 - std::pow(1.0 - q_ntp, W - 2.0))) +
                       (W - 2.0) / 2.0 * eta +
                       (1.0 - eta) / (W - 1.0) *
                           ((W - 3.0) * (W - 2.0) / 2.0 - a * (W - 3.0) + a * a * (1.0 - std::pow(1.0 - q_ntp, W - 3.0)));
  return 1.0 / inner;
}

/// Conditional idle probability of a non-TX protocol slot.
inline double p_idle_conditional(double p_ii, double p_tx_given_idle) {
  require(p_tx_given_idle < 1.0, ErrorKind::Degenerate, "station always transmits after an idle slot");
  return std::clamp(p_ii / (1.0 - p_tx_given_idle), 0.0, 1.0);
}

inline double p_idle_conditional(const ChannelQuantities& q) {
  return p_idle_conditional(q.p_ii.value, q.p_tx_given_idle.value);
}

/// Probability that a frame reaches the head of the queue while the backoff entity sits in
/// {-1,0}: whatever mass the TX state and post-backoff states {-1,1..W-2} leave over.
inline double p_start_post_idle(int w, double eta, double q_ntp) {
  double sum = 0.0;
  for (int m = 1; m <= w - 2; ++m) {
    double geo = 0.0, f = 1.0;
    for (int i = 0; i <= w - 2 - m; ++i, f *= 1.0 - q_ntp) geo += f;
    sum += (1.0 - eta) / (w - 1.0) * q_ntp * geo;
  }
  return 1.0 - eta - sum;
}

/// PMF of the number K of non-TX protocol slots a frame waits, k = 0..W-2.
inline std::vector<double> k_pmf_nonsaturated(int w, double eta, double p_i, double q_i, double q_b, double q_ntp) {
  require(w >= 3, ErrorKind::Config, "W must be >= 3");
  const double W = w;
  std::vector<double> pk(static_cast<std::size_t>(w - 1), eta / (W - 1.0));
  if (eta >= 1.0) return pk;
  require(q_ntp > 0.0, ErrorKind::Degenerate, "no arrivals in non-TX protocol slots with eta < 1");
  const double s0 = p_start_post_idle(w, eta, q_ntp);
  const double idle_branch = (q_i * p_i + q_b * (1.0 - p_i) / (W - 1.0)) / q_ntp;
  const double busy_branch = q_b * (1.0 - p_i) / (W - 1.0) / q_ntp;
  const double post = (1.0 - eta) * q_ntp / (W - 1.0);
  const double r = 1.0 - q_ntp;

  // K = 0 takes the post-backoff start at {-1,1} and the idle branch out of {-1,0}.
  pk[0] += post * (1.0 + r * (1.0 - std::pow(r, W - 3.0)) / q_ntp) + idle_branch * s0;
  for (int k = 1; k <= w - 4; ++k)
    pk[static_cast<std::size_t>(k)] += post * (1.0 + r * (1.0 - std::pow(r, W - 2.0 - (k + 1))) / q_ntp) + busy_branch * s0;
  if (w - 3 >= 1) pk[static_cast<std::size_t>(w - 3)] += post + busy_branch * s0;
  pk[static_cast<std::size_t>(w - 2)] += busy_branch * s0;

  for (double v : pk)
    require(v >= -1e-12, ErrorKind::ModelInconsistency, "negative K probability");
  for (double& v : pk) v = std::max(v, 0.0);
  return pk;
}

inline double mean_k(const std::vector<double>& k_pmf) {
  double m = 0.0;
  for (std::size_t k = 0; k < k_pmf.size(); ++k) m += static_cast<double>(k) * k_pmf[k];
  return m;
}

/// Mean service time in slots: one TX protocol slot plus K non-TX protocol slots.
inline double mean_service_time(int L, const std::vector<double>& k_pmf, double p_i, double mean_t_rb) {
  return (L + 1.0) + mean_k(k_pmf) * (1.0 + (1.0 - p_i) * mean_t_rb);
}

/// Service-time PGF with the busy-run PGF replaced by z^mean_t_rb.
inline double service_time_pgf(double z, int L, const std::vector<double>& k_pmf, double p_i, double mean_t_rb) {
  const double ntp = p_i * z + (1.0 - p_i) * z * std::pow(z, mean_t_rb);
  double s = 0.0, f = 1.0;
  for (double pk : k_pmf) {
    s += pk * f;
    f *= ntp;
  }
  return std::pow(z, L + 1.0) * s;
}

/// Eta of a length-one overwrite queue: an arrival in the idle slot closing the TX protocol slot.
inline double eta_cam(double lambda_per_slot) {
  require(lambda_per_slot >= 0.0, ErrorKind::Config, "arrival rate must be non-negative");
  return -std::expm1(-lambda_per_slot);
}

struct ModelSolution {
  int w = 0;
  int frame_len_slots = 0;
  int r_neighbors = 0;
  double lambda_per_slot = 0.0;
  QueuePolicy queue_policy = QueuePolicy::InfiniteFifo;

  double tau = 0.0, p_tx = 0.0, eta = 0.0, p_i = 1.0;
  double q_i = 0.0, q_b = 0.0, q_ntp = 0.0;
  double mean_t_rb = 0.0, mean_t_bp = 0.0, mean_t_ntp = 0.0, mean_t_bk = 0.0, mean_d_s = 0.0;
  std::vector<double> k_pmf;
  double rho = 0.0, rho_mg1 = 0.0, rho_server = 0.0, b0 = 0.0;
  bool saturated = false;
  double lambda_f_sat = 0.0;  // frames per slot
  double residual = 0.0;
  ChannelQuantities channel;  // at p_tx
};

namespace detail {

/// Bisection bracket for a sign change of f on [lo, hi]; f(lo) and f(hi) must differ in sign.
/// The returned ends keep the signs of the original ends.
template <class F>
std::pair<double, double> bisect_bracket(F&& f, double lo, double hi, double tol, int max_iter = 200) {
  const bool lo_positive = f(lo) > 0.0;
  for (int it = 0; it < max_iter && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if ((f(mid) > 0.0) == lo_positive) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, hi};
}

template <class F>
double bisect(F&& f, double lo, double hi, double tol, int max_iter = 200) {
  const auto [a, b] = bisect_bracket(f, lo, hi, tol, max_iter);
  return 0.5 * (a + b);
}

struct ChannelState {
  ChannelQuantities ch;
  double p_i = 1.0, mean_t_rb = 0.0, mean_t_bp = 0.0, mean_t_ntp = 1.0;
  QProbs q;
};

template <ChannelSource P>
ChannelState channel_state(const P& provider, double tau, double lambda) {
  ChannelState s;
  s.ch = provider.at(tau);
  require(s.ch.p_ii.valid() && s.ch.p_tx_given_idle.valid(), ErrorKind::Degenerate,
          "provider has no idle statistics at p_tx=" + std::to_string(tau));
  s.p_i = p_idle_conditional(s.ch);
  // Without any busy run the busy protocol slot never occurs; its length is then irrelevant.
  s.mean_t_rb = s.ch.mean_t_rb.valid() ? s.ch.mean_t_rb.value : static_cast<double>(s.ch.frame_len_slots);
  s.mean_t_bp = s.mean_t_rb + 1.0;
  s.mean_t_ntp = s.p_i + (1.0 - s.p_i) * s.mean_t_bp;
  s.q = q_probs(lambda, 1.0, s.mean_t_bp, s.p_i);
  return s;
}

inline double rho_server(double b0, double tau, double t_ntp, int L) {
  const double ttp = L + 1.0;
  return ((b0 - tau) * t_ntp + tau * ttp) / ((1.0 - tau) * t_ntp + tau * ttp);
}

inline void fill(ModelSolution& sol, const ChannelState& cs, double tau, double eta) {
  sol.tau = tau;
  sol.p_tx = tau;
  sol.eta = eta;
  sol.p_i = cs.p_i;
  sol.q_i = cs.q.q_i;
  sol.q_b = cs.q.q_b;
  sol.q_ntp = cs.q.q_ntp;
  sol.mean_t_rb = cs.mean_t_rb;
  sol.mean_t_bp = cs.mean_t_bp;
  sol.mean_t_ntp = cs.mean_t_ntp;
  sol.k_pmf = k_pmf_nonsaturated(sol.w, eta, cs.p_i, cs.q.q_i, cs.q.q_b, cs.q.q_ntp);
  sol.mean_t_bk = mean_k(sol.k_pmf) * cs.mean_t_ntp;
  sol.mean_d_s = mean_service_time(sol.frame_len_slots, sol.k_pmf, cs.p_i, cs.mean_t_rb);
  sol.b0 = eta >= 1.0 ? 1.0 : 1.0 - tau * (1.0 - eta) / cs.q.q_ntp;
  sol.rho_server = rho_server(sol.b0, tau, cs.mean_t_ntp, sol.frame_len_slots);
  sol.rho_mg1 = sol.lambda_per_slot * sol.mean_d_s;
  sol.channel = cs.ch;
}

/// Eta at which the closed form reproduces tau under the given channel state; NaN if tau is
/// outside [tau(eta=0), 2/W].
inline double invert_eta(int w, double tau, const ChannelState& cs) {
  auto f = [&](double eta) { return tau_closed_form(w, eta, cs.p_i, cs.q.q_i, cs.q.q_b, cs.q.q_ntp) - tau; };
  const double f0 = f(0.0);
  if (f0 > 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (f(1.0) < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (f0 == 0.0) return 0.0;
  return bisect(f, 0.0, 1.0, 1e-12);
}

}  // namespace detail

inline constexpr double kResidualTolerance = 1e-4;

/// Saturated operating point: p_tx = 2/W, eta = rho = 1.
template <ChannelSource P>
ModelSolution solve_saturated(int w, int L, const P& provider) {
  require(w >= 3, ErrorKind::Config, "W must be >= 3");
  ModelSolution sol;
  sol.w = w;
  sol.frame_len_slots = L;
  const double tau = 2.0 / w;
  const auto cs = detail::channel_state(provider, tau, 0.0);
  sol.r_neighbors = cs.ch.r_neighbors;
  detail::fill(sol, cs, tau, 1.0);
  sol.rho = 1.0;
  sol.rho_server = 1.0;
  sol.rho_mg1 = 1.0;
  sol.saturated = true;
  sol.lambda_f_sat = 1.0 / sol.mean_d_s;
  sol.lambda_per_slot = sol.lambda_f_sat;
  sol.residual = 0.0;
  return sol;
}

/// Infinite-queue operating point below saturation: tau where the M/G/1 utilisation meets the
/// server-busy fraction of the chain, eta recovered from the closed form at every candidate.
template <ChannelSource P>
ModelSolution solve_nonsaturated(int w, int L, double lambda_per_slot, const P& provider) {
  require(lambda_per_slot >= 0.0 && std::isfinite(lambda_per_slot), ErrorKind::Config, "bad arrival rate");
  const ModelSolution sat = solve_saturated(w, L, provider);
  ModelSolution sol;
  sol.w = w;
  sol.frame_len_slots = L;
  sol.r_neighbors = sat.r_neighbors;
  sol.lambda_per_slot = lambda_per_slot;
  sol.lambda_f_sat = sat.lambda_f_sat;
  if (lambda_per_slot == 0.0) {
    // Empty network: nothing is ever sent.
    sol.tau = sol.p_tx = sol.eta = sol.rho = 0.0;
    sol.k_pmf = k_pmf_nonsaturated(w, 1.0, 1.0, 0.0, 0.0, 0.0);
    sol.p_i = 1.0;
    sol.mean_t_ntp = 1.0;
    sol.mean_t_bk = mean_k(sol.k_pmf);
    sol.mean_d_s = mean_service_time(L, sol.k_pmf, 1.0, 0.0);
    sol.b0 = 0.0;
    return sol;
  }
  require(lambda_per_slot < sat.lambda_f_sat, ErrorKind::Infeasible,
          "arrival rate at or above the saturation rate; use the saturated solution");

  const double hi = 2.0 / w;
  double lo = std::max(provider.min_p_tx(), 1e-6);
  require(lo < hi, ErrorKind::Extrapolation, "provider does not reach below 2/W");

  auto state = [&](double tau) { return detail::channel_state(provider, tau, lambda_per_slot); };
  // Smallest tau at which some eta in [0, 1] reproduces it.
  auto feas = [&](double tau) {
    const auto cs = state(tau);
    return tau - tau_closed_form(w, 0.0, cs.p_i, cs.q.q_i, cs.q.q_b, cs.q.q_ntp);
  };
  if (feas(lo) < 0.0) lo = detail::bisect_bracket(feas, lo, hi, 1e-10 * hi).second;

  auto residual = [&](double tau) {
    const auto cs = state(tau);
    double eta = detail::invert_eta(w, tau, cs);
    if (!std::isfinite(eta)) eta = 0.0;
    ModelSolution s;
    s.w = w;
    s.frame_len_slots = L;
    s.lambda_per_slot = lambda_per_slot;
    detail::fill(s, cs, tau, eta);
    return s.rho_mg1 - s.rho_server;
  };
  const double r_lo = residual(lo);
  const double r_hi = residual(hi);
  if (!(r_lo > 0.0 && r_hi < 0.0)) {
    fail(ErrorKind::Infeasible, "utilisation curves do not intersect on the feasible tau range (residual " +
                                    std::to_string(r_lo) + " at tau=" + std::to_string(lo) + ", " +
                                    std::to_string(r_hi) + " at 2/W)");
  }
  const double tau = detail::bisect(residual, lo, hi, 1e-12);
  const auto cs = state(tau);
  double eta = detail::invert_eta(w, tau, cs);
  require(std::isfinite(eta), ErrorKind::Infeasible, "eta outside [0, 1] at the solution");
  detail::fill(sol, cs, tau, eta);
  sol.rho = sol.rho_mg1;
  sol.residual = sol.rho_mg1 - sol.rho_server;
  require(std::fabs(sol.residual) < kResidualTolerance, ErrorKind::Infeasible,
          "fixed point residual " + std::to_string(sol.residual) + " exceeds tolerance");
  return sol;
}

/// Dispatches on the saturation rate.
template <ChannelSource P>
ModelSolution solve_fifo(int w, int L, double lambda_per_slot, const P& provider) {
  ModelSolution sat = solve_saturated(w, L, provider);
  if (lambda_per_slot >= sat.lambda_f_sat) {
    sat.lambda_per_slot = lambda_per_slot;
    sat.rho_mg1 = lambda_per_slot * sat.mean_d_s;
    return sat;
  }
  return solve_nonsaturated(w, L, lambda_per_slot, provider);
}

/// Length-one overwrite queue: eta fixed by the arrival rate, tau from the closed form alone.
template <ChannelSource P>
ModelSolution solve_cam(int w, int L, double lambda_per_slot, const P& provider) {
  require(lambda_per_slot >= 0.0 && std::isfinite(lambda_per_slot), ErrorKind::Config, "bad arrival rate");
  ModelSolution sol;
  sol.w = w;
  sol.frame_len_slots = L;
  sol.lambda_per_slot = lambda_per_slot;
  sol.queue_policy = QueuePolicy::SingleOverwrite;
  const double eta = eta_cam(lambda_per_slot);
  if (lambda_per_slot == 0.0) {
    sol.k_pmf = k_pmf_nonsaturated(w, 1.0, 1.0, 0.0, 0.0, 0.0);
    sol.mean_t_ntp = 1.0;
    sol.mean_d_s = mean_service_time(L, sol.k_pmf, 1.0, 0.0);
    return sol;
  }
  const double hi = 2.0 / w;
  const double lo = std::max(provider.min_p_tx(), 1e-6);
  auto state = [&](double tau) { return detail::channel_state(provider, tau, lambda_per_slot); };
  auto residual = [&](double tau) {
    const auto cs = state(tau);
    return tau - tau_closed_form(w, eta, cs.p_i, cs.q.q_i, cs.q.q_b, cs.q.q_ntp);
  };
  const double r_lo = residual(lo);
  const double r_hi = residual(hi);
  if (r_lo >= 0.0)
    fail(ErrorKind::Extrapolation, "CAM solution lies below the provider range (tau < " + std::to_string(lo) + ")");
  require(r_hi > 0.0, ErrorKind::Infeasible, "no CAM fixed point below 2/W");
  const double tau = detail::bisect(residual, lo, hi, 1e-13);
  const auto cs = state(tau);
  detail::fill(sol, cs, tau, eta);
  sol.r_neighbors = cs.ch.r_neighbors;
  sol.residual = residual(tau);
  sol.rho = sol.rho_server;
  require(std::fabs(sol.residual) < kResidualTolerance, ErrorKind::Infeasible, "CAM fixed point did not converge");
  return sol;
}

}  // namespace vbcast
