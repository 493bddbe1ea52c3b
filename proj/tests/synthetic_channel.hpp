#pragma once

#include <cmath>

#include "vbcast/provider.hpp"

namespace vbcast::testing {

// Smooth closed-form stand-in for the channel oracle: every neighbour transmits independently.
inline ChannelQuantities synthetic_channel(double p, int L, int R) {
  ChannelQuantities q;
  q.p_tx = p;
  q.frame_len_slots = L;
  q.r_neighbors = R;
  const double quiet = std::pow(1.0 - p, 2.0 * R);
  q.p_tx_given_idle = {p, 0.0, 1};
  q.p_ii = {(1.0 - p) * quiet, 0.0, 1};
  q.p_i = q.p_ii;
  q.mean_t_rb = {L * (1.0 + 10.0 * p), 0.0, 1};
  q.p_of = {1.0 - std::pow(1.0 - p, L), 0.0, 1};
  // Hidden starters anywhere in the frame spoil it.
  q.p_if = {quiet * std::pow(1.0 - p, static_cast<double>(R) * L), 0.0, 1};
  const double t_ntp = quiet + (1.0 - quiet) * (q.mean_t_rb.value + 1.0);
  q.mean_t_txp = {(L + 1.0) + (1.0 / std::max(p, 1e-12) - 1.0) * t_ntp, 0.0, 1};
  q.mean_t_rxp = {q.mean_t_txp.value / (2.0 * R), 0.0, 1};
  double norm = 0.0;
  for (int d = 1; d <= R; ++d) norm += std::pow(1.0 - p, d);
  for (int d = 1; d <= R; ++d) q.f_d_given_if.push_back({std::pow(1.0 - p, d) / norm, 0.0, 1});
  return q;
}

inline FunctionProvider synthetic_provider(int L, int R, double lo = 1e-6, double hi = 0.5) {
  return FunctionProvider([L, R](double p) { return synthetic_channel(p, L, R); }, lo, hi);
}

}  // namespace vbcast::testing
