#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vbcast/stats.hpp"

namespace vbcast {

/// Hidden-station channel quantities seen by one station of a homogeneous ring whose stations
/// start a frame with probability p_tx after every slot they sense idle.
///
/// Definitions (all event averages over the measurement window):
///  - p_ii: P(station does not start and senses idle at t+1 | sensed idle at t). Joint, so
///    that p_i = p_ii / (1 - p_tx_given_idle).
///  - p_tx_given_idle: P(station starts at t+1 | sensed idle at t).
///  - mean_t_rb: mean maximal run of busy-sensed slots at a listening station.
///  - p_i: idle protocol slots over non-transmission protocol slots, counted directly.
///  - p_of: 1 / mean length of maximal runs of ring-consecutive stations sensing idle together.
///  - p_if, f_d_given_if: fraction of reception opportunities that are interference-free and
///    their distribution over topological distance 1..R.
///  - mean_t_rxp: mean gap between starts of consecutive reception opportunities at a station,
///    counting senders on both sides.
///  - mean_t_txp: mean gap between starts of a station's own frames.
///  - goodput: fraction of station-time spent receiving interference-free frames.
struct ChannelQuantities {
  double p_tx = 0.0;
  int frame_len_slots = 0;
  int r_neighbors = 0;

  Estimate p_ii, p_tx_given_idle, mean_t_rb, p_i, p_of, p_if, mean_t_rxp, mean_t_txp, goodput;
  std::vector<Estimate> f_d_given_if;  // index d - 1

  // Diagnostics measured directly, used by duality checks.
  std::vector<Estimate> t_ui_direct;     // gap between IF receptions from one transmitter at d
  std::vector<Estimate> p_fif_direct;    // IF fraction of reception opportunities at d
  std::vector<Estimate> p_async_direct;  // fraction of frames whose receiver at d was not synchronous
  double goodput_by_distance = std::numeric_limits<double>::quiet_NaN();
  std::int64_t busy_run_samples = 0;
  std::vector<std::string> warnings;
};

}  // namespace vbcast
