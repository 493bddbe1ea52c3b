#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "vbcast/error.hpp"
#include "vbcast/scenario.hpp"

namespace vbcast {

/// One reception opportunity: `receiver` is the neighbour at index `slot_in_sender` of the
/// sender's neighbour list and did not start transmitting together with the sender.
struct ReceptionEvent {
  std::uint32_t sender;
  std::uint32_t receiver;
  std::uint32_t pair;  // flat index sender * stride + slot_in_sender, stable for the run
  int distance;        // topological distance
  std::int64_t start_slot;
  bool interference_free;
};

/// Slot-synchronous broadcast channel on a static neighbourhood graph.
///
/// A station senses the slot busy iff at least one neighbour transmits in it. A frame from s
/// occupying [t0, t0 + L) is received interference-free at neighbour r iff r did not start at
/// t0 and during every slot of the frame s was the only transmitter among r's neighbours.
/// (r cannot start later inside the frame because it senses s.)
class SlottedChannel {
 public:
  static constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::min() / 4;

  SlottedChannel(const ScenarioSnapshot& scenario, int frame_len)
      : frame_len_(frame_len),
        adj_(&scenario.neighbor_sets),
        busy_(scenario.n_stations(), 0),
        tx_end_(scenario.n_stations(), kNever),
        last_start_(scenario.n_stations(), kNever),
        last_bad_(scenario.n_stations(), kNever),
        ending_(static_cast<std::size_t>(frame_len)) {
    require(frame_len >= 1, ErrorKind::Config, "frame length must be >= 1");
    const std::size_t n = scenario.n_stations();
    stride_ = 0;
    for (const auto& ns : scenario.neighbor_sets) stride_ = std::max(stride_, ns.size());
    distance_.assign(n * stride_, 0);
    for (std::size_t s = 0; s < n; ++s) {
      const auto& ns = scenario.neighbor_sets[s];
      for (std::size_t j = 0; j < ns.size(); ++j)
        distance_[s * stride_ + j] = scenario.topological_distance(s, ns[j]);
    }
  }

  std::size_t n() const { return busy_.size(); }
  std::size_t pair_stride() const { return stride_; }
  std::size_t pair_count() const { return n() * stride_; }
  int frame_len() const { return frame_len_; }
  const std::vector<std::uint32_t>& neighbors(std::size_t s) const { return (*adj_)[s]; }
  int pair_distance(std::size_t pair) const { return distance_[pair]; }

  bool transmitting(std::size_t i, std::int64_t t) const { return tx_end_[i] >= t; }
  int busy_count(std::size_t i) const { return busy_[i]; }
  std::int64_t last_start(std::size_t i) const { return last_start_[i]; }

  /// Station i transmits during slots [t, t + L).
  void begin_transmission(std::size_t i, std::int64_t t) {
    tx_end_[i] = t + frame_len_ - 1;
    last_start_[i] = t;
    for (std::uint32_t j : (*adj_)[i]) ++busy_[j];
    ending_[static_cast<std::size_t>((t + frame_len_ - 1) % frame_len_)].push_back(static_cast<std::uint32_t>(i));
  }

  /// Records interference at a listening station for slot t. Call once per slot for every
  /// station that is not transmitting, after all starts of slot t.
  void observe(std::size_t i, std::int64_t t) {
    if (busy_[i] >= 2) last_bad_[i] = t;
  }

  /// Finishes frames whose last slot is t and reports every reception opportunity.
  template <class Sink>
  void end_slot(std::int64_t t, Sink&& sink) {
    auto& list = ending_[static_cast<std::size_t>(t % frame_len_)];
    for (std::uint32_t s : list) {
      const std::int64_t t0 = t - frame_len_ + 1;
      const auto& ns = (*adj_)[s];
      for (std::size_t j = 0; j < ns.size(); ++j) {
        const std::uint32_t r = ns[j];
        --busy_[r];
        if (last_start_[r] == t0) continue;  // synchronous start, half duplex
        const std::size_t pair = s * stride_ + j;
        sink(ReceptionEvent{s, r, static_cast<std::uint32_t>(pair), distance_[pair], t0, last_bad_[r] < t0});
      }
    }
    list.clear();
  }

 private:
  int frame_len_;
  const std::vector<std::vector<std::uint32_t>>* adj_;
  std::size_t stride_ = 0;
  std::vector<int> distance_;
  std::vector<int> busy_;
  std::vector<std::int64_t> tx_end_;
  std::vector<std::int64_t> last_start_;
  std::vector<std::int64_t> last_bad_;
  std::vector<std::vector<std::uint32_t>> ending_;
};

/// Ring of n stations, each hearing exactly r_per_side stations on either side.
inline ScenarioSnapshot ring_scenario(std::size_t n, int r_per_side) {
  require(r_per_side >= 0, ErrorKind::Scenario, "neighbour count must be non-negative");
  require(n > static_cast<std::size_t>(2 * r_per_side), ErrorKind::Scenario, "ring too small");
  return build_loop_topology(n, 1.0, static_cast<double>(r_per_side) + 0.5);
}

}  // namespace vbcast
