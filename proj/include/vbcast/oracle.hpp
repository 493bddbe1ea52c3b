#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vbcast/channel.hpp"
#include "vbcast/error.hpp"
#include "vbcast/quantities.hpp"
#include "vbcast/rng.hpp"
#include "vbcast/stats.hpp"

namespace vbcast {

/// Controls of one p-persistent CSMA run on an equidistant ring.
struct OracleParams {
  double p_tx = 0.03125;
  int frame_len_slots = 32;
  int r_neighbors = 16;
  std::size_t n_stations = 800;
  std::int64_t warmup_slots = 20'000;
  std::int64_t measure_slots = 400'000;
  std::uint64_t seed = 1;
  std::size_t batches = 20;
  std::int64_t idle_run_stride = 16;  // slots between p_of samples
  std::ostream* trace = nullptr;      // optional CSV dump "slot,station,state"

  void validate() const {
    require(p_tx >= 0.0 && p_tx <= 1.0, ErrorKind::Config, "p_tx must lie in [0, 1]");
    require(frame_len_slots >= 1, ErrorKind::Config, "frame length must be >= 1");
    require(r_neighbors >= 0, ErrorKind::Config, "r_neighbors must be >= 0");
    require(n_stations > 4 * static_cast<std::size_t>(r_neighbors), ErrorKind::Config,
            "n_stations must exceed 4 * r_neighbors");
    require(n_stations >= 2, ErrorKind::Config, "need at least two stations");
    require(warmup_slots >= 0 && measure_slots > 0, ErrorKind::Config, "bad run length");
    require(batches >= 2, ErrorKind::Config, "need at least two batches");
    require(idle_run_stride >= 1, ErrorKind::Config, "idle_run_stride must be >= 1");
  }
};

/// Length statistics of maximal busy runs at listening stations. Runs that start before
/// `begin`, are cut by the station's own transmission, or are still open at the end are
/// discarded.
class BusyRunTracker {
 public:
  enum class Sense : std::uint8_t { Idle, Busy, Transmit };

  BusyRunTracker(std::size_t stations, std::int64_t begin, std::int64_t end, BatchClock clock)
      : run_(stations, 0), start_(stations, 0), begin_(begin), end_(end), clock_(clock), stats_(clock.batches) {}

  void step(std::size_t i, std::int64_t t, Sense s) {
    switch (s) {
      case Sense::Busy:
        if (run_[i] == 0) start_[i] = t;
        ++run_[i];
        break;
      case Sense::Idle:
        if (run_[i] > 0 && start_[i] >= begin_ && t < end_) stats_.add(clock_(start_[i]), static_cast<double>(run_[i]));
        run_[i] = 0;
        break;
      case Sense::Transmit:
        run_[i] = 0;
        break;
    }
  }

  // A run that starts at the very first observed slot may have begun earlier.
  void mark_unknown_history(std::size_t i) { start_[i] = std::numeric_limits<std::int64_t>::min(); }

  const BatchRatio& stats() const { return stats_; }

 private:
  std::vector<std::int64_t> run_;
  std::vector<std::int64_t> start_;
  std::int64_t begin_, end_;
  BatchClock clock_;
  BatchRatio stats_;
};

/// Mean busy-run length from per-station traces (outer index station, inner index slot).
/// Every slot of every trace lies inside the measurement window; runs touching either end
/// are discarded. Returns an invalid estimate if no complete run exists.
inline Estimate estimate_busy_runs(const std::vector<std::vector<BusyRunTracker::Sense>>& trace) {
  std::int64_t len = 0;
  for (const auto& s : trace) len = std::max<std::int64_t>(len, static_cast<std::int64_t>(s.size()));
  if (len == 0) return {};
  BusyRunTracker tracker(trace.size(), 1, len, BatchClock{0, len, 2});
  for (std::size_t i = 0; i < trace.size(); ++i)
    for (std::size_t t = 0; t < trace[i].size(); ++t) tracker.step(i, static_cast<std::int64_t>(t), trace[i][t]);
  return tracker.stats().estimate();
}

/// Accumulates maximal runs of ring-consecutive idle-sensing stations, one ring snapshot per
/// sampled slot. A fully idle ring counts as one run of length n.
class IdleRunAccumulator {
 public:
  explicit IdleRunAccumulator(std::size_t batches = 20) : stats_(batches) {}

  void add_slot(std::span<const std::uint8_t> idle, std::size_t batch = 0) {
    const std::size_t n = idle.size();
    std::size_t idle_count = 0, runs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!idle[i]) continue;
      ++idle_count;
      if (!idle[(i + n - 1) % n]) ++runs;
    }
    if (idle_count == 0) return;
    if (runs == 0) runs = 1;  // whole ring idle
    stats_.add(batch, static_cast<double>(runs), static_cast<double>(idle_count));
  }

  /// runs / idle stations = 1 / mean run length.
  Estimate p_of() const { return stats_.estimate(); }

 private:
  BatchRatio stats_;
};

inline Estimate estimate_idle_run_parameter(const std::vector<std::vector<std::uint8_t>>& slots) {
  IdleRunAccumulator acc(2);
  for (std::size_t t = 0; t < slots.size(); ++t) acc.add_slot(slots[t], t * 2 / std::max<std::size_t>(slots.size(), 1));
  return acc.p_of();
}

/// Runs the p-persistent CSMA ring and returns every channel quantity with batch-means CIs.
inline ChannelQuantities run_oracle(const OracleParams& prm) {
  prm.validate();
  const std::size_t n = prm.n_stations;
  const int L = prm.frame_len_slots;
  const int R = prm.r_neighbors;
  const ScenarioSnapshot ring = ring_scenario(n, R);
  SlottedChannel ch(ring, L);

  const std::int64_t begin = prm.warmup_slots;
  const std::int64_t end = begin + prm.measure_slots;
  const std::int64_t total = end + L + 1;  // tail lets frames started in the window finish
  const BatchClock clock{begin, prm.measure_slots, prm.batches};
  const std::size_t B = prm.batches;
  auto in_window = [&](std::int64_t t) { return t >= begin && t < end; };

  std::vector<Rng> rng;
  rng.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rng.emplace_back(derive_seed(prm.seed, i));

  // Idle slots still to be sensed before the next start; geometric in p_tx.
  std::vector<std::int64_t> countdown(n);
  for (std::size_t i = 0; i < n; ++i) countdown[i] = rng[i].geometric_trials(prm.p_tx);
  std::vector<std::uint8_t> idle_prev(n, 0), start_next(n, 0), after_tx(n, 0), idle_now(n, 0);
  std::vector<std::int64_t> busy_len(n, 0);

  BatchRatio p_ii(B), p_tx_idle(B), p_i(B), rxp(B), txp(B), recv_if(B), goodput(B);
  std::vector<BatchRatio> if_by_d(static_cast<std::size_t>(R), BatchRatio(B));
  std::vector<BatchRatio> fif_by_d(static_cast<std::size_t>(R), BatchRatio(B));
  std::vector<BatchRatio> tui_by_d(static_cast<std::size_t>(R), BatchRatio(B));
  std::vector<BatchRatio> async_by_d(static_cast<std::size_t>(R), BatchRatio(B));
  std::vector<double> if_count_by_d(static_cast<std::size_t>(R), 0.0);
  double if_total = 0.0;

  const std::size_t busy_stride = static_cast<std::size_t>(2 * R + 1);
  BusyRunTracker busy(n, begin, end, clock);
  IdleRunAccumulator idle_runs(B);

  std::vector<std::int64_t> last_rx(n, SlottedChannel::kNever), last_tx(n, SlottedChannel::kNever);
  std::vector<std::int64_t> last_if(ch.pair_count(), SlottedChannel::kNever);

  auto on_reception = [&](const ReceptionEvent& e) {
    if (!in_window(e.start_slot)) return;
    const std::size_t b = clock(e.start_slot);
    recv_if.add(b, e.interference_free ? 1.0 : 0.0);
    if (last_rx[e.receiver] >= begin) rxp.add(b, static_cast<double>(e.start_slot - last_rx[e.receiver]));
    last_rx[e.receiver] = e.start_slot;
    const auto d = static_cast<std::size_t>(e.distance);
    if (d >= 1 && d <= static_cast<std::size_t>(R)) {
      fif_by_d[d - 1].add(b, e.interference_free ? 1.0 : 0.0);
      if (e.interference_free) {
        if (last_if[e.pair] >= begin) tui_by_d[d - 1].add(b, static_cast<double>(e.start_slot - last_if[e.pair]));
        last_if[e.pair] = e.start_slot;
        if_count_by_d[d - 1] += 1.0;
      }
    }
    if (e.interference_free) {
      if_total += 1.0;
      goodput.add(b, static_cast<double>(L), 0.0);
      for (std::size_t k = 0; k < if_by_d.size(); ++k) if_by_d[k].add(b, k + 1 == d ? 1.0 : 0.0);
    }
  };

  for (std::int64_t t = 0; t < total; ++t) {
    const bool sample_idle_runs = in_window(t) && (t - begin) % prm.idle_run_stride == 0;
    // Starts decided after sensing slot t - 1.
    for (std::size_t i = 0; i < n; ++i) {
      if (!start_next[i]) continue;
      start_next[i] = 0;
      ch.begin_transmission(i, t);
      if (in_window(t)) {
        const std::size_t b = clock(t);
        if (last_tx[i] >= begin) txp.add(b, static_cast<double>(t - last_tx[i]));
        // Synchronous starts among the sender's neighbours, per distance.
        for (std::size_t j = 0; j < ch.neighbors(i).size(); ++j) {
          const int d = ch.pair_distance(i * ch.pair_stride() + j);
          if (d >= 1 && d <= R)
            async_by_d[static_cast<std::size_t>(d - 1)].add(b, 1.0);  // numerator fixed below
        }
      }
      last_tx[i] = t;
    }
    // Second pass: a neighbour that started in this same slot is synchronous.
    if (in_window(t)) {
      for (std::size_t i = 0; i < n; ++i) {
        if (ch.last_start(i) != t) continue;
        const std::size_t b = clock(t);
        for (std::size_t j = 0; j < ch.neighbors(i).size(); ++j) {
          const std::uint32_t r = ch.neighbors(i)[j];
          const int d = ch.pair_distance(i * ch.pair_stride() + j);
          if (d >= 1 && d <= R && ch.last_start(r) == t)
            async_by_d[static_cast<std::size_t>(d - 1)].add(b, -1.0, 0.0);
        }
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      const bool tx = ch.transmitting(i, t);
      const bool sampled = (i % busy_stride) == 0;
      if (tx) {
        if (ch.last_start(i) == t && idle_prev[i] && in_window(t - 1)) {
          const std::size_t b = clock(t - 1);
          p_ii.add(b, 0.0);
          p_tx_idle.add(b, 1.0);
        }
        idle_prev[i] = 0;
        after_tx[i] = 1;
        busy_len[i] = 0;
        idle_now[i] = 0;
        if (sampled) busy.step(i, t, BusyRunTracker::Sense::Transmit);
        if (prm.trace && in_window(t)) *prm.trace << t << ',' << i << ",T\n";
        continue;
      }
      ch.observe(i, t);
      const bool idle = ch.busy_count(i) == 0;
      idle_now[i] = idle ? 1 : 0;
      if (idle_prev[i] && in_window(t - 1)) {
        const std::size_t b = clock(t - 1);
        p_ii.add(b, idle ? 1.0 : 0.0);
        p_tx_idle.add(b, 0.0);
      }
      if (sampled) {
        if (t == 0) busy.mark_unknown_history(i);
        busy.step(i, t, idle ? BusyRunTracker::Sense::Idle : BusyRunTracker::Sense::Busy);
      }
      if (prm.trace && in_window(t)) *prm.trace << t << ',' << i << (idle ? ",I\n" : ",B\n");
      if (!idle) {
        ++busy_len[i];
        idle_prev[i] = 0;
        continue;
      }
      // Protocol slot ends with this idle slot.
      if (in_window(t)) {
        if (after_tx[i]) {
          // transmission protocol slot, not part of p_i
        } else {
          p_i.add(clock(t), busy_len[i] == 0 ? 1.0 : 0.0);
        }
      }
      after_tx[i] = 0;
      busy_len[i] = 0;
      idle_prev[i] = 1;
      if (--countdown[i] == 0) {
        start_next[i] = 1;
        countdown[i] = rng[i].geometric_trials(prm.p_tx);
      }
    }
    if (sample_idle_runs) idle_runs.add_slot(idle_now, clock(t));
    ch.end_slot(t, on_reception);
  }

  ChannelQuantities q;
  q.p_tx = prm.p_tx;
  q.frame_len_slots = L;
  q.r_neighbors = R;
  q.p_ii = p_ii.estimate();
  q.p_tx_given_idle = p_tx_idle.estimate();
  q.mean_t_rb = busy.stats().estimate();
  q.busy_run_samples = busy.stats().samples();
  q.p_i = p_i.estimate();
  q.p_of = idle_runs.p_of();
  q.p_if = recv_if.estimate();
  if (!q.p_if.valid() && prm.p_tx > 0.0 && R > 0) {
    // Frames were sent but every neighbour started together with the sender.
    q.p_if = Estimate{0.0, 0.0, 0};
    q.warnings.push_back("degenerate: no asynchronous reception opportunity, p_if set to 0");
  }
  q.mean_t_rxp = rxp.estimate();
  q.mean_t_txp = txp.estimate();
  {
    // Goodput: IF slots per station-slot, once from the pooled counter and once from the
    // per-distance histogram.
    std::vector<std::int64_t> batch_len(B, 0);
    for (std::int64_t t = begin; t < end; ++t) ++batch_len[clock(t)];
    for (std::size_t b = 0; b < B; ++b) goodput.add(b, 0.0, static_cast<double>(n) * static_cast<double>(batch_len[b]));
    q.goodput = goodput.estimate();
    q.goodput.value = if_total * L / (static_cast<double>(n) * static_cast<double>(prm.measure_slots));
    double by_d = 0.0;
    for (double c : if_count_by_d) by_d += c;
    q.goodput_by_distance = by_d * L / (static_cast<double>(n) * static_cast<double>(prm.measure_slots));
  }
  for (int d = 1; d <= R; ++d) {
    const auto k = static_cast<std::size_t>(d - 1);
    q.f_d_given_if.push_back(if_by_d[k].estimate());
    q.p_fif_direct.push_back(fif_by_d[k].estimate());
    q.t_ui_direct.push_back(tui_by_d[k].estimate());
    q.p_async_direct.push_back(async_by_d[k].estimate());
  }
  if (q.busy_run_samples < 1000 && R > 0)
    q.warnings.push_back("insufficient-samples: only " + std::to_string(q.busy_run_samples) + " busy runs observed");
  return q;
}

}  // namespace vbcast
