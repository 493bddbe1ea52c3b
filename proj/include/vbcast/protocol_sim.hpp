#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "vbcast/channel.hpp"
#include "vbcast/error.hpp"
#include "vbcast/mac.hpp"
#include "vbcast/rng.hpp"
#include "vbcast/scenario.hpp"
#include "vbcast/stats.hpp"
#include "vbcast/units.hpp"

namespace vbcast {

/// One reception opportunity as written to / read from a reception log.
struct ReceptionRecord {
  std::uint32_t receiver = 0;
  std::uint32_t transmitter = 0;
  int distance = 0;
  std::int64_t start_slot = 0;
  bool interference_free = false;
};

/// Mean gap between consecutive interference-free receptions of the same (receiver,
/// transmitter) pair, grouped by topological distance. The first reception of every pair has
/// no observed predecessor and contributes no gap.
class UpdateIntervalMeter {
 public:
  UpdateIntervalMeter(int max_distance, std::size_t batches = 20)
      : by_d_(static_cast<std::size_t>(std::max(max_distance, 0)), BatchRatio(batches)) {}

  /// `pair_key` identifies an ordered (receiver, transmitter) pair; `key_space` bounds it.
  void reserve(std::size_t key_space) { last_.assign(key_space, kNone); }

  void add(std::size_t pair_key, int d, std::int64_t start_slot, bool interference_free, std::size_t batch = 0) {
    if (!interference_free || d < 1 || d > static_cast<int>(by_d_.size())) return;
    if (pair_key >= last_.size()) last_.resize(pair_key + 1, kNone);
    auto& prev = last_[pair_key];
    if (prev != kNone) by_d_[static_cast<std::size_t>(d - 1)].add(batch, static_cast<double>(start_slot - prev));
    prev = start_slot;
  }

  std::vector<Estimate> estimates() const {
    std::vector<Estimate> out;
    out.reserve(by_d_.size());
    for (const auto& b : by_d_) out.push_back(b.estimate());
    return out;
  }

 private:
  static constexpr std::int64_t kNone = std::numeric_limits<std::int64_t>::min();
  std::vector<BatchRatio> by_d_;
  std::vector<std::int64_t> last_;
};

/// T_UI(d) from a reception log sorted by start slot. Entries without two IF receptions for
/// any pair at d stay invalid.
inline std::vector<Estimate> measure_update_intervals(const std::vector<ReceptionRecord>& log, int max_distance) {
  std::uint32_t n = 0;
  for (const auto& r : log) n = std::max({n, r.receiver + 1, r.transmitter + 1});
  UpdateIntervalMeter meter(max_distance, 2);
  meter.reserve(static_cast<std::size_t>(n) * n);
  const std::size_t half = log.size() / 2;
  for (std::size_t k = 0; k < log.size(); ++k) {
    const auto& r = log[k];
    meter.add(static_cast<std::size_t>(r.receiver) * n + r.transmitter, r.distance, r.start_slot, r.interference_free,
              k < half ? 0 : 1);
  }
  return meter.estimates();
}

struct SimParams {
  ProtocolConfig protocol;
  TrafficConfig traffic;
  std::uint64_t seed = 1;
  std::int64_t warmup_slots = 20'000;
  std::int64_t measure_slots = 400'000;
  std::size_t batches = 20;
  bool strict_80211 = false;
  std::ostream* reception_log = nullptr;  // CSV receiver,transmitter,distance,start_slot,interference_free

  void validate() const {
    protocol.validate();
    traffic.validate();
    require(warmup_slots >= 0 && measure_slots > 0, ErrorKind::Config, "bad run length");
    require(batches >= 2, ErrorKind::Config, "need at least two batches");
  }
};

/// Per-station frame ledger over the whole run, warmup included.
struct StationLedger {
  std::int64_t arrivals = 0;
  std::int64_t transmitted = 0;
  std::int64_t backlog = 0;
  std::int64_t overwritten = 0;
  std::int64_t arrivals_while_nonempty = 0;
  std::int64_t max_queue_len = 0;
};

/// Empirical counterparts of the analytical quantities. Slot units throughout.
struct SimStats {
  Estimate tau_hat, eta_hat, rho_hat, p_i_hat;
  Estimate mean_t_bp, mean_t_ntp, mean_d_s;
  Estimate mean_arrival_wait;  // arrival at an empty queue -> protocol-slot boundary that starts service
  Estimate p_if_hat, goodput_hat, mean_t_txp, mean_t_rxp;
  std::vector<Estimate> t_ui_mean;    // index d - 1
  std::vector<Estimate> p_fif_hat;       // IF receptions / asynchronous reception opportunities at d
  std::vector<Estimate> p_if_per_frame;  // IF receptions / frames sent to neighbours at d
  std::vector<Estimate> p_async_hat;  // asynchronous opportunities / frames sent to neighbours at d

  std::uint64_t seed = 0;
  std::int64_t warmup_slots = 0;
  std::int64_t measure_slots = 0;
  double lambda_f = 0.0;
  int cw_min = 0;
  int frame_len_slots = 0;
  QueuePolicy queue_policy = QueuePolicy::InfiniteFifo;
  bool strict_80211 = false;

  std::vector<StationLedger> ledger;
  std::int64_t slot_accounting_errors = 0;  // protocol slots whose length disagrees with their kind
  std::int64_t busy_after_own_frame = 0;    // should never happen: neighbours defer to our frame
  std::vector<std::string> warnings;
};

/// Slotted broadcast MAC simulation: every station runs the backoff entity of `mac.hpp` with
/// an independent Poisson arrival stream; sensing and IF classification share `SlottedChannel`
/// with the CSMA oracle.
inline SimStats run_protocol_sim(const SimParams& prm, const ScenarioSnapshot& scenario) {
  prm.validate();
  const std::size_t n = scenario.n_stations();
  require(n >= 1, ErrorKind::Scenario, "empty scenario");
  require(scenario.neighbor_sets.size() == n, ErrorKind::Scenario, "scenario is not finalized");
  const int L = prm.protocol.frame_len_slots;
  const MacRules rules{prm.protocol.cw_min, L, prm.traffic.queue_policy, prm.strict_80211};
  const double lam = rate_per_slot(prm.traffic.lambda_f, prm.protocol.slot_seconds);
  const bool cam = prm.traffic.queue_policy == QueuePolicy::SingleOverwrite;

  SlottedChannel ch(scenario, L);
  int max_d = 0;
  for (std::size_t p = 0; p < ch.pair_count(); ++p) max_d = std::max(max_d, ch.pair_distance(p));
  const auto D = static_cast<std::size_t>(max_d);

  const std::int64_t begin = prm.warmup_slots;
  const std::int64_t end = begin + prm.measure_slots;
  const std::int64_t total = end + L + 1;
  const std::size_t B = prm.batches;
  const BatchClock clock{begin, prm.measure_slots, B};
  auto in_window = [&](std::int64_t t) { return t >= begin && t < end; };

  std::vector<Rng> rng;
  rng.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rng.emplace_back(derive_seed(prm.seed, i));

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<StationState> st(n);
  std::vector<double> next_arrival(n, kInf);
  std::vector<std::int64_t> pending(n, 0), first_pending(n, 0), busy_len(n, 0), tx_head(n, 0),
      last_boundary(n, -1);
  std::vector<std::uint8_t> start_next(n, 0), frame_done(n, 0);
  SimStats out;
  out.ledger.assign(n, {});

  // Independent uniform phases: post-backoff with a fresh counter, empty queue.
  for (std::size_t i = 0; i < n; ++i) {
    const int k = draw_backoff_counter(rules, rng[i]) - 1;
    st[i].mode = k > 0 ? MacMode::PostBackoff : MacMode::IdleEmpty;
    st[i].counter = k;
    if (lam > 0.0) next_arrival[i] = rng[i].exponential(lam);
  }

  BatchRatio tau(B), eta(B), rho(B), p_i(B), t_bp(B), t_ntp(B), d_s(B), arrival_wait(B), p_if(B), txp(B), rxp(B), goodput(B);
  std::vector<BatchRatio> per_frame(D, BatchRatio(B)), fif(D, BatchRatio(B)), async(D, BatchRatio(B));
  UpdateIntervalMeter tui(max_d, B);
  tui.reserve(ch.pair_count());
  std::vector<std::int64_t> last_tx(n, SlottedChannel::kNever), last_rx(n, SlottedChannel::kNever);

  auto on_reception = [&](const ReceptionEvent& e) {
    if (prm.reception_log)
      *prm.reception_log << e.receiver << ',' << e.sender << ',' << e.distance << ',' << e.start_slot << ','
                         << (e.interference_free ? 1 : 0) << '\n';
    if (!in_window(e.start_slot)) return;
    const std::size_t b = clock(e.start_slot);
    const double ok = e.interference_free ? 1.0 : 0.0;
    p_if.add(b, ok);
    if (e.interference_free) goodput.add(b, static_cast<double>(L), 0.0);
    if (last_rx[e.receiver] >= begin) rxp.add(b, static_cast<double>(e.start_slot - last_rx[e.receiver]));
    last_rx[e.receiver] = e.start_slot;
    if (e.distance >= 1) {
      const auto k = static_cast<std::size_t>(e.distance - 1);
      per_frame[k].add(b, ok, 0.0);  // denominator added per frame at start
      fif[k].add(b, ok);
      async[k].add(b, 1.0, 0.0);
      tui.add(e.pair, e.distance, e.start_slot, e.interference_free, b);
    }
  };

  auto close_protocol_slot = [&](std::size_t i, std::int64_t t, ProtocolSlot kind) {
    StationState& s = st[i];
    const std::int64_t len = kind == ProtocolSlot::Idle ? 1 : kind == ProtocolSlot::Busy ? busy_len[i] + 1 : L + 1;
    if (t - last_boundary[i] != len && last_boundary[i] >= 0) ++out.slot_accounting_errors;
    last_boundary[i] = t;

    const bool was_empty = s.queue_len == 0;
    const Transition tr = backoff_transition(s, kind, pending[i], rules, rng[i]);
    out.ledger[i].overwritten += tr.overwritten;
    // Service starts at the boundary where the backoff entity takes the frame up, as in the
    // chain; the wait from arrival to that boundary is reported on its own.
    if (tr.next.queue_len > 0 && (was_empty || kind == ProtocolSlot::Transmission)) {
      s.head_arrival_slot = t;
      if (was_empty && in_window(t)) arrival_wait.add(clock(t), static_cast<double>(t - first_pending[i]));
    }

    if (in_window(t)) {
      const std::size_t b = clock(t);
      tau.add(b, kind == ProtocolSlot::Transmission ? 1.0 : 0.0);
      if (kind == ProtocolSlot::Transmission) {
        eta.add(b, tr.next.queue_len > 0 ? 1.0 : 0.0);
        d_s.add(b, static_cast<double>(t - tx_head[i]));
      } else {
        p_i.add(b, kind == ProtocolSlot::Idle ? 1.0 : 0.0);
        t_ntp.add(b, static_cast<double>(len));
        if (kind == ProtocolSlot::Busy) t_bp.add(b, static_cast<double>(len));
      }
    }
    const std::int64_t head = s.head_arrival_slot;
    s = tr.next;
    s.head_arrival_slot = head;
    out.ledger[i].max_queue_len = std::max(out.ledger[i].max_queue_len, s.queue_len);
    pending[i] = 0;
    busy_len[i] = 0;
    if (tr.start_tx) start_next[i] = 1;
  };

  for (std::int64_t t = 0; t < total; ++t) {
    const bool win = in_window(t);
    for (std::size_t i = 0; i < n; ++i) {
      if (!start_next[i]) continue;
      start_next[i] = 0;
      StationState& s = st[i];
      require(s.mode == MacMode::Backoff && s.counter == 0 && s.queue_len >= 1, ErrorKind::ModelInconsistency,
              "transmission started outside BACKOFF(0) with a queued frame");
      s.mode = MacMode::Transmitting;
      s.counter = L;
      tx_head[i] = s.head_arrival_slot;
      frame_done[i] = 0;
      ch.begin_transmission(i, t);
      if (win) {
        const std::size_t b = clock(t);
        if (last_tx[i] >= begin) txp.add(b, static_cast<double>(t - last_tx[i]));
        const std::size_t base = i * ch.pair_stride();
        for (std::size_t j = 0; j < ch.neighbors(i).size(); ++j) {
          const int d = ch.pair_distance(base + j);
          if (d < 1) continue;
          per_frame[static_cast<std::size_t>(d - 1)].add(b, 0.0, 1.0);
          async[static_cast<std::size_t>(d - 1)].add(b, 0.0, 1.0);
        }
      }
      last_tx[i] = t;
    }

    for (std::size_t i = 0; i < n; ++i) {
      StationState& s = st[i];
      StationLedger& lg = out.ledger[i];
      // Server busy from the slot after service start until the TX protocol slot ends.
      if (win) rho.add(clock(t), (s.queue_len > 0 || s.mode == MacMode::Transmitting) ? 1.0 : 0.0);

      std::int64_t a = 0;
      while (next_arrival[i] < static_cast<double>(t + 1)) {
        ++a;
        next_arrival[i] += rng[i].exponential(lam);
      }
      if (a > 0) {
        lg.arrivals += a;
        const bool nonempty = s.queue_len > 0 || pending[i] > 0;
        lg.arrivals_while_nonempty += nonempty ? a : a - 1;
      }

      if (s.mode == MacMode::Transmitting) {
        if (!frame_done[i]) {
          pending[i] += a;
          if (--s.counter == 0) {
            // Frame leaves the queue; frame-time arrivals join it or overwrite the in-flight frame.
            frame_done[i] = 1;
            ++lg.transmitted;
            s.queue_len -= 1;
            if (cam) {
              lg.overwritten += pending[i];
            } else {
              s.queue_len += pending[i];
            }
            lg.max_queue_len = std::max(lg.max_queue_len, s.queue_len + 1);
            pending[i] = 0;
          }
          continue;
        }
        ch.observe(i, t);
        if (ch.busy_count(i) != 0) ++out.busy_after_own_frame;
        if (a > 0 && pending[i] == 0) first_pending[i] = t;
        pending[i] += a;
        close_protocol_slot(i, t, ProtocolSlot::Transmission);
        continue;
      }

      ch.observe(i, t);
      if (a > 0 && pending[i] == 0) first_pending[i] = t;
      pending[i] += a;
      if (ch.busy_count(i) != 0) {
        ++busy_len[i];
        continue;
      }
      close_protocol_slot(i, t, busy_len[i] > 0 ? ProtocolSlot::Busy : ProtocolSlot::Idle);
    }
    ch.end_slot(t, on_reception);
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& lg = out.ledger[i];
    // Settle arrivals of the unfinished protocol slot as its boundary would have.
    if (!cam) {
      lg.backlog = st[i].queue_len + pending[i];
    } else if (st[i].mode == MacMode::Transmitting && !frame_done[i]) {
      lg.backlog = st[i].queue_len;
      lg.overwritten += pending[i];
    } else {
      std::int64_t q = st[i].queue_len;
      lg.overwritten += enqueue(q, pending[i], QueuePolicy::SingleOverwrite);
      lg.backlog = q;
    }
  }

  out.tau_hat = tau.estimate();
  out.eta_hat = eta.estimate();
  out.rho_hat = rho.estimate();
  out.p_i_hat = p_i.estimate();
  out.mean_t_bp = t_bp.estimate();
  out.mean_t_ntp = t_ntp.estimate();
  out.mean_d_s = d_s.estimate();
  out.mean_arrival_wait = arrival_wait.estimate();
  out.p_if_hat = p_if.estimate();
  out.mean_t_txp = txp.estimate();
  out.mean_t_rxp = rxp.estimate();
  {
    std::vector<std::int64_t> batch_len(B, 0);
    for (std::int64_t t = begin; t < end; ++t) ++batch_len[clock(t)];
    for (std::size_t b = 0; b < B; ++b) goodput.add(b, 0.0, static_cast<double>(n) * static_cast<double>(batch_len[b]));
    out.goodput_hat = goodput.estimate();
  }
  out.t_ui_mean = tui.estimates();
  for (std::size_t k = 0; k < D; ++k) {
    out.p_fif_hat.push_back(fif[k].estimate());
    out.p_if_per_frame.push_back(per_frame[k].estimate());
    out.p_async_hat.push_back(async[k].estimate());
  }
  for (std::size_t k = 0; k < D; ++k)
    if (!out.t_ui_mean[k].valid())
      out.warnings.push_back("insufficient-samples: no update interval observed at d=" + std::to_string(k + 1));

  out.seed = prm.seed;
  out.warmup_slots = prm.warmup_slots;
  out.measure_slots = prm.measure_slots;
  out.lambda_f = prm.traffic.lambda_f;
  out.cw_min = prm.protocol.cw_min;
  out.frame_len_slots = L;
  out.queue_policy = prm.traffic.queue_policy;
  out.strict_80211 = prm.strict_80211;
  return out;
}

inline SimStats run_protocol_sim(const ProtocolConfig& protocol, const TrafficConfig& traffic,
                                 const ScenarioSnapshot& scenario, std::uint64_t seed, std::int64_t warmup_slots,
                                 std::int64_t measure_slots) {
  SimParams p;
  p.protocol = protocol;
  p.traffic = traffic;
  p.seed = seed;
  p.warmup_slots = warmup_slots;
  p.measure_slots = measure_slots;
  return run_protocol_sim(p, scenario);
}

}  // namespace vbcast
