#pragma once

#include <cstdint>
#include <string>

#include "vbcast/error.hpp"
#include "vbcast/rng.hpp"
#include "vbcast/units.hpp"

namespace vbcast {

/// Backoff entity modes. Counters follow the protocol chain: BACKOFF(k) and POST_BACKOFF(k)
/// hold k non-transmission protocol slots still to elapse, so BACKOFF(k) is chain state
/// {0,k} and POST_BACKOFF(k) is {-1,k}. IDLE_EMPTY is {-1,0}; TRANSMITTING is {0,0}.
enum class MacMode : std::uint8_t { IdleEmpty, Backoff, PostBackoff, Transmitting };

inline const char* to_string(MacMode m) {
  switch (m) {
    case MacMode::IdleEmpty: return "IDLE_EMPTY";
    case MacMode::Backoff: return "BACKOFF";
    case MacMode::PostBackoff: return "POST_BACKOFF";
    case MacMode::Transmitting: return "TRANSMITTING";
  }
  return "?";
}

struct StationState {
  MacMode mode = MacMode::IdleEmpty;
  int counter = 0;             // remaining protocol slots, or remaining frame slots when transmitting
  std::int64_t queue_len = 0;  // frames in the MAC queue, head of line included
  std::int64_t head_arrival_slot = 0;

  friend bool operator==(const StationState&, const StationState&) = default;
};

/// Kind of the protocol slot that has just ended. Every kind ends with one idle slot.
enum class ProtocolSlot : std::uint8_t { Idle, Busy, Transmission };

struct MacRules {
  int cw_min = 63;
  int frame_len_slots = 32;
  QueuePolicy policy = QueuePolicy::InfiniteFifo;
  // Standard draw on [0, CW_min] without the zero-counter prohibition. Not covered by the
  // analytical model.
  bool strict_80211 = false;

  int w() const { return cw_min + 1; }
};

struct Transition {
  StationState next;
  bool start_tx = false;        // transmit in the slot right after this boundary
  int drawn_counter = 0;        // fresh backoff counter on {1..CW_min}, 0 if none was drawn
  std::int64_t overwritten = 0;  // arrivals that replaced a queued frame
};

/// Fresh backoff counter. Counter values are 1..CW_min (zero is prohibited); the idle slot that
/// closes the current protocol slot already counts one down, so the chain index is counter - 1.
inline int draw_backoff_counter(const MacRules& rules, Rng& rng) {
  if (rules.strict_80211) return static_cast<int>(rng.uniform_int(0, rules.cw_min)) + 1;
  return static_cast<int>(rng.uniform_int(1, rules.cw_min));
}

/// Applies `n` arrivals to a queue; returns the number of overwritten frames.
inline std::int64_t enqueue(std::int64_t& queue_len, std::int64_t n, QueuePolicy policy) {
  if (n <= 0) return 0;
  if (policy == QueuePolicy::InfiniteFifo) {
    queue_len += n;
    return 0;
  }
  if (queue_len == 0) {
    queue_len = 1;
    return n - 1;
  }
  return n;
}

/// One protocol-slot boundary of a station that is not mid-frame. `kind` is the protocol slot
/// that just ended (Transmission means the station's own frame plus its trailing idle slot);
/// `n_arrivals` are the frames that arrived during it (for Transmission: during the trailing
/// idle slot only, frame-time arrivals are settled when the frame ends).
inline Transition backoff_transition(const StationState& s, ProtocolSlot kind, std::int64_t n_arrivals,
                                     const MacRules& rules, Rng& rng) {
  Transition out;
  out.next = s;
  StationState& nx = out.next;
  out.overwritten = enqueue(nx.queue_len, n_arrivals, rules.policy);

  auto enter_backoff = [&](int k) {
    nx.mode = MacMode::Backoff;
    nx.counter = k;
    out.start_tx = (k == 0);
  };
  auto fresh_backoff = [&] {
    out.drawn_counter = draw_backoff_counter(rules, rng);
    enter_backoff(out.drawn_counter - 1);
  };

  switch (s.mode) {
    case MacMode::Transmitting: {
      // End of the TX protocol slot: next frame waiting (eta branch) or post-backoff.
      require(kind == ProtocolSlot::Transmission, ErrorKind::ModelInconsistency,
              "transmitting station must close a transmission protocol slot");
      out.drawn_counter = draw_backoff_counter(rules, rng);
      const int k = out.drawn_counter - 1;
      if (nx.queue_len > 0) {
        enter_backoff(k);
      } else if (k == 0) {
        nx.mode = MacMode::IdleEmpty;
        nx.counter = 0;
      } else {
        nx.mode = MacMode::PostBackoff;
        nx.counter = k;
      }
      break;
    }
    case MacMode::Backoff:
      enter_backoff(s.counter > 0 ? s.counter - 1 : 0);
      break;
    case MacMode::PostBackoff: {
      const int k = s.counter > 0 ? s.counter - 1 : 0;
      if (nx.queue_len > 0) {
        enter_backoff(k);
      } else if (k == 0) {
        nx.mode = MacMode::IdleEmpty;
        nx.counter = 0;
      } else {
        nx.counter = k;
      }
      break;
    }
    case MacMode::IdleEmpty:
      if (nx.queue_len == 0) break;
      if (kind == ProtocolSlot::Idle) {
        enter_backoff(0);  // frame met an idle channel after post-backoff
      } else {
        fresh_backoff();
      }
      break;
  }
  return out;
}

}  // namespace vbcast
