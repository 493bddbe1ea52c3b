#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "vbcast/error.hpp"

namespace vbcast {

/// IEEE 802.11p backoff slot with 10 MHz channel spacing, seconds.
inline constexpr double kSlotSeconds = 13e-6;

enum class QueuePolicy { InfiniteFifo, SingleOverwrite };

inline const char* to_string(QueuePolicy p) {
  return p == QueuePolicy::InfiniteFifo ? "infinite_fifo" : "single_overwrite";
}

inline QueuePolicy parse_queue_policy(std::string_view s) {
  if (s == "infinite_fifo" || s == "INFINITE_FIFO" || s == "fifo") return QueuePolicy::InfiniteFifo;
  if (s == "single_overwrite" || s == "SINGLE_OVERWRITE" || s == "cam") return QueuePolicy::SingleOverwrite;
  fail(ErrorKind::Config, "unknown queue policy '" + std::string(s) + "'");
}

/// MAC timing. The frame length already includes DIFS.
struct ProtocolConfig {
  int cw_min = 63;
  int frame_len_slots = 32;
  double slot_seconds = kSlotSeconds;

  int w() const { return cw_min + 1; }

  void validate() const {
    require(cw_min >= 2, ErrorKind::Config, "cw_min must be >= 2, got " + std::to_string(cw_min));
    require(frame_len_slots >= 1, ErrorKind::Config, "frame_len_slots must be >= 1");
    require(slot_seconds > 0.0 && std::isfinite(slot_seconds), ErrorKind::Config,
            "slot_seconds must be positive");
  }
};

struct TrafficConfig {
  double lambda_f = 10.0;  // frames per second
  QueuePolicy queue_policy = QueuePolicy::InfiniteFifo;

  void validate() const {
    require(std::isfinite(lambda_f) && lambda_f >= 0.0, ErrorKind::Config,
            "lambda_f must be finite and non-negative");
  }
};

inline double seconds_to_slots(double t, double sigma) {
  require(sigma > 0.0, ErrorKind::Config, "slot duration must be positive");
  return t / sigma;
}

inline double slots_to_seconds(double slots, double sigma) {
  require(sigma > 0.0, ErrorKind::Config, "slot duration must be positive");
  return slots * sigma;
}

/// frames/s -> frames/slot
inline double rate_per_slot(double per_second, double sigma) {
  require(sigma > 0.0, ErrorKind::Config, "slot duration must be positive");
  return per_second * sigma;
}

enum class PhyMode { Qpsk12, Bpsk12, Qam16_12 };

inline PhyMode parse_phy_mode(std::string_view s) {
  if (s == "QPSK1/2" || s == "qpsk12" || s == "QPSK12") return PhyMode::Qpsk12;
  if (s == "BPSK1/2" || s == "bpsk12") return PhyMode::Bpsk12;
  if (s == "16QAM1/2" || s == "qam16_12") return PhyMode::Qam16_12;
  fail(ErrorKind::UnsupportedMode, "unknown PHY mode '" + std::string(s) + "'");
}

/// Frame airtime in slots for a CAM payload. Affine through (200 B, 32) and (512 B, 64),
/// rounded up. Only QPSK 1/2 has calibration anchors.
inline int frame_bytes_to_slots(std::int64_t payload_bytes, PhyMode mode = PhyMode::Qpsk12) {
  require(mode == PhyMode::Qpsk12, ErrorKind::UnsupportedMode,
          "only QPSK1/2 is calibrated for byte to slot conversion");
  require(payload_bytes > 0, ErrorKind::Config, "payload_bytes must be positive");
  // L = 32 + (b - 200) * 32 / 312 = 32 (b + 112) / 312, computed exactly in integers.
  const std::int64_t num = 32 * (payload_bytes + 112);
  const std::int64_t den = 312;
  const std::int64_t l = (num + den - 1) / den;
  return static_cast<int>(l < 1 ? 1 : l);
}

}  // namespace vbcast
