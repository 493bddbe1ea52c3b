#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "vbcast/error.hpp"
#include "vbcast/model.hpp"
#include "vbcast/quantities.hpp"
#include "vbcast/units.hpp"

namespace vbcast {

/// Mean interval between IF receptions from one transmitter at distance d, in slots.
/// `t_rxp` counts reception starts from both sides, hence the factor 2 for a single sender.
/// Returns +inf when no IF reception happens at d.
inline double mean_update_interval(double t_rxp, double p_if, double f_d) {
  require(t_rxp > 0.0, ErrorKind::Config, "reception period must be positive");
  const double rate = p_if * f_d / t_rxp;
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  return 2.0 / rate;
}

/// Probability that the station at distance d does not start together with the sender.
inline double p_async(int d, double p_of, double p_tx) {
  require(d >= 1, ErrorKind::Config, "distance must be >= 1");
  return 1.0 - std::pow(1.0 - p_of, d) * p_tx;
}

/// Probability that an asynchronous reception at distance d is interference-free; no factor 2
/// here because both sides of the identity refer to the same single sender.
inline double frame_if_probability(double t_txp, double t_ui, double p_async_d) {
  require(std::isfinite(t_ui) && t_ui > 0.0, ErrorKind::Degenerate, "update interval must be finite");
  require(p_async_d > 0.0, ErrorKind::Degenerate, "p_async must be positive");
  const double p = t_txp / (t_ui * p_async_d);
  require(p <= 1.0 + 1e-9, ErrorKind::ModelInconsistency, "frame IF probability above one");
  return std::min(p, 1.0);
}

struct CamPerformance {
  double slot_seconds = kSlotSeconds;
  std::vector<double> t_ui_slots;     // index d - 1
  std::vector<double> t_ui_seconds;
  std::vector<double> t_ui_frame_view;  // same interval rebuilt from p_async and measured IF fraction
  std::vector<double> p_async;
  std::vector<double> p_fif;
  std::vector<bool> flagged;  // interval infinite or inputs undefined at d

  // Inputs echo.
  double p_tx = 0.0, p_of = 0.0, t_rxp = 0.0, t_txp = 0.0, p_if = 0.0;
  std::vector<double> f_d_given_if;
};

/// Per-distance CAM metrics at an operating point. `quantities` must be taken at solution.p_tx.
inline CamPerformance cam_report(const ModelSolution& solution, const ChannelQuantities& quantities,
                                 const ProtocolConfig& units) {
  CamPerformance c;
  c.slot_seconds = units.slot_seconds;
  c.p_tx = solution.p_tx;
  c.p_of = quantities.p_of.value;
  c.t_rxp = quantities.mean_t_rxp.value;
  c.t_txp = quantities.mean_t_txp.value;
  c.p_if = quantities.p_if.value;
  const int R = quantities.r_neighbors;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (int d = 1; d <= R; ++d) {
    const auto k = static_cast<std::size_t>(d - 1);
    const double f = k < quantities.f_d_given_if.size() ? quantities.f_d_given_if[k].value : nan;
    c.f_d_given_if.push_back(f);
    const bool usable = std::isfinite(c.t_rxp) && c.t_rxp > 0.0 && std::isfinite(c.p_if) && std::isfinite(f);
    const double tui = usable ? mean_update_interval(c.t_rxp, c.p_if, f) : std::numeric_limits<double>::infinity();
    const double pa = std::isfinite(c.p_of) ? p_async(d, c.p_of, c.p_tx) : nan;
    c.t_ui_slots.push_back(tui);
    c.t_ui_seconds.push_back(tui * units.slot_seconds);
    c.p_async.push_back(pa);
    const bool ok = std::isfinite(tui) && std::isfinite(c.t_txp) && pa > 0.0;
    c.flagged.push_back(!ok);
    c.p_fif.push_back(ok ? frame_if_probability(c.t_txp, tui, pa) : nan);
    const double fif_direct = k < quantities.p_fif_direct.size() ? quantities.p_fif_direct[k].value : nan;
    c.t_ui_frame_view.push_back(fif_direct > 0.0 && pa > 0.0 ? c.t_txp / (pa * fif_direct) : std::numeric_limits<double>::infinity());
  }
  return c;
}

}  // namespace vbcast
