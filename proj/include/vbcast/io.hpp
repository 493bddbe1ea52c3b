#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbcast/cam.hpp"
#include "vbcast/error.hpp"
#include "vbcast/model.hpp"
#include "vbcast/protocol_sim.hpp"
#include "vbcast/quantities.hpp"
#include "vbcast/scenario.hpp"

namespace vbcast {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
inline double number(const Json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

inline Json to_json(const Estimate& e) { return Json{{"value", detail::number(e.value)}, {"ci", detail::number(e.ci)}, {"n", e.n}}; }

inline Estimate estimate_from_json(const Json& j) {
  Estimate e;
  e.value = detail::number(j.at("value"));
  e.ci = detail::number(j.at("ci"));
  e.n = j.at("n").get<std::int64_t>();
  return e;
}

inline Json to_json(const std::vector<Estimate>& v) {
  Json a = Json::array();
  for (const auto& e : v) a.push_back(to_json(e));
  return a;
}

inline std::vector<Estimate> estimates_from_json(const Json& j) {
  std::vector<Estimate> v;
  for (const auto& e : j) v.push_back(estimate_from_json(e));
  return v;
}

inline Json to_json(const ChannelQuantities& q) {
  Json j;
  j["p_tx"] = q.p_tx;
  j["frame_len_slots"] = q.frame_len_slots;
  j["r_neighbors"] = q.r_neighbors;
  j["p_ii"] = to_json(q.p_ii);
  j["p_tx_given_idle"] = to_json(q.p_tx_given_idle);
  j["mean_t_rb"] = to_json(q.mean_t_rb);
  j["p_i"] = to_json(q.p_i);
  j["p_of"] = to_json(q.p_of);
  j["p_if"] = to_json(q.p_if);
  j["mean_t_rxp"] = to_json(q.mean_t_rxp);
  j["mean_t_txp"] = to_json(q.mean_t_txp);
  j["goodput"] = to_json(q.goodput);
  j["goodput_by_distance"] = detail::number(q.goodput_by_distance);
  j["busy_run_samples"] = q.busy_run_samples;
  j["f_d_given_if"] = to_json(q.f_d_given_if);
  j["t_ui_direct"] = to_json(q.t_ui_direct);
  j["p_fif_direct"] = to_json(q.p_fif_direct);
  j["p_async_direct"] = to_json(q.p_async_direct);
  j["warnings"] = q.warnings;
  return j;
}

inline ChannelQuantities quantities_from_json(const Json& j) {
  ChannelQuantities q;
  try {
    q.p_tx = j.at("p_tx").get<double>();
    q.frame_len_slots = j.at("frame_len_slots").get<int>();
    q.r_neighbors = j.at("r_neighbors").get<int>();
    q.p_ii = estimate_from_json(j.at("p_ii"));
    q.p_tx_given_idle = estimate_from_json(j.at("p_tx_given_idle"));
    q.mean_t_rb = estimate_from_json(j.at("mean_t_rb"));
    q.p_i = estimate_from_json(j.at("p_i"));
    q.p_of = estimate_from_json(j.at("p_of"));
    q.p_if = estimate_from_json(j.at("p_if"));
    q.mean_t_rxp = estimate_from_json(j.at("mean_t_rxp"));
    q.mean_t_txp = estimate_from_json(j.at("mean_t_txp"));
    q.goodput = estimate_from_json(j.at("goodput"));
    q.goodput_by_distance = detail::number(j.at("goodput_by_distance"));
    q.busy_run_samples = j.at("busy_run_samples").get<std::int64_t>();
    q.f_d_given_if = estimates_from_json(j.at("f_d_given_if"));
    q.t_ui_direct = estimates_from_json(j.at("t_ui_direct"));
    q.p_fif_direct = estimates_from_json(j.at("p_fif_direct"));
    q.p_async_direct = estimates_from_json(j.at("p_async_direct"));
    q.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("channel quantities: ") + e.what());
  }
  return q;
}

inline Json to_json(const SimStats& s) {
  Json j;
  j["seed"] = s.seed;
  j["warmup_slots"] = s.warmup_slots;
  j["measure_slots"] = s.measure_slots;
  j["lambda_f"] = s.lambda_f;
  j["cw_min"] = s.cw_min;
  j["frame_len_slots"] = s.frame_len_slots;
  j["queue_policy"] = to_string(s.queue_policy);
  j["strict_80211"] = s.strict_80211;
  j["tau"] = to_json(s.tau_hat);
  j["eta"] = to_json(s.eta_hat);
  j["rho"] = to_json(s.rho_hat);
  j["p_i"] = to_json(s.p_i_hat);
  j["mean_t_bp"] = to_json(s.mean_t_bp);
  j["mean_t_ntp"] = to_json(s.mean_t_ntp);
  j["mean_d_s"] = to_json(s.mean_d_s);
  j["mean_arrival_wait"] = to_json(s.mean_arrival_wait);
  j["p_if"] = to_json(s.p_if_hat);
  j["goodput"] = to_json(s.goodput_hat);
  j["mean_t_txp"] = to_json(s.mean_t_txp);
  j["mean_t_rxp"] = to_json(s.mean_t_rxp);
  j["t_ui"] = to_json(s.t_ui_mean);
  j["p_fif"] = to_json(s.p_fif_hat);
  j["p_if_per_frame"] = to_json(s.p_if_per_frame);
  j["p_async"] = to_json(s.p_async_hat);
  j["slot_accounting_errors"] = s.slot_accounting_errors;
  j["warnings"] = s.warnings;
  return j;
}

inline Json to_json(const ModelSolution& m) {
  Json j;
  j["w"] = m.w;
  j["frame_len_slots"] = m.frame_len_slots;
  j["r_neighbors"] = m.r_neighbors;
  j["lambda_per_slot"] = m.lambda_per_slot;
  j["queue_policy"] = to_string(m.queue_policy);
  j["tau"] = m.tau;
  j["p_tx"] = m.p_tx;
  j["eta"] = m.eta;
  j["rho"] = m.rho;
  j["p_i"] = m.p_i;
  j["q_i"] = m.q_i;
  j["q_b"] = m.q_b;
  j["q_ntp"] = m.q_ntp;
  j["mean_t_rb"] = m.mean_t_rb;
  j["mean_t_bp"] = m.mean_t_bp;
  j["mean_t_ntp"] = m.mean_t_ntp;
  j["mean_t_bk"] = m.mean_t_bk;
  j["mean_d_s"] = m.mean_d_s;
  j["b0"] = m.b0;
  j["rho_mg1"] = m.rho_mg1;
  j["rho_server"] = m.rho_server;
  j["saturated"] = m.saturated;
  j["lambda_f_sat_per_slot"] = m.lambda_f_sat;
  j["residual"] = m.residual;
  j["k_pmf"] = m.k_pmf;
  return j;
}

/// One CSV row per scalar metric plus one per vector entry: metric,d,value,ci,n_samples.
struct MetricRow {
  std::string metric;
  int d = 0;
  double value = std::numeric_limits<double>::quiet_NaN();
  double ci = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n = 0;
};

inline std::vector<MetricRow> metric_rows(const SimStats& s) {
  std::vector<MetricRow> r;
  auto scalar = [&](const char* name, const Estimate& e) { r.push_back({name, 0, e.value, e.ci, e.n}); };
  auto vec = [&](const char* name, const std::vector<Estimate>& v) {
    for (std::size_t k = 0; k < v.size(); ++k) r.push_back({name, static_cast<int>(k + 1), v[k].value, v[k].ci, v[k].n});
  };
  scalar("tau", s.tau_hat);
  scalar("eta", s.eta_hat);
  scalar("rho", s.rho_hat);
  scalar("p_i", s.p_i_hat);
  scalar("mean_t_bp", s.mean_t_bp);
  scalar("mean_t_ntp", s.mean_t_ntp);
  scalar("mean_d_s", s.mean_d_s);
  scalar("mean_arrival_wait", s.mean_arrival_wait);
  scalar("p_if", s.p_if_hat);
  scalar("goodput", s.goodput_hat);
  scalar("mean_t_txp", s.mean_t_txp);
  scalar("mean_t_rxp", s.mean_t_rxp);
  vec("t_ui", s.t_ui_mean);
  vec("p_fif", s.p_fif_hat);
  vec("p_if_per_frame", s.p_if_per_frame);
  vec("p_async", s.p_async_hat);
  return r;
}

inline std::vector<MetricRow> metric_rows(const ModelSolution& m) {
  std::vector<MetricRow> r;
  auto scalar = [&](const char* name, double v) { r.push_back({name, 0, v, 0.0, 0}); };
  scalar("tau", m.tau);
  scalar("eta", m.eta);
  scalar("rho", m.rho);
  scalar("p_i", m.p_i);
  scalar("mean_t_bp", m.mean_t_bp);
  scalar("mean_t_ntp", m.mean_t_ntp);
  scalar("mean_d_s", m.mean_d_s);
  scalar("p_if", m.channel.p_if.value);
  scalar("goodput", m.channel.goodput.value);
  scalar("mean_t_txp", m.channel.mean_t_txp.value);
  scalar("mean_t_rxp", m.channel.mean_t_rxp.value);
  for (std::size_t k = 0; k < m.k_pmf.size(); ++k) r.push_back({"k_pmf", static_cast<int>(k), m.k_pmf[k], 0.0, 0});
  return r;
}

/// Per-distance CAM rows; infinite intervals are emitted as empty values.
inline std::vector<MetricRow> metric_rows(const CamPerformance& c) {
  std::vector<MetricRow> r;
  for (std::size_t k = 0; k < c.t_ui_slots.size(); ++k) {
    const int d = static_cast<int>(k + 1);
    r.push_back({"t_ui", d, c.t_ui_slots[k], 0.0, 0});
    r.push_back({"p_fif", d, c.p_fif[k], 0.0, 0});
    r.push_back({"p_async", d, c.p_async[k], 0.0, 0});
  }
  return r;
}

inline Json to_json(const CamPerformance& c) {
  Json j;
  j["slot_seconds"] = c.slot_seconds;
  auto arr = [](const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(detail::number(x));
    return a;
  };
  j["t_ui_slots"] = arr(c.t_ui_slots);
  j["t_ui_seconds"] = arr(c.t_ui_seconds);
  j["t_ui_frame_view"] = arr(c.t_ui_frame_view);
  j["p_async"] = arr(c.p_async);
  j["p_fif"] = arr(c.p_fif);
  j["flagged"] = c.flagged;
  j["p_tx"] = c.p_tx;
  j["p_of"] = detail::number(c.p_of);
  j["t_rxp"] = detail::number(c.t_rxp);
  j["t_txp"] = detail::number(c.t_txp);
  j["p_if"] = detail::number(c.p_if);
  j["f_d_given_if"] = arr(c.f_d_given_if);
  return j;
}

inline std::string csv_number(double v) { return std::isfinite(v) ? detail::format_double(v) : std::string(); }

inline void write_metric_csv(std::ostream& os, const std::vector<MetricRow>& rows, bool header = true) {
  if (header) os << "metric,d,value,ci,n_samples\n";
  for (const auto& r : rows) os << r.metric << ',' << r.d << ',' << csv_number(r.value) << ',' << csv_number(r.ci) << ',' << r.n << '\n';
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Config, "cannot write '" + path + "'");
  f << text;
  require(static_cast<bool>(f), ErrorKind::Config, "write failed for '" + path + "'");
}

}  // namespace vbcast
