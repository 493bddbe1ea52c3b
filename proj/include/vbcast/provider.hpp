#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vbcast/error.hpp"
#include "vbcast/io.hpp"
#include "vbcast/oracle.hpp"
#include "vbcast/quantities.hpp"

namespace vbcast {

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes). Preserves
/// monotonicity of the data on every interval and reproduces nodes exactly.
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    require(x_.size() == y_.size() && x_.size() >= 2, ErrorKind::Config, "interpolation needs two nodes");
    const std::size_t n = x_.size();
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = x_[k + 1] - x_[k];
      require(h[k] > 0.0, ErrorKind::Config, "interpolation nodes must be strictly increasing");
      delta[k] = (y_[k + 1] - y_[k]) / h[k];
    }
    m_.assign(n, 0.0);
    if (n == 2) {
      m_[0] = m_[1] = delta[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] * delta[k] <= 0.0) continue;
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      m_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    m_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    m_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  double operator()(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t k = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    if (k >= x_.size() - 1) k = x_.size() - 2;
    if (x == x_[k]) return y_[k];
    if (x == x_[k + 1]) return y_[k + 1];
    const double h = x_[k + 1] - x_[k];
    const double t = (x - x_[k]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y_[k] + (t3 - 2 * t2 + t) * h * m_[k] + (-2 * t3 + 3 * t2) * y_[k + 1] +
           (t3 - t2) * h * m_[k + 1];
  }

 private:
  static double end_slope(double h0, double h1, double d0, double d1) {
    double m = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::fabs(m) > std::fabs(3 * d0)) return 3 * d0;
    return m;
  }

  std::vector<double> x_, y_, m_;
};

/// Channel quantities from a closed-form callable; used for analytic stand-ins in tests.
class FunctionProvider {
 public:
  FunctionProvider(std::function<ChannelQuantities(double)> f, double lo, double hi)
      : f_(std::move(f)), lo_(lo), hi_(hi) {}

  ChannelQuantities at(double p_tx) const {
    require(p_tx >= lo_ && p_tx <= hi_, ErrorKind::Extrapolation, "p_tx outside provider range");
    return f_(p_tx);
  }
  double min_p_tx() const { return lo_; }
  double max_p_tx() const { return hi_; }

 private:
  std::function<ChannelQuantities(double)> f_;
  double lo_, hi_;
};

/// Oracle run controls shared by every grid point of a provider.
struct OracleControls {
  std::size_t n_stations = 800;
  std::int64_t warmup_slots = 20'000;
  std::int64_t measure_slots = 400'000;
  std::uint64_t seed = 1;
  std::size_t batches = 20;
};

/// Log-spaced grid on [lo, hi] with `points` nodes, merged with `extra` nodes.
inline std::vector<double> log_grid(double lo, double hi, std::size_t points, const std::vector<double>& extra = {}) {
  require(lo > 0.0 && hi > lo && points >= 2, ErrorKind::Config, "bad grid bounds");
  std::vector<double> g;
  for (std::size_t k = 0; k < points; ++k)
    g.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(k) / static_cast<double>(points - 1)));
  g.front() = lo;
  g.back() = hi;
  for (double e : extra) {
    require(e > 0.0 && e < 1.0, ErrorKind::Config, "grid values must lie in (0, 1)");
    g.push_back(e);
  }
  std::sort(g.begin(), g.end());
  // Drop nodes closer than 2% (relative) to a retained neighbour, keeping explicit extras.
  std::vector<double> out;
  for (double v : g) {
    const bool is_extra = std::find(extra.begin(), extra.end(), v) != extra.end();
    if (!out.empty() && v < out.back() * 1.02) {
      const bool back_extra = std::find(extra.begin(), extra.end(), out.back()) != extra.end();
      if (v == out.back() || back_extra || !is_extra) continue;
      out.back() = v;
      continue;
    }
    out.push_back(v);
  }
  return out;
}

/// Seed of a grid point; depends on p_tx, not on the grid index, so caches survive regridding.
inline std::uint64_t grid_point_seed(std::uint64_t master, double p_tx) {
  return derive_seed(master, std::bit_cast<std::uint64_t>(p_tx));
}

inline std::string oracle_cache_key(double p_tx, int L, int R, const OracleControls& c) {
  std::ostringstream os;
  os << "oracle_p" << detail::format_double(p_tx) << "_L" << L << "_R" << R << "_n" << c.n_stations << "_m"
     << c.measure_slots << "_s" << c.seed << ".json";
  return os.str();
}

/// Oracle-backed provider: one Monte-Carlo run per grid point, fields interpolated in log p_tx.
/// Periods (T_RXP, T_TXP, T_UI) are interpolated as rates so that they stay well behaved where
/// transmissions become rare.
class InterpolatingProvider {
 public:
  explicit InterpolatingProvider(std::vector<ChannelQuantities> nodes) : nodes_(std::move(nodes)) {
    require(nodes_.size() >= 2, ErrorKind::Config, "provider needs at least two grid points");
    std::sort(nodes_.begin(), nodes_.end(), [](const auto& a, const auto& b) { return a.p_tx < b.p_tx; });
    for (std::size_t k = 0; k + 1 < nodes_.size(); ++k)
      require(nodes_[k].p_tx < nodes_[k + 1].p_tx, ErrorKind::Config, "duplicate grid point");
    for (const auto& nd : nodes_) x_.push_back(std::log(nd.p_tx));
    L_ = nodes_.front().frame_len_slots;
    R_ = nodes_.front().r_neighbors;
  }

  /// Runs (or loads from `cache_dir`) the oracle at every grid point.
  static InterpolatingProvider build(const std::vector<double>& grid, int L, int R, const OracleControls& c,
                                     const std::string& cache_dir = {}, std::ostream* progress = nullptr) {
    require(!grid.empty() && std::is_sorted(grid.begin(), grid.end()), ErrorKind::Config, "grid must be sorted");
    require(grid.front() > 0.0 && grid.back() < 1.0, ErrorKind::Config, "grid must lie in (0, 1)");
    std::vector<ChannelQuantities> nodes;
    for (double p : grid) {
      std::filesystem::path file;
      if (!cache_dir.empty()) {
        file = std::filesystem::path(cache_dir) / oracle_cache_key(p, L, R, c);
        if (std::filesystem::exists(file)) {
          std::ifstream in(file);
          Json j;
          try {
            in >> j;
            nodes.push_back(quantities_from_json(j));
            continue;
          } catch (const std::exception&) {
            // Corrupt cache entry: recompute below.
          }
        }
      }
      OracleParams prm;
      prm.p_tx = p;
      prm.frame_len_slots = L;
      prm.r_neighbors = R;
      prm.n_stations = c.n_stations;
      prm.warmup_slots = c.warmup_slots;
      prm.measure_slots = c.measure_slots;
      prm.batches = c.batches;
      prm.seed = grid_point_seed(c.seed, p);
      if (progress) *progress << "oracle p_tx=" << p << " L=" << L << " R=" << R << std::endl;
      nodes.push_back(run_oracle(prm));
      if (!file.empty()) {
        std::filesystem::create_directories(file.parent_path());
        const auto tmp = file.string() + ".tmp";
        write_text_file(tmp, to_json(nodes.back()).dump(1) + "\n");
        std::filesystem::rename(tmp, file);
      }
    }
    return InterpolatingProvider(std::move(nodes));
  }

  double min_p_tx() const { return nodes_.front().p_tx; }
  double max_p_tx() const { return nodes_.back().p_tx; }
  int frame_len_slots() const { return L_; }
  int r_neighbors() const { return R_; }
  const std::vector<ChannelQuantities>& nodes() const { return nodes_; }

  ChannelQuantities at(double p_tx) const {
    require(p_tx >= min_p_tx() && p_tx <= max_p_tx(), ErrorKind::Extrapolation,
            "p_tx=" + std::to_string(p_tx) + " outside provider grid [" + std::to_string(min_p_tx()) + ", " +
                std::to_string(max_p_tx()) + "]");
    for (const auto& nd : nodes_)
      if (nd.p_tx == p_tx) return nd;
    const double x = std::log(p_tx);
    ChannelQuantities q;
    q.p_tx = p_tx;
    q.frame_len_slots = L_;
    q.r_neighbors = R_;
    auto plain = [](const Estimate& e) { return e.value; };
    auto rate = [](const Estimate& e) { return e.valid() && e.value > 0.0 ? 1.0 / e.value : std::nan(""); };
    auto interp = [&](auto get, bool as_rate) {
      std::vector<double> y;
      y.reserve(nodes_.size());
      for (const auto& nd : nodes_) y.push_back(as_rate ? rate(get(nd)) : plain(get(nd)));
      return interpolate(y, x, as_rate);
    };
    q.p_ii = interp([](const ChannelQuantities& c) { return c.p_ii; }, false);
    q.p_tx_given_idle = interp([](const ChannelQuantities& c) { return c.p_tx_given_idle; }, false);
    q.mean_t_rb = interp([](const ChannelQuantities& c) { return c.mean_t_rb; }, false);
    q.p_i = interp([](const ChannelQuantities& c) { return c.p_i; }, false);
    q.p_of = interp([](const ChannelQuantities& c) { return c.p_of; }, false);
    q.p_if = interp([](const ChannelQuantities& c) { return c.p_if; }, false);
    q.mean_t_rxp = interp([](const ChannelQuantities& c) { return c.mean_t_rxp; }, true);
    q.mean_t_txp = interp([](const ChannelQuantities& c) { return c.mean_t_txp; }, true);
    q.goodput = interp([](const ChannelQuantities& c) { return c.goodput; }, false);
    for (int d = 0; d < R_; ++d) {
      const auto k = static_cast<std::size_t>(d);
      auto at_d = [k](const std::vector<Estimate>& v) { return k < v.size() ? v[k] : Estimate{}; };
      q.f_d_given_if.push_back(interp([&](const ChannelQuantities& c) { return at_d(c.f_d_given_if); }, false));
      q.t_ui_direct.push_back(interp([&](const ChannelQuantities& c) { return at_d(c.t_ui_direct); }, true));
      q.p_fif_direct.push_back(interp([&](const ChannelQuantities& c) { return at_d(c.p_fif_direct); }, false));
      q.p_async_direct.push_back(interp([&](const ChannelQuantities& c) { return at_d(c.p_async_direct); }, false));
    }
    // f(d) is a distribution; interpolation keeps it only approximately normalised.
    double sum = 0.0;
    for (const auto& e : q.f_d_given_if) sum += e.value;
    if (sum > 0.0 && std::isfinite(sum))
      for (auto& e : q.f_d_given_if) e.value /= sum;
    return q;
  }

 private:
  // Interpolates on the valid nodes only; NaN if the query is outside the valid span.
  Estimate interpolate(const std::vector<double>& y, double x, bool as_rate) const {
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < y.size(); ++k)
      if (std::isfinite(y[k])) {
        xs.push_back(x_[k]);
        ys.push_back(y[k]);
      }
    Estimate e;
    if (xs.size() < 2 || x < xs.front() || x > xs.back()) return e;
    const double v = Pchip(std::move(xs), std::move(ys))(x);
    e.value = as_rate ? (v > 0.0 ? 1.0 / v : std::nan("")) : v;
    e.ci = 0.0;
    return e;
  }

  std::vector<ChannelQuantities> nodes_;
  std::vector<double> x_;
  int L_ = 0, R_ = 0;
};

}  // namespace vbcast
