#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace vbcast {

/// Point estimate with a 95% confidence half-width and the number of raw samples behind it.
/// A flagged estimate carries no value (NaN) and must not be consumed as a number.
struct Estimate {
  double value = std::numeric_limits<double>::quiet_NaN();
  double ci = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n = 0;

  bool valid() const { return std::isfinite(value); }
};

// Two-sided 95% Student-t quantiles for 1..30 degrees of freedom.
inline double t95(std::size_t dof) {
  static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                     2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                     2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                     2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof == 0) return std::numeric_limits<double>::infinity();
  if (dof <= 30) return table[dof - 1];
  return 1.96;
}

/// Ratio estimator sum(num) / sum(den) with batch-means confidence interval. Batches are
/// contiguous time windows of a single run, so the CI accounts for serial correlation as long
/// as a batch is much longer than the correlation time.
class BatchRatio {
 public:
  explicit BatchRatio(std::size_t batches = 20) : num_(batches, 0.0), den_(batches, 0.0), cnt_(batches, 0) {}

  void add(std::size_t batch, double num, double den = 1.0) {
    num_[batch] += num;
    den_[batch] += den;
    ++cnt_[batch];
  }

  std::size_t batches() const { return num_.size(); }
  std::int64_t samples() const {
    std::int64_t s = 0;
    for (auto c : cnt_) s += c;
    return s;
  }
  double total_num() const {
    double s = 0;
    for (double v : num_) s += v;
    return s;
  }
  double total_den() const {
    double s = 0;
    for (double v : den_) s += v;
    return s;
  }

  /// Estimate; NaN when the denominator is zero.
  Estimate estimate() const {
    Estimate e;
    e.n = samples();
    const double d = total_den();
    if (!(d > 0.0)) return e;
    e.value = total_num() / d;
    // Batch ratios weighted equally; batches with empty denominators are skipped.
    double m = 0.0, m2 = 0.0;
    std::size_t k = 0;
    for (std::size_t b = 0; b < num_.size(); ++b) {
      if (!(den_[b] > 0.0)) continue;
      const double r = num_[b] / den_[b];
      ++k;
      const double delta = r - m;
      m += delta / static_cast<double>(k);
      m2 += delta * (r - m);
    }
    if (k >= 2) {
      const double sd = std::sqrt(m2 / static_cast<double>(k - 1));
      e.ci = t95(k - 1) * sd / std::sqrt(static_cast<double>(k));
    } else {
      e.ci = std::numeric_limits<double>::infinity();
    }
    return e;
  }

 private:
  std::vector<double> num_;
  std::vector<double> den_;
  std::vector<std::int64_t> cnt_;
};

/// Maps a slot index inside [begin, begin + length) to one of `batches` equal windows.
struct BatchClock {
  std::int64_t begin = 0;
  std::int64_t length = 1;
  std::size_t batches = 20;

  std::size_t operator()(std::int64_t slot) const {
    const auto off = slot - begin;
    auto b = static_cast<std::size_t>((static_cast<unsigned __int128>(off) * batches) /
                                      static_cast<unsigned __int128>(length));
    return b < batches ? b : batches - 1;
  }
};

}  // namespace vbcast
