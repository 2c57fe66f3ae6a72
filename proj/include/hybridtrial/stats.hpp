#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace hybridtrial::stats {

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7, the R default).
inline double quantile_sorted(std::span<const double> sorted, double prob) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> v, double prob) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, prob);
}

} // namespace hybridtrial::stats
