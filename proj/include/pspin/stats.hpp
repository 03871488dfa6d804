#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "pspin/errors.hpp"

namespace pspin {

/// log(sum_i exp(x_i)) guarded against overflow; -inf on an empty list.
inline double logsumexp(std::span<const double> x) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx; // empty or all -inf (or a stray +-inf)
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - mx);
    return mx + std::log(acc);
}

inline double logmeanexp(std::span<const double> x) {
    if (x.empty()) throw config_error("logmeanexp of an empty list");
    return logsumexp(x) - std::log(static_cast<double>(x.size()));
}

inline double mean(std::span<const double> x) {
    if (x.empty()) throw config_error("mean of an empty list");
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc / static_cast<double>(x.size());
}

/// Median by value (sorts its own copy); average of the two middle order
/// statistics for even length.
inline double median(std::vector<double> x) {
    if (x.empty()) throw config_error("median of an empty list");
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return (n % 2 == 1) ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

inline double pearson_corr(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw config_error("correlation needs two equal-length lists of size >= 2");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw numerical_error("correlation of a constant list");
    return sxy / std::sqrt(sxx * syy);
}

/// One-sample two-sided Kolmogorov-Smirnov statistic against a CDF.
template <class Cdf>
inline double ks_statistic(std::vector<double> sample, Cdf&& cdf) {
    if (sample.empty()) throw config_error("KS statistic of an empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, std::max((i + 1.0) / n - f, f - static_cast<double>(i) / n));
    }
    return d;
}

/// Standard error from delete-one-block jackknife replicates: the list holds
/// the statistic recomputed without each block.
inline double jackknife_stderr(std::span<const double> leave_one_out) {
    const std::size_t B = leave_one_out.size();
    if (B < 2) throw config_error("jackknife needs at least 2 blocks");
    const double m = mean(leave_one_out);
    double ss = 0.0;
    for (double v : leave_one_out) ss += (v - m) * (v - m);
    return std::sqrt(ss * (static_cast<double>(B) - 1.0) / static_cast<double>(B));
}

} // namespace pspin
