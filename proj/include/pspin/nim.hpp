#pragma once

#include <cmath>
#include <map>
#include <mutex>

#include "pspin/errors.hpp"

namespace pspin {

/// One-dimensional spike functionals. For a single monomial of degree p with
/// effective strength h >= 0 the spike free energy is
///   f_p(h) = sup_{q in [0,1)} [ (1/2) log(1-q) + h (q/p)^(p/2) ],
/// and the matching ground-state (zero-temperature) functional is the value
/// of the energy term at q = 1,
///   g_p(h) = h (1/p)^(p/2).

/// The variational objective itself, for q in [0,1).
inline double nim_objective(int p, double h, double q) {
    if (p < 2) throw config_error("monomial degree p must be >= 2");
    if (!(q >= 0.0 && q < 1.0)) throw config_error("overlap q must lie in [0,1)");
    return 0.5 * std::log1p(-q) + h * std::pow(q / p, p / 2.0);
}

/// Ground-state functional g_p(h) = h / p^(p/2), exact.
inline double g(int p, double h) {
    if (p < 2) throw config_error("monomial degree p must be >= 2");
    if (!(h >= 0.0)) throw config_error("spike strength h must be >= 0");
    return h / std::pow(static_cast<double>(p), p / 2.0);
}

struct NimOpt {
    double value = 0.0;  // f_p(h)
    double qstar = 0.0;  // maximizer (0 when the sup is at the origin)
    double lambda = 0.0; // qstar / (2p (1 - qstar))
};

namespace detail {

// Stationarity of the objective in the variable lambda = q / (2p(1-q)):
//   phi(lambda) = 2 log h + (p-2) log(2 lambda) - p log(1 + 2p lambda) = 0.
// At a root, the objective value is 2 lambda - (1/2) log(1 + 2p lambda) and
// the overlap is q = 2p lambda / (1 + 2p lambda).
inline double nim_phi(int p, double h, double lam) {
    return 2.0 * std::log(h) + (p - 2) * std::log(2.0 * lam) - p * std::log1p(2.0 * p * lam);
}

inline double nim_value_at(int p, double lam) {
    return 2.0 * lam - 0.5 * std::log1p(2.0 * p * lam);
}

inline double nim_q_of(int p, double lam) {
    const double t = 2.0 * p * lam;
    return t / (1.0 + t);
}

// Largest root of phi, which corresponds to the interior local maximum of the
// objective. phi is unimodal on (0, inf) with peak at lambda = (p-2)/(4p) for
// p >= 3; returns a negative value when no root exists (objective decreasing).
inline double nim_largest_root(int p, double h) {
    const double peak = (p - 2) / (4.0 * p);
    if (nim_phi(p, h, peak) < 0.0) return -1.0;
    double lo = peak, hi = peak > 0.0 ? 2.0 * peak : 1.0;
    if (hi <= lo) hi = lo + 1.0;
    while (nim_phi(p, h, hi) >= 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) throw numerical_error("spike stationarity bracket diverged");
    }
    for (int it = 0; it < 200 && (hi - lo) > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (nim_phi(p, h, mid) >= 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Closed-form evaluation of f_p(h) and its maximizer.
inline NimOpt nim_optimum(int p, double h) {
    if (p < 2) throw config_error("monomial degree p must be >= 2");
    if (!(h >= 0.0)) throw config_error("spike strength h must be >= 0");
    NimOpt out;
    if (h == 0.0) return out;
    if (p == 2) {
        // Stationarity reduces to 1 - q = 1/h; below h = 1 the sup is at 0.
        if (h <= 1.0) return out;
        out.qstar = 1.0 - 1.0 / h;
        out.lambda = 0.25 * (h - 1.0);
        out.value = 0.5 * (h - 1.0) - 0.5 * std::log(h);
        return out;
    }
    const double lam = detail::nim_largest_root(p, h);
    if (lam <= 0.0) return out;
    const double v = detail::nim_value_at(p, lam);
    if (v <= 0.0) return out; // interior max exists but loses to q = 0
    out.value = v;
    out.qstar = detail::nim_q_of(p, lam);
    out.lambda = lam;
    return out;
}

inline double nim_value(int p, double h) { return nim_optimum(p, h).value; }
inline double nim_qstar(int p, double h) { return nim_optimum(p, h).qstar; }

/// Smallest h with f_p(h) > 0. Exactly 1 for p = 2; computed once per p by
/// bisection on the (nondecreasing in h) interior maximum value and cached.
/// The cache is guarded for concurrent first calls (compute-once, idempotent).
inline double nim_threshold(int p) {
    if (p < 2) throw config_error("monomial degree p must be >= 2");
    if (p == 2) return 1.0;
    static std::mutex mu;
    static std::map<int, double> cache;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(p);
        if (it != cache.end()) return it->second;
    }
    auto interior_value = [p](double h) {
        const double lam = detail::nim_largest_root(p, h);
        return lam <= 0.0 ? -1.0 : detail::nim_value_at(p, lam);
    };
    double lo = 1e-8;                       // f = 0 here
    double hi = std::pow(2.0 * p, p / 2.0); // f > 0 here
    if (!(interior_value(hi) > 0.0)) throw numerical_error("spike threshold bracket failed");
    for (int it = 0; it < 200 && (hi - lo) > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (interior_value(mid) > 0.0 ? hi : lo) = mid;
    }
    const double thr = 0.5 * (lo + hi);
    std::lock_guard<std::mutex> lock(mu);
    cache.emplace(p, thr);
    return thr;
}

/// Full record of one closed-form evaluation.
struct MonomialValue {
    int p = 2;
    double h = 0.0;
    double value = 0.0;     // f_p(h)
    double qstar = 0.0;     // maximizer in [0,1)
    double lambda = 0.0;    // qstar / (2p (1 - qstar))
    double threshold = 0.0; // h_p^*
};

inline MonomialValue f_closed(int p, double h) {
    const NimOpt opt = nim_optimum(p, h);
    return MonomialValue{p, h, opt.value, opt.qstar, opt.lambda, nim_threshold(p)};
}

/// Grid-plus-refinement evaluation of f_p(h): coarse grid on [0, 1-1e-6],
/// then golden-section refinement of the best bracket to |dq| <= 1e-10. The
/// result is clamped below by the q = 0 value 0. Serves as the independent
/// route against which the closed form is checked.
inline double f_grid(int p, double h, int grid_points = 2000) {
    if (p < 2) throw config_error("monomial degree p must be >= 2");
    if (!(h >= 0.0)) throw config_error("spike strength h must be >= 0");
    if (grid_points < 8) throw config_error("grid needs at least 8 points");
    const double q_hi = 1.0 - 1e-6;
    auto obj = [&](double q) { return 0.5 * std::log1p(-q) + h * std::pow(q / p, p / 2.0); };

    double best_q = 0.0, best_v = 0.0; // q = 0 always a candidate
    const double step = q_hi / (grid_points - 1);
    for (int i = 1; i < grid_points; ++i) {
        const double q = i * step;
        const double v = obj(q);
        if (v > best_v) {
            best_v = v;
            best_q = q;
        }
    }

    double lo = std::max(0.0, best_q - step);
    double hi = std::min(q_hi, best_q + step);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = obj(x1), f2 = obj(x2);
    while (hi - lo > 1e-10) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = obj(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = obj(x1);
        }
    }
    return std::max(0.0, std::max(std::max(f1, f2), best_v));
}

} // namespace pspin
