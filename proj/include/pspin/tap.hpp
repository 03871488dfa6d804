#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "pspin/disorder.hpp"
#include "pspin/errors.hpp"
#include "pspin/parisi.hpp"
#include "pspin/spike_bulk.hpp"
#include "pspin/tails.hpp"

namespace pspin {

/// Cavity-shifted covariance eta_q(t) = xi(q + (1-q)t) - xi(q), expanded to
/// explicit polynomial coefficients. Constant term exactly 0, coefficients
/// nonnegative, and eta_q(1) = xi(1) - xi(q).
inline MixtureFunction eta(const MixtureFunction& xi, double q) {
    if (!(q >= 0.0 && q < 1.0)) throw config_error("eta requires q in [0,1)");
    return xi.conditional(q);
}

/// Bulk covariance of the one-dimensional variational formula: only layers
/// whose c_N limit is finite enter, with coefficient gamma_p^2.
inline MixtureFunction bulk_mixture(const MixtureSpec& spec,
                                    const std::vector<TailScales>& scales) {
    if (scales.size() != spec.layers.size())
        throw config_error("bulk_mixture: one scale set per layer required");
    std::vector<std::pair<int, double>> layers;
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (scales[i].in_bulk_mixture() && spec.layers[i].gamma != 0.0)
            layers.emplace_back(spec.layers[i].p, spec.layers[i].gamma);
    if (layers.empty()) return MixtureFunction();
    return MixtureFunction::from_layers(layers);
}

/// The three addends of the variational objective at slice mass q.
struct TapObjective {
    double q = 0.0;
    double entropy = 0.0; // (1/2) log(1-q), <= 0
    double bulk = 0.0;    // minimized functional of eta_q at beta
    double spike = 0.0;   // extremal spike energy at q, >= 0
    double total = 0.0;   // sum of the three
};

/// Evaluate (1/2)log(1-q) + P(eta_q; beta) + E^NIM(q) at one q. The beta
/// argument overrides spec.beta for both the bulk solve and the spike term.
inline TapObjective tap_value(const MixtureFunction& xi, const MixtureSpec& spec,
                              const std::vector<ExtremeStat>& lambdas,
                              const std::vector<TailScales>& scales, double beta, double q,
                              const ParisiOptions& popts = {}) {
    if (!(q >= 0.0 && q <= 1.0 - 1e-6))
        throw config_error("tap_value requires q in [0, 1-1e-6]");
    MixtureSpec at_beta = spec;
    at_beta.beta = beta;
    TapObjective t;
    t.q = q;
    t.entropy = 0.5 * std::log1p(-q);
    t.bulk = parisi_solve(eta(xi, q), beta, popts).value;
    t.spike = e_nim(at_beta, lambdas, scales, q);
    t.total = t.entropy + t.bulk + t.spike;
    return t;
}

namespace detail {

/// Evaluation grid for the sup over q: half uniform on [0, 0.9] (q = 0
/// included exactly), half geometric in 1-q from 0.1 down to 1e-4.
inline std::vector<double> tap_grid(int n) {
    if (n < 8) throw config_error("tap grid needs at least 8 points");
    const int n_uni = n / 2;
    const int n_geo = n - n_uni;
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n_uni; ++i)
        g.push_back(0.9 * static_cast<double>(i) / static_cast<double>(n_uni - 1));
    const double ratio = std::pow(1e-4 / 0.1, 1.0 / static_cast<double>(n_geo));
    for (int i = 1; i <= n_geo; ++i) g.push_back(1.0 - 0.1 * std::pow(ratio, i));
    return g;
}

} // namespace detail

/// Maximize the variational objective over q in [0, 1-1e-4]: evaluate the
/// grid with warm-started bulk solves, then refine around every grid-local
/// maximum by golden section to |dq| <= 1e-6. Deterministic; exact ties
/// resolve to the smallest q.
inline std::pair<double, TapObjective>
tap_optimize(const MixtureFunction& xi, const MixtureSpec& spec,
             const std::vector<ExtremeStat>& lambdas, const std::vector<TailScales>& scales,
             double beta, const ParisiOptions& popts = {}, int grid_points = 200) {
    MixtureSpec at_beta = spec;
    at_beta.beta = beta;
    const bool no_bulk = xi.is_zero() || beta == 0.0;

    OrderParam warm;
    bool have_warm = false;
    auto value_at = [&](double q, OrderParam* xmin) {
        TapObjective t;
        t.q = q;
        t.entropy = 0.5 * std::log1p(-q);
        if (no_bulk) {
            t.bulk = 0.0;
        } else {
            ParisiOptions o = popts;
            if (have_warm) o.warm_start = &warm;
            ParisiResult pr = parisi_solve(eta(xi, q), beta, o);
            t.bulk = pr.value;
            if (xmin) *xmin = std::move(pr.x);
        }
        t.spike = e_nim(at_beta, lambdas, scales, q);
        t.total = t.entropy + t.bulk + t.spike;
        return t;
    };

    const std::vector<double> grid = detail::tap_grid(grid_points);
    std::vector<TapObjective> evals;
    std::vector<OrderParam> minimizers(grid.size());
    evals.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        evals.push_back(value_at(grid[i], &minimizers[i]));
        if (!no_bulk) {
            warm = minimizers[i];
            have_warm = true;
        }
    }

    TapObjective best = evals[0];
    auto consider = [&](const TapObjective& t) {
        if (t.total > best.total || (t.total == best.total && t.q < best.q)) best = t;
    };
    for (const auto& t : evals) consider(t);

    // Golden-section refinement around every interior or boundary grid-local
    // maximum; the objective may be bimodal (entropy+bulk vs spike), so a
    // single bracket around the best point is not enough.
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const bool up_ok = i == 0 || evals[i].total >= evals[i - 1].total;
        const bool down_ok = i + 1 == grid.size() || evals[i].total >= evals[i + 1].total;
        if (!(up_ok && down_ok)) continue;
        double lo = i == 0 ? grid[0] : grid[i - 1];
        double hi = i + 1 == grid.size() ? grid.back() : grid[i + 1];
        if (hi - lo <= 1e-6) continue;
        warm = minimizers[i];
        have_warm = !no_bulk;
        double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
        TapObjective t1 = value_at(x1, nullptr), t2 = value_at(x2, nullptr);
        consider(t1);
        consider(t2);
        while (hi - lo > 1e-6) {
            if (t1.total < t2.total) {
                lo = x1;
                x1 = x2;
                t1 = t2;
                x2 = lo + gr * (hi - lo);
                t2 = value_at(x2, nullptr);
                consider(t2);
            } else {
                hi = x2;
                x2 = x1;
                t2 = t1;
                x1 = hi - gr * (hi - lo);
                t1 = value_at(x1, nullptr);
                consider(t1);
            }
        }
    }
    return {best.q, best};
}

} // namespace pspin
