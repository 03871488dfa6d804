#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "pspin/errors.hpp"

namespace pspin {

/// Mixture function xi(q) = sum_{j>=1} a_j q^j with nonnegative coefficients
/// and xi(0) = 0. A linear term is allowed: conditioning a mixture on a fixed
/// overlap produces one even when every layer has p >= 2.
class MixtureFunction {
public:
    MixtureFunction() : a_(1, 0.0) {}

    explicit MixtureFunction(std::vector<double> coeffs) : a_(std::move(coeffs)) {
        if (a_.empty()) a_.assign(1, 0.0);
        if (a_[0] != 0.0) throw config_error("mixture constant term must be zero");
        for (double c : a_)
            if (!(c >= 0.0)) throw config_error("mixture coefficients must be >= 0");
    }

    /// xi(q) = sum_p gamma_p^2 q^p from (p, gamma_p) layer pairs.
    static MixtureFunction from_layers(const std::vector<std::pair<int, double>>& layers) {
        int deg = 0;
        for (const auto& [p, g] : layers) {
            if (p < 1) throw config_error("mixture layer degree must be >= 1");
            (void)g;
            deg = std::max(deg, p);
        }
        std::vector<double> a(static_cast<std::size_t>(deg) + 1, 0.0);
        for (const auto& [p, g] : layers) a[static_cast<std::size_t>(p)] += g * g;
        return MixtureFunction(std::move(a));
    }

    double value(double q) const {
        double v = 0.0;
        for (std::size_t j = a_.size(); j-- > 1;) v = (v + a_[j]) * q;
        return v;
    }

    double deriv(double q) const {
        double v = 0.0;
        for (std::size_t j = a_.size(); j-- > 2;) v = v * q + static_cast<double>(j) * a_[j];
        return a_.size() > 1 ? v * q + a_[1] : 0.0;
    }

    double deriv2(double q) const {
        double v = 0.0;
        for (std::size_t j = a_.size(); j-- > 2;)
            v = v * q + static_cast<double>(j) * static_cast<double>(j - 1) * a_[j];
        return v;
    }

    int degree() const { return static_cast<int>(a_.size()) - 1; }
    const std::vector<double>& coefficients() const { return a_; }

    bool is_zero() const {
        for (double c : a_)
            if (c != 0.0) return false;
        return true;
    }

    /// Bulk remainder after fixing an overlap q0 with a reference point:
    /// eta(s) = xi(q0 + (1-q0) s) - xi(q0), a mixture in s with eta(0) = 0.
    /// Coefficients: eta_j = sum_p a_p C(p,j) q0^(p-j) (1-q0)^j for j >= 1.
    MixtureFunction conditional(double q0) const {
        if (!(q0 >= 0.0 && q0 <= 1.0)) throw config_error("overlap q0 must lie in [0,1]");
        const int deg = degree();
        std::vector<double> out(static_cast<std::size_t>(deg) + 1, 0.0);
        for (int p = 1; p <= deg; ++p) {
            const double ap = a_[static_cast<std::size_t>(p)];
            if (ap == 0.0) continue;
            double binom = static_cast<double>(p); // C(p,1)
            for (int j = 1; j <= p; ++j) {
                out[static_cast<std::size_t>(j)] +=
                    ap * binom * std::pow(q0, p - j) * std::pow(1.0 - q0, j);
                binom *= static_cast<double>(p - j) / static_cast<double>(j + 1);
            }
        }
        return MixtureFunction(std::move(out));
    }

private:
    std::vector<double> a_;
};

/// Step-function order parameter for the spherical variational free energy.
/// x(q) = values[i] on [breaks[i-1], breaks[i]) (with breaks[-1] := 0), and
/// x = 1 on [qhat, 1] where qhat = breaks.back() (qhat = 0 when empty, i.e.
/// the replica-symmetric point x == 1).
struct OrderParam {
    std::vector<double> breaks; // ascending, in [0,1)
    std::vector<double> values; // nondecreasing, in [0,1], same size

    std::size_t levels() const { return breaks.size(); }
};

inline void validate_order_param(const OrderParam& x) {
    if (x.breaks.size() != x.values.size())
        throw config_error("order parameter breaks/values size mismatch");
    double pb = 0.0, pv = 0.0;
    for (std::size_t i = 0; i < x.breaks.size(); ++i) {
        if (!(x.breaks[i] >= pb && x.breaks[i] < 1.0))
            throw config_error("order parameter breaks must be ascending in [0,1)");
        if (!(x.values[i] >= pv && x.values[i] <= 1.0))
            throw config_error("order parameter values must be nondecreasing in [0,1]");
        pb = x.breaks[i];
        pv = x.values[i];
    }
}

/// Spherical variational free-energy functional at inverse temperature beta:
/// with Theta(q) = beta^2 xi(q) and xhat(q) = integral of x from q to 1,
///   P(x) = (1/2) [ Theta'(0) xhat(0) + int_0^1 Theta'' xhat
///                  + int_0^qhat dq / xhat + log(1 - qhat) ].
/// Every integral is evaluated segment-exactly: xhat is piecewise linear, so
/// the Theta'' integral reduces to Theta and Theta' at breakpoints, and
/// int dq/xhat has a log antiderivative per segment (with the exact
/// slope-zero limit (b-a)/xhat). At x == 1 this collapses to beta^2 xi(1)/2.
inline double cs_energy(const MixtureFunction& xi, double beta, const OrderParam& x) {
    if (!(beta >= 0.0)) throw config_error("inverse temperature beta must be >= 0");
    validate_order_param(x);
    const double b2 = beta * beta;
    auto Th = [&](double q) { return b2 * xi.value(q); };
    auto Thp = [&](double q) { return b2 * xi.deriv(q); };

    const std::size_t k = x.breaks.size();
    const double qhat = k ? x.breaks.back() : 0.0;

    // Top segment [qhat, 1]: x = 1, xhat(q) = 1 - q, xhat(1) = 0.
    double term_curv = Th(1.0) - Th(qhat) - (1.0 - qhat) * Thp(qhat);
    double term_inv = 0.0;
    double X = 1.0 - qhat; // xhat at the left edge processed so far

    for (std::size_t i = k; i-- > 0;) {
        const double a = i ? x.breaks[i - 1] : 0.0;
        const double b = x.breaks[i];
        const double m = x.values[i];
        const double L = b - a;
        if (L <= 0.0) continue;
        // xhat(q) = X + m (b - q) on [a, b], with X = xhat(b).
        term_curv += X * (Thp(b) - Thp(a)) + m * (Th(b) - Th(a) - L * Thp(a));
        const double t = m * L / X;
        term_inv += (L / X) * (t == 0.0 ? 1.0 : std::log1p(t) / t);
        X += m * L;
    }

    const double term_field = Thp(0.0) * X; // X is now xhat(0)
    return 0.5 * (term_field + term_curv + term_inv + std::log1p(-qhat));
}

struct ParisiOptions {
    int k_max = 8;          // largest number of steps tried
    double tol = 1e-7;      // stop when one more step improves by less
    double q_cap = 1.0 - 1e-6; // breaks confined to [0, q_cap]
    int nm_iters_per_dim = 250;
    const OrderParam* warm_start = nullptr; // extra start at its own level count
};

struct ParisiResult {
    double value = 0.0;        // minimized functional
    OrderParam x;              // minimizer found
    std::vector<double> per_k; // best value with 0,1,...,k steps (nonincreasing)
    bool converged = false;    // last refinement fell below tol
};

namespace detail {

// Monotone reparametrization: k free logits plus a fixed zero logit map via
// softmax + cumulative sum onto 0 < t_1 < ... < t_k < 1.
inline std::vector<double> cumsoftmax(const double* u, std::size_t k) {
    double mx = 0.0;
    for (std::size_t i = 0; i < k; ++i) mx = std::max(mx, std::min(60.0, std::max(-60.0, u[i])));
    double denom = std::exp(0.0 - mx);
    std::vector<double> t(k);
    for (std::size_t i = 0; i < k; ++i) {
        t[i] = std::exp(std::min(60.0, std::max(-60.0, u[i])) - mx);
        denom += t[i];
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        // summing rounded quotients can land one ulp above 1; keep it inside
        acc = std::min(acc + t[i] / denom, 1.0);
        t[i] = acc;
    }
    return t;
}

inline OrderParam param_from_logits(const std::vector<double>& u, double q_cap) {
    const std::size_t k = u.size() / 2;
    OrderParam x;
    x.breaks = cumsoftmax(u.data(), k);
    for (double& b : x.breaks) b *= q_cap;
    x.values = cumsoftmax(u.data() + k, k);
    return x;
}

// Inverse of the map above; increments are floored to keep logits finite.
inline std::vector<double> logits_from_param(const OrderParam& x, double q_cap) {
    const std::size_t k = x.breaks.size();
    std::vector<double> u(2 * k);
    auto fill = [](double* out, const std::vector<double>& v, double scale) {
        const std::size_t k2 = v.size();
        std::vector<double> inc(k2 + 1);
        double prev = 0.0;
        for (std::size_t i = 0; i < k2; ++i) {
            inc[i] = std::max(v[i] / scale - prev, 1e-12);
            prev = v[i] / scale;
        }
        inc[k2] = std::max(1.0 - prev, 1e-12);
        for (std::size_t i = 0; i < k2; ++i) out[i] = std::log(inc[i] / inc[k2]);
    };
    fill(u.data(), x.breaks, q_cap);
    fill(u.data() + k, x.values, 1.0);
    return u;
}

// Grow a k-level parameter to k+1 levels without changing the function: the
// widest step is split at its midpoint, both halves keeping its value.
inline OrderParam split_widest(const OrderParam& x) {
    OrderParam y = x;
    if (x.breaks.empty()) {
        y.breaks = {0.5};
        y.values = {0.5};
        return y;
    }
    std::size_t best = 0;
    double wid = -1.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < x.breaks.size(); ++i) {
        const double w = x.breaks[i] - prev;
        if (w > wid) {
            wid = w;
            best = i;
        }
        prev = x.breaks[i];
    }
    const double lo = best ? x.breaks[best - 1] : 0.0;
    y.breaks.insert(y.breaks.begin() + static_cast<std::ptrdiff_t>(best),
                    0.5 * (lo + x.breaks[best]));
    y.values.insert(y.values.begin() + static_cast<std::ptrdiff_t>(best), x.values[best]);
    return y;
}

// Plain Nelder-Mead on an unconstrained space. Deterministic; returns the
// best vertex found.
inline std::pair<double, std::vector<double>> nelder_mead(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> start,
    double step, int max_iter, double ftol) {
    const std::size_t n = start.size();
    std::vector<std::vector<double>> pts(n + 1, start);
    std::vector<double> val(n + 1);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
    for (std::size_t i = 0; i <= n; ++i) val[i] = f(pts[i]);

    std::vector<std::size_t> ord(n + 1);
    for (int it = 0; it < max_iter; ++it) {
        std::iota(ord.begin(), ord.end(), std::size_t{0});
        std::stable_sort(ord.begin(), ord.end(),
                         [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
        const std::size_t best = ord[0], worst = ord[n], second = ord[n ? n - 1 : 0];
        if (val[worst] - val[best] < ftol) break;

        std::vector<double> cen(n, 0.0);
        for (std::size_t j = 0; j <= n; ++j)
            if (j != worst)
                for (std::size_t d = 0; d < n; ++d) cen[d] += pts[j][d];
        for (double& c : cen) c /= static_cast<double>(n);

        auto combine = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t d = 0; d < n; ++d)
                p[d] = cen[d] + coef * (pts[worst][d] - cen[d]);
            return p;
        };

        std::vector<double> refl = combine(-1.0);
        const double fr = f(refl);
        if (fr < val[best]) {
            std::vector<double> exp_ = combine(-2.0);
            const double fe = f(exp_);
            if (fe < fr) {
                pts[worst] = std::move(exp_);
                val[worst] = fe;
            } else {
                pts[worst] = std::move(refl);
                val[worst] = fr;
            }
        } else if (fr < val[second]) {
            pts[worst] = std::move(refl);
            val[worst] = fr;
        } else {
            std::vector<double> con = combine(fr < val[worst] ? -0.5 : 0.5);
            const double fc = f(con);
            if (fc < std::min(fr, val[worst])) {
                pts[worst] = std::move(con);
                val[worst] = fc;
            } else {
                for (std::size_t j = 0; j <= n; ++j) {
                    if (j == best) continue;
                    for (std::size_t d = 0; d < n; ++d)
                        pts[j][d] = pts[best][d] + 0.5 * (pts[j][d] - pts[best][d]);
                    val[j] = f(pts[j]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (val[i] < val[best]) best = i;
    return {val[best], pts[best]};
}

} // namespace detail

/// Minimize the variational functional over step order parameters, raising
/// the number of steps until one more buys less than opts.tol. The sequence
/// of per-level values is nonincreasing by construction (each level embeds
/// the previous minimizer as a start and keeps the running minimum).
inline ParisiResult parisi_solve(const MixtureFunction& xi, double beta,
                                 const ParisiOptions& opts = {}) {
    if (!(beta >= 0.0)) throw config_error("inverse temperature beta must be >= 0");
    ParisiResult res;
    res.x = OrderParam{};
    res.value = cs_energy(xi, beta, res.x); // x == 1: exactly beta^2 xi(1) / 2
    res.per_k.push_back(res.value);
    if (beta == 0.0 || xi.is_zero()) {
        res.converged = true;
        return res;
    }

    OrderParam prev_best = res.x;
    for (int k = 1; k <= opts.k_max; ++k) {
        auto objective = [&](const std::vector<double>& u) {
            return cs_energy(xi, beta, detail::param_from_logits(u, opts.q_cap));
        };

        std::vector<std::vector<double>> starts;
        starts.push_back(detail::logits_from_param(detail::split_widest(prev_best), opts.q_cap));
        static const double offs[][2] = {{0, 0}, {2, -2}, {-2, 2}, {2, 2}, {-2, -2}};
        for (const auto& o : offs) {
            std::vector<double> u(2 * static_cast<std::size_t>(k));
            for (int i = 0; i < k; ++i) {
                u[static_cast<std::size_t>(i)] = o[0];
                u[static_cast<std::size_t>(k + i)] = o[1];
            }
            starts.push_back(std::move(u));
        }
        if (k == 1) {
            for (double bq : {4.0, -4.0})
                for (double bv : {4.0, -4.0}) starts.push_back({bq, bv});
        }
        if (opts.warm_start && static_cast<int>(opts.warm_start->levels()) == k)
            starts.push_back(detail::logits_from_param(*opts.warm_start, opts.q_cap));

        double best_v = res.value;
        OrderParam best_x = res.x;
        const int iters = opts.nm_iters_per_dim * 2 * k;
        for (const auto& s : starts) {
            auto [v, u] = detail::nelder_mead(objective, s, 0.5, iters, 1e-12);
            if (v < best_v) {
                best_v = v;
                best_x = detail::param_from_logits(u, opts.q_cap);
            }
        }

        const double gain = res.per_k.back() - best_v;
        res.per_k.push_back(std::min(best_v, res.per_k.back()));
        if (best_v < res.value) {
            res.value = best_v;
            res.x = best_x;
            prev_best = best_x;
        } else {
            prev_best = detail::split_widest(prev_best);
        }
        if (gain < opts.tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

} // namespace pspin
