#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "pspin/errors.hpp"
#include "pspin/multiset.hpp"
#include "pspin/rng.hpp"

namespace pspin {

/// Marginal law of one base coupling draw.
///
/// HeavyTail(alpha) is the symmetric Pareto with P(|X| > u) = min(1, u^-alpha):
/// the slowly varying part of the tail is fixed to the constant 1, which keeps
/// quantile inversion exact. FiniteMoment laws are centered with variance one.
struct TailLaw {
    enum class Kind { HeavyTail, FiniteMoment };
    enum class Dist { Gaussian, Rademacher };

    Kind kind = Kind::FiniteMoment;
    double alpha = 0.0; // tail index, HeavyTail only
    Dist dist = Dist::Gaussian;

    static TailLaw heavy(double alpha) {
        if (!(alpha > 0.0)) throw config_error("tail index alpha must be > 0");
        TailLaw t;
        t.kind = Kind::HeavyTail;
        t.alpha = alpha;
        return t;
    }
    static TailLaw gaussian() { return TailLaw{Kind::FiniteMoment, 0.0, Dist::Gaussian}; }
    static TailLaw rademacher() { return TailLaw{Kind::FiniteMoment, 0.0, Dist::Rademacher}; }

    bool is_heavy() const { return kind == Kind::HeavyTail; }
};

/// Normalization regime of one p-layer at size N.
enum class Regime { Subcritical, CriticalHeavy, CriticalLight, FiniteMoment };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::Subcritical: return "subcritical";
        case Regime::CriticalHeavy: return "critical-heavy";
        case Regime::CriticalLight: return "critical-light";
        case Regime::FiniteMoment: return "finite-moment";
    }
    return "?";
}

/// Tail-adapted scales of one p-layer at size N.
///
/// M is the number of ordered multisets, d the quantile scale (the level a
/// rescaled coupling exceeds with probability 1/M), c = d / sqrt(N), and b the
/// Hamiltonian normalization: b = d in regimes where c diverges, b = sqrt(N)
/// otherwise. d and c are NaN for finite-moment laws, where no quantile scale
/// is defined.
struct TailScales {
    int N = 0;
    int p = 0;
    std::uint64_t M = 0;
    double d = std::numeric_limits<double>::quiet_NaN();
    double c = std::numeric_limits<double>::quiet_NaN();
    double b = 0.0;
    Regime regime = Regime::FiniteMoment;

    /// Spike weight of a heavy layer in the one-dimensional variational
    /// formula: 1 in regimes where c_N diverges (b = d), c otherwise (b =
    /// sqrt(N)); in both cases this equals d / b. NaN for finite-moment laws.
    double nim_weight() const {
        return (regime == Regime::Subcritical || regime == Regime::CriticalHeavy) ? 1.0 : c;
    }

    /// True when this layer's mixture coefficient belongs to the bulk xi of
    /// the variational formula (every layer whose c_N limit is finite).
    bool in_bulk_mixture() const {
        return regime != Regime::Subcritical && regime != Regime::CriticalHeavy;
    }
};

/// Rescaled extreme coupling Lambda = max |.| / d of one heavy layer,
/// together with the (0-based, sorted) index tuple achieving it.
struct ExtremeStat {
    double lambda = 0.0;
    std::vector<int> argmax_tuple;
    double alpha = 0.0; // tail index of the Frechet reference law
};

/// Number of ordered multisets of size p over N indices, C(N+p-1, p).
/// Exact; throws std::overflow_error when the count exceeds 64 bits.
inline std::uint64_t num_multisets(int N, int p) {
    if (N < 1 || p < 2) throw config_error("num_multisets requires N >= 1, p >= 2");
    return binom_u64(static_cast<std::uint64_t>(N) + p - 1, p);
}

namespace detail {

// M_{N,p} in floating point, usable far beyond 64-bit range. Only used for
// the deterministic limit of c_N, never for exact counts.
inline double num_multisets_approx(double N, int p) {
    return std::exp(std::lgamma(N + p) - std::lgamma(N) - std::lgamma(p + 1.0));
}

inline double c_of(double alpha, double N, int p) {
    const double d = std::sqrt(static_cast<double>(factorial_u64(p))) *
                     std::pow(num_multisets_approx(N, p), 1.0 / alpha);
    return d / std::sqrt(N);
}

// At alpha = 2p the paper only assumes the limit of c_N exists; for the
// constant-L Pareto it is computable. The sequence c_N over N in {2^k} is
// declared convergent-to-finite when it is nonincreasing and stays below the
// cutoff.
inline bool critical_c_limit_finite(double alpha, int p, double cutoff) {
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 20; ++k) {
        const double c = c_of(alpha, std::ldexp(1.0, k), p);
        if (c > prev * (1.0 + 1e-12) || c > cutoff) return false;
        prev = c;
    }
    return true;
}

} // namespace detail

/// Quantile and normalization scales of one layer. For the Pareto law the
/// inversion is closed-form: d = sqrt(p!) * M^(1/alpha), so that
/// P(sqrt(p!) |H_p| > d) = 1/M exactly.
inline TailScales quantile_scale(const TailLaw& tail, int N, int p,
                                 double critical_cutoff = 10.0) {
    TailScales s;
    s.N = N;
    s.p = p;
    s.M = num_multisets(N, p);
    s.b = std::sqrt(static_cast<double>(N));
    if (!tail.is_heavy()) {
        s.regime = Regime::FiniteMoment;
        return s;
    }
    const double alpha = tail.alpha;
    s.d = std::sqrt(static_cast<double>(factorial_u64(p))) *
          std::pow(static_cast<double>(s.M), 1.0 / alpha);
    s.c = s.d / std::sqrt(static_cast<double>(N));
    if (alpha < 2.0 * p) {
        s.regime = Regime::Subcritical;
    } else if (alpha == 2.0 * p) {
        s.regime = detail::critical_c_limit_finite(alpha, p, critical_cutoff)
                       ? Regime::CriticalLight
                       : Regime::CriticalHeavy;
    } else {
        s.regime = Regime::FiniteMoment; // finite 2p-th moment
    }
    if (s.regime == Regime::Subcritical || s.regime == Regime::CriticalHeavy) s.b = s.d;
    return s;
}

/// Deterministic core of the Pareto sampler: sign * u^(-1/alpha), u in (0,1].
inline double pareto_from(double u, double sign, double alpha) {
    return sign * std::pow(u, -1.0 / alpha);
}

/// Symmetric Pareto draw with tail P(|X| > u) = u^-alpha for u >= 1.
inline double sample_heavy(Rng& rng, double alpha) {
    const double u = rng.uniform01_open_left();
    return pareto_from(u, rng.sign(), alpha);
}

/// One base draw of the given law (unit variance in the finite-moment case).
inline double sample_tail(Rng& rng, const TailLaw& law) {
    if (law.is_heavy()) return sample_heavy(rng, law.alpha);
    return (law.dist == TailLaw::Dist::Gaussian) ? rng.normal() : rng.sign();
}

/// Frechet CDF exp(-u^-alpha) for u > 0, and 0 on u <= 0.
inline double frechet_cdf(double u, double alpha) {
    if (u <= 0.0) return 0.0;
    return std::exp(-std::pow(u, -alpha));
}

} // namespace pspin
