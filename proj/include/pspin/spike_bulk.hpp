#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "pspin/disorder.hpp"
#include "pspin/errors.hpp"
#include "pspin/multiset.hpp"
#include "pspin/tails.hpp"

namespace pspin {

/// One coupling kept on the spike side of the threshold split.
struct SpikeEntry {
    std::uint64_t rank = 0;  // colex rank in the source tensor
    std::vector<int> tuple;  // sorted indices i_1 <= ... <= i_p
    double value = 0.0;      // symmetric-entry coupling sqrt(k!/p!) * base
    double base = 0.0;       // raw base draw (exact reconstruction)
    double weight = 0.0;     // symmetric-sum coupling sqrt(p!/k!) * base
};

/// All couplings of one layer whose symmetric-entry magnitude exceeds the
/// threshold u_{N,p} = b * N^(-epsilon0/alpha), plus support diagnostics.
struct SpikeSet {
    int N = 0;
    int p = 2;
    double epsilon0 = 0.0;
    double threshold = std::numeric_limits<double>::infinity();
    std::vector<SpikeEntry> entries;
    std::vector<int> support;        // sorted distinct indices over all tuples
    bool has_repeats = false;        // some tuple repeats an index
    bool has_intersections = false;  // two tuples share an index
};

namespace detail {

inline void finalize_spike_flags(SpikeSet& s) {
    std::map<int, int> containing; // index -> number of entries containing it
    for (const auto& e : s.entries) {
        int prev = -1;
        for (int idx : e.tuple) {
            if (idx == prev) { // tuples are sorted, so repeats are adjacent
                s.has_repeats = true;
                continue;
            }
            prev = idx;
            if (++containing[idx] >= 2) s.has_intersections = true;
        }
    }
    s.support.clear();
    s.support.reserve(containing.size());
    for (const auto& [idx, n] : containing) s.support.push_back(idx);
}

} // namespace detail

/// Threshold split of one layer. Heavy-tailed layers partition exactly into
/// spike (symmetric entries with |value| above u_{N,p}) and bulk (the tensor
/// with those base draws zeroed); finite-moment layers keep everything in the
/// bulk with an empty spike. Writing each spike base draw back over the bulk
/// tensor reproduces the input bitwise.
inline std::pair<SpikeSet, CouplingTensor> split(const CouplingTensor& J,
                                                 const TailScales& scales, double epsilon0) {
    if (!(epsilon0 > 0.0)) throw config_error("spike exponent epsilon0 must be > 0");
    SpikeSet spike;
    spike.N = J.N();
    spike.p = J.p();
    spike.epsilon0 = epsilon0;
    if (!J.law().is_heavy()) return {std::move(spike), J};

    const double u =
        scales.b * std::pow(static_cast<double>(J.N()), -epsilon0 / J.law().alpha);
    spike.threshold = u;
    std::vector<double> bulk_base = J.base_draws();
    const double pf = static_cast<double>(factorial_u64(J.p()));
    J.for_each([&](std::uint64_t r, std::span<const int> t, double) {
        const double kf = static_cast<double>(repeat_factorial(t));
        const double value = std::sqrt(kf / pf) * J.base(r);
        if (std::abs(value) > u) {
            SpikeEntry e;
            e.rank = r;
            e.tuple.assign(t.begin(), t.end());
            e.value = value;
            e.base = J.base(r);
            e.weight = std::sqrt(pf / kf) * J.base(r);
            spike.entries.push_back(std::move(e));
            bulk_base[r] = 0.0;
        }
    });
    detail::finalize_spike_flags(spike);
    return {std::move(spike),
            CouplingTensor(J.N(), J.p(), J.law(), J.seed(), std::move(bulk_base))};
}

/// Split every layer of a realization; results stay in layer order.
inline std::pair<std::vector<SpikeSet>, std::vector<CouplingTensor>>
split_mixture(const std::vector<CouplingTensor>& tensors,
              const std::vector<TailScales>& scales, double epsilon0) {
    if (tensors.size() != scales.size())
        throw config_error("split_mixture: one scale set per tensor required");
    std::vector<SpikeSet> spikes;
    std::vector<CouplingTensor> bulks;
    spikes.reserve(tensors.size());
    bulks.reserve(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto [s, b] = split(tensors[i], scales[i], epsilon0);
        spikes.push_back(std::move(s));
        bulks.push_back(std::move(b));
    }
    return {std::move(spikes), std::move(bulks)};
}

/// Observational summary of one spike set against the N^(2 epsilon0) scale.
/// Nothing downstream gates on these flags; they are reported as-is.
struct SpikeReport {
    std::size_t count = 0;        // number of spike entries
    std::size_t support_size = 0; // distinct indices touched
    double scale = 0.0;           // N^(2 epsilon0)
    bool count_within_scale = true;
    bool support_within_scale = true;
    bool has_repeats = false;
    bool has_intersections = false;
};

inline SpikeReport spike_diagnostics(const SpikeSet& spike, int N) {
    SpikeReport rep;
    rep.count = spike.entries.size();
    rep.support_size = spike.support.size();
    rep.scale = std::pow(static_cast<double>(N), 2.0 * spike.epsilon0);
    rep.count_within_scale = static_cast<double>(rep.count) <= rep.scale;
    rep.support_within_scale = static_cast<double>(rep.support_size) <= rep.scale;
    rep.has_repeats = spike.has_repeats;
    rep.has_intersections = spike.has_intersections;
    return rep;
}

/// One term of the spike energy: amplitude a and interaction arity j >= 2.
struct SpikeTerm {
    double amplitude = 0.0;
    int arity = 2;
};

inline constexpr std::size_t amgm_no_argmax = static_cast<std::size_t>(-1);

/// max_i |a_i| (q/j_i)^(j_i/2) over disjoint spike terms, the exact optimum
/// of sum_i a_i prod sigma over the slice of total squared mass q N. Returns
/// the value and the argmax index (ties break to the lowest index); an empty
/// list means no spike and gives value 0.
inline std::pair<double, std::size_t> amgm_max(std::span<const SpikeTerm> terms, double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw config_error("amgm_max requires q in [0,1]");
    double best = 0.0;
    std::size_t arg = amgm_no_argmax;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].arity < 2) throw config_error("spike arity must be >= 2");
        const double v =
            std::abs(terms[i].amplitude) * std::pow(q / terms[i].arity, terms[i].arity / 2.0);
        if (arg == amgm_no_argmax || v > best) {
            best = v;
            arg = i;
        }
    }
    return {best, arg};
}

/// Extremal spike energy of the mixture at overlap q:
///   max over heavy layers of beta |gamma_p| w_p Lambda_{N,p} (q/p)^(p/2),
/// with w_p = c_{N,p} when the layer's c_p limit is finite and w_p = 1 when
/// c_p = infinity. A mixture with no heavy layer contributes 0.
inline double e_nim(const MixtureSpec& spec, const std::vector<ExtremeStat>& lambdas,
                    const std::vector<TailScales>& scales, double q) {
    if (!(q >= 0.0 && q < 1.0)) throw config_error("e_nim requires q in [0,1)");
    if (lambdas.size() != spec.layers.size() || scales.size() != spec.layers.size())
        throw config_error("e_nim: one extreme statistic and scale set per layer");
    double best = 0.0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (!l.tail.is_heavy()) continue;
        const double v = spec.beta * std::abs(l.gamma) * scales[i].nim_weight() *
                         lambdas[i].lambda * std::pow(q / l.p, l.p / 2.0);
        best = std::max(best, v);
    }
    return best;
}

/// Moments of the rescaled bulk couplings J_hat = (N^(1/2)/b) * (symmetric
/// entry) for one layer. Means are over all N^p ordered tuples, i.e. each
/// multiset weighted by its multiplicity p!/k!.
struct BulkLayerMoments {
    int p = 2;
    int N = 0;
    double max_abs = 0.0;         // max |J_hat|
    double moment_2p = 0.0;       // mean |J_hat|^(2p)
    double moment_2 = 0.0;        // mean J_hat^2
    double max_over_sqrt_n = 0.0; // max |J_hat| / N^(1/2), the a.s. bound scale
    double c_inv_sq = 0.0;        // c^(-2) comparison scale; NaN if c undefined
};

struct BulkDiagnostics {
    std::vector<BulkLayerMoments> layers;
};

inline BulkDiagnostics bulk_moment_report(const std::vector<CouplingTensor>& bulks,
                                          const std::vector<TailScales>& scales) {
    if (bulks.size() != scales.size())
        throw config_error("bulk_moment_report: one scale set per tensor required");
    BulkDiagnostics out;
    out.layers.reserve(bulks.size());
    for (std::size_t i = 0; i < bulks.size(); ++i) {
        const CouplingTensor& J = bulks[i];
        const int p = J.p();
        const int N = J.N();
        BulkLayerMoments m;
        m.p = p;
        m.N = N;
        const double pf = static_cast<double>(factorial_u64(p));
        const double rescale = std::sqrt(static_cast<double>(N)) / scales[i].b;
        double sum_2p = 0.0, sum_2 = 0.0;
        J.for_each([&](std::uint64_t r, std::span<const int> t, double) {
            const double kf = static_cast<double>(repeat_factorial(t));
            const double jhat = rescale * std::sqrt(kf / pf) * J.base(r);
            const double mult = pf / kf;
            m.max_abs = std::max(m.max_abs, std::abs(jhat));
            sum_2p += mult * std::pow(jhat * jhat, p);
            sum_2 += mult * jhat * jhat;
        });
        const double total = std::pow(static_cast<double>(N), p);
        m.moment_2p = sum_2p / total;
        m.moment_2 = sum_2 / total;
        m.max_over_sqrt_n = m.max_abs / std::sqrt(static_cast<double>(N));
        m.c_inv_sq = 1.0 / (scales[i].c * scales[i].c);
        out.layers.push_back(m);
    }
    return out;
}

} // namespace pspin
