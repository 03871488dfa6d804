#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "pspin/disorder.hpp"
#include "pspin/errors.hpp"
#include "pspin/rng.hpp"
#include "pspin/spike_bulk.hpp"
#include "pspin/stats.hpp"
#include "pspin/tails.hpp"

namespace pspin {

/// Uniform draw on the sphere of squared radius N: a standard Gaussian vector
/// rescaled to the exact norm (resampling the measure-zero all-zeros draw).
inline std::vector<double> sample_sphere(Rng& rng, int N) {
    if (N < 1) throw config_error("sample_sphere requires N >= 1");
    std::vector<double> s(static_cast<std::size_t>(N));
    double nrm2 = 0.0;
    do {
        nrm2 = 0.0;
        for (double& v : s) {
            v = rng.normal();
            nrm2 += v * v;
        }
    } while (nrm2 == 0.0);
    const double scale = std::sqrt(static_cast<double>(N) / nrm2);
    for (double& v : s) v *= scale;
    return s;
}

struct FreeEnergyEstimate {
    enum class Estimator { PlainMC, SpikeStratified };
    double value = 0.0;  // (1/N) log of the estimated partition function
    double stderr_ = 0.0; // delete-one-block jackknife standard error
    std::uint64_t n_samples = 0;
    Estimator estimator = Estimator::PlainMC;
    bool spike_fallback = false; // stratified call degraded to plain MC
};

namespace detail {

// Leave-one-block-out log-sum-exp values from per-block partials.
inline std::vector<double> loo_logsumexp(std::span<const double> block_lse) {
    const std::size_t B = block_lse.size();
    std::vector<double> loo(B), rest;
    rest.reserve(B - 1);
    for (std::size_t b = 0; b < B; ++b) {
        rest.clear();
        for (std::size_t j = 0; j < B; ++j)
            if (j != b) rest.push_back(block_lse[j]);
        loo[b] = logsumexp(rest);
    }
    return loo;
}

} // namespace detail

/// Plain Monte Carlo free energy: (1/N) log of the sample mean of exp(beta H)
/// under uniform sphere sampling, with a delete-one-block jackknife standard
/// error. Downward-biased when the integrand is dominated by a spike the
/// uniform measure rarely visits; the stratified estimator exists for that
/// regime. beta = 0 returns exactly 0.
inline FreeEnergyEstimate free_energy_plain(const std::vector<CouplingTensor>& tensors,
                                            const MixtureSpec& spec,
                                            const std::vector<TailScales>& scales, double beta,
                                            std::uint64_t n, std::uint64_t seed = 0,
                                            std::size_t blocks = 20) {
    if (n < 2) throw config_error("free energy estimate needs n >= 2 samples");
    if (tensors.empty()) throw config_error("free energy estimate needs at least one layer");
    const int N = tensors.front().N();
    FreeEnergyEstimate est;
    est.n_samples = n;
    if (beta == 0.0) return est; // Z = 1 identically
    if (static_cast<std::uint64_t>(blocks) > n) blocks = static_cast<std::size_t>(n);
    if (blocks < 2) blocks = 2;

    std::vector<double> block_lse(blocks);
    std::vector<std::uint64_t> block_n(blocks);
    std::vector<double> logw;
    for (std::size_t b = 0; b < blocks; ++b) {
        block_n[b] = n / blocks + (b < n % blocks ? 1 : 0);
        Rng rng = Rng::stream(seed, 0x706c61696e0000ull ^ b);
        logw.assign(block_n[b], 0.0);
        for (std::uint64_t i = 0; i < block_n[b]; ++i) {
            const std::vector<double> sigma = sample_sphere(rng, N);
            logw[i] = beta * hamiltonian(tensors, spec, scales, sigma);
        }
        block_lse[b] = logsumexp(logw);
    }
    est.value = (logsumexp(block_lse) - std::log(static_cast<double>(n))) / N;

    std::vector<double> loo = detail::loo_logsumexp(block_lse);
    for (std::size_t b = 0; b < blocks; ++b)
        loo[b] = (loo[b] - std::log(static_cast<double>(n - block_n[b]))) / N;
    est.stderr_ = jackknife_stderr(loo);
    return est;
}

/// Slice-grid edges for the stratified estimator: equal-mass edges under the
/// dominant density factor (1-q)^((N-d-2)/2) (these resolve the bulk mass
/// concentrated near q = 0) interleaved with uniform edges (these bound every
/// cell width by ~2/K so a spike saddle anywhere in [0, 1] sits in a narrow
/// cell), capped at 1 - 1e-4.
inline std::vector<double> stratified_grid(int N, int d, int cells = 200) {
    if (cells < 1) throw config_error("stratified grid needs at least 1 cell");
    if (N - d < 2) throw config_error("stratified grid requires N - d >= 2");
    const double cap = 1.0 - 1e-4;
    if (cells == 1) return {0.0, cap};
    const double expo = 2.0 / static_cast<double>(N - d);
    const int half = cells / 2;
    std::vector<double> edges;
    edges.reserve(static_cast<std::size_t>(cells) + 2);
    for (int k = 0; k <= half; ++k) {
        const double tail = 1.0 - static_cast<double>(k) / half;
        edges.push_back(std::min(1.0 - std::pow(tail, expo), cap));
    }
    for (int k = 0; k <= cells - half; ++k)
        edges.push_back(std::min(static_cast<double>(k) / (cells - half), cap));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

namespace detail {

/// Index -> multiplicity pairs of a sorted tuple.
inline std::vector<std::pair<int, int>> tuple_multiplicities(std::span<const int> tuple) {
    std::vector<std::pair<int, int>> out;
    for (int idx : tuple) {
        if (!out.empty() && out.back().first == idx)
            ++out.back().second;
        else
            out.emplace_back(idx, 1);
    }
    return out;
}

struct DominantSpike {
    std::size_t layer = static_cast<std::size_t>(-1);
    std::size_t entry = static_cast<std::size_t>(-1);
    double amplitude = 0.0; // signed per-site amplitude gamma w / b
    int p = 2;
};

/// Strongest spike tuple across layers at overlap q, by the exact slice
/// optimum |amplitude| (q/p)^(p/2); ties break to the first layer and lowest
/// entry index.
inline DominantSpike dominant_spike(const std::vector<SpikeSet>& spikes,
                                    const MixtureSpec& spec,
                                    const std::vector<TailScales>& scales, double q) {
    if (spikes.size() != spec.layers.size() || scales.size() != spec.layers.size())
        throw config_error("dominant_spike: one spike set and scale set per layer");
    DominantSpike best;
    double best_v = -1.0;
    for (std::size_t l = 0; l < spikes.size(); ++l) {
        const double per_site = spec.layers[l].gamma / scales[l].b;
        for (std::size_t e = 0; e < spikes[l].entries.size(); ++e) {
            const double a = per_site * spikes[l].entries[e].weight;
            const int p = spikes[l].p;
            const double v = std::abs(a) * std::pow(q / p, p / 2.0);
            if (v > best_v) {
                best_v = v;
                best = DominantSpike{l, e, a, p};
            }
        }
    }
    return best;
}

/// Deterministic spike placement: mass k_i N q / p on each distinct index of
/// the tuple (the exact slice optimum of the monomial), signs aligned so the
/// signed spike term is maximal. Flipping one odd-multiplicity coordinate is
/// optimal over all sign patterns: it is the only way a flip changes the
/// monomial's sign, and when every multiplicity is even the monomial's sign
/// is fixed regardless.
inline void place_spike(std::span<double> sigma, std::span<const int> tuple, double amplitude,
                        int p, double q) {
    std::fill(sigma.begin(), sigma.end(), 0.0);
    const double N = static_cast<double>(sigma.size());
    const auto parts = tuple_multiplicities(tuple);
    bool flip = amplitude < 0.0;
    for (const auto& [idx, k] : parts) {
        double v = std::sqrt(static_cast<double>(k) * N * q / p);
        if (flip && k % 2 == 1) {
            v = -v;
            flip = false;
        }
        sigma[static_cast<std::size_t>(idx)] = v;
    }
}

} // namespace detail

/// Spike-aware stratified estimator. For each grid cell [q_k, q_k+1): place
/// the deterministic slice optimum on the dominant spike tuple, draw the
/// residual uniformly on the sphere of squared radius N(1-q) over the
/// remaining coordinates, weight by the exact slice density
/// Beta(d/2, (N-d)/2) at the midpoint times the cell width, and combine the
/// slices by log-sum-exp. Exact in the spike direction, Monte Carlo in the
/// bulk. An empty spike set degrades to the plain estimator with a warning.
inline FreeEnergyEstimate
free_energy_stratified(const std::vector<CouplingTensor>& tensors, const MixtureSpec& spec,
                       const std::vector<TailScales>& scales, double beta,
                       const SpikeSet& spike, std::span<const double> q_edges,
                       std::uint64_t n_per_slice, std::uint64_t seed = 0,
                       std::size_t blocks = 20) {
    if (tensors.empty()) throw config_error("free energy estimate needs at least one layer");
    if (q_edges.size() < 2) throw config_error("stratified estimator needs >= 2 grid edges");
    if (n_per_slice < 2) throw config_error("stratified estimator needs n_per_slice >= 2");
    for (std::size_t k = 0; k + 1 < q_edges.size(); ++k)
        if (q_edges[k] > q_edges[k + 1]) throw config_error("q grid edges must be nondecreasing");
    if (!(q_edges.front() >= 0.0 && q_edges.back() <= 1.0 - 1e-4))
        throw config_error("q grid must lie in [0, 1-1e-4]");

    const int N = tensors.front().N();
    if (spike.entries.empty()) {
        std::cerr << "warning: empty spike set, falling back to the plain estimator\n";
        const std::uint64_t n = n_per_slice * (q_edges.size() - 1);
        FreeEnergyEstimate est = free_energy_plain(tensors, spec, scales, beta, n, seed, blocks);
        est.spike_fallback = true;
        return est;
    }

    std::size_t layer = static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].p == spike.p) layer = i;
    if (layer == static_cast<std::size_t>(-1))
        throw config_error("spike set order does not match any mixture layer");

    // Dominant tuple within the supplied spike set: arities are equal, so the
    // argmax is the largest |amplitude| at any q > 0.
    const double per_site = spec.layers[layer].gamma / scales[layer].b;
    std::size_t dom = 0;
    for (std::size_t e = 1; e < spike.entries.size(); ++e)
        if (std::abs(spike.entries[e].weight) > std::abs(spike.entries[dom].weight)) dom = e;
    const SpikeEntry& entry = spike.entries[dom];
    const double amplitude = per_site * entry.weight;
    const auto parts = detail::tuple_multiplicities(entry.tuple);
    const int d = static_cast<int>(parts.size());
    if (N - d < 2) throw config_error("stratified estimator requires N - d >= 2");

    blocks = std::max<std::size_t>(2, std::min<std::size_t>(blocks, n_per_slice));
    const double log_beta_norm = std::lgamma(N / 2.0) - std::lgamma(d / 2.0) -
                                 std::lgamma((N - d) / 2.0);

    std::vector<std::size_t> rest_idx;
    rest_idx.reserve(static_cast<std::size_t>(N - d));
    {
        std::vector<bool> used(static_cast<std::size_t>(N), false);
        for (const auto& [idx, k] : parts) used[static_cast<std::size_t>(idx)] = true;
        for (int i = 0; i < N; ++i)
            if (!used[static_cast<std::size_t>(i)]) rest_idx.push_back(static_cast<std::size_t>(i));
    }

    // Per-slice, per-block log-sum-exps of exp(beta H) over residual draws.
    std::vector<double> slice_logmass;           // log(density * cell width) per kept slice
    std::vector<std::vector<double>> slice_blse; // per kept slice: per-block LSE
    std::vector<std::uint64_t> bn(blocks);
    for (std::size_t b = 0; b < blocks; ++b)
        bn[b] = n_per_slice / blocks + (b < n_per_slice % blocks ? 1 : 0);

    std::vector<double> sigma(static_cast<std::size_t>(N));
    std::vector<double> logw;
    for (std::size_t k = 0; k + 1 < q_edges.size(); ++k) {
        const double width = q_edges[k + 1] - q_edges[k];
        if (width <= 0.0) continue;
        const double qm = 0.5 * (q_edges[k] + q_edges[k + 1]);
        const double log_density = log_beta_norm + (d / 2.0 - 1.0) * std::log(qm) +
                                   ((N - d) / 2.0 - 1.0) * std::log1p(-qm);
        detail::place_spike(sigma, entry.tuple, amplitude, spike.p, qm);
        const double residual_radius = std::sqrt(static_cast<double>(N) * (1.0 - qm));

        std::vector<double> blse(blocks);
        for (std::size_t b = 0; b < blocks; ++b) {
            Rng rng = Rng::stream(seed, 0x7374726174000000ull ^ (k << 8) ^ b);
            logw.assign(bn[b], 0.0);
            const double rescale = residual_radius / std::sqrt(static_cast<double>(N - d));
            for (std::uint64_t i = 0; i < bn[b]; ++i) {
                // sample_sphere draws at squared radius N-d; bring it to the
                // residual radius sqrt(N (1 - q)) of this slice
                const std::vector<double> res = sample_sphere(rng, N - d);
                for (std::size_t j = 0; j < rest_idx.size(); ++j)
                    sigma[rest_idx[j]] = res[j] * rescale;
                logw[i] = beta * hamiltonian(tensors, spec, scales, sigma);
            }
            blse[b] = logsumexp(logw);
        }
        slice_logmass.push_back(log_density + std::log(width));
        slice_blse.push_back(std::move(blse));
    }
    if (slice_logmass.empty()) throw config_error("q grid has no cells of positive width");

    const double log_n = std::log(static_cast<double>(n_per_slice));
    std::vector<double> terms(slice_logmass.size());
    for (std::size_t s = 0; s < terms.size(); ++s)
        terms[s] = slice_logmass[s] + logsumexp(slice_blse[s]) - log_n;

    FreeEnergyEstimate est;
    est.estimator = FreeEnergyEstimate::Estimator::SpikeStratified;
    est.n_samples = n_per_slice * slice_logmass.size();
    est.value = logsumexp(terms) / N;

    // Jackknife over aligned sample blocks: replicate b drops block b from
    // every slice simultaneously.
    std::vector<double> loo(blocks);
    std::vector<double> rest;
    for (std::size_t b = 0; b < blocks; ++b) {
        const double log_nb = std::log(static_cast<double>(n_per_slice - bn[b]));
        std::vector<double> t(terms.size());
        for (std::size_t s = 0; s < terms.size(); ++s) {
            rest.clear();
            for (std::size_t j = 0; j < blocks; ++j)
                if (j != b) rest.push_back(slice_blse[s][j]);
            t[s] = slice_logmass[s] + logsumexp(rest) - log_nb;
        }
        loo[b] = logsumexp(t) / N;
    }
    est.stderr_ = jackknife_stderr(loo);
    return est;
}

struct GseEstimate {
    enum class Method { Ascent, EigenP2 };
    double value = 0.0; // (1/N) * best H found
    int restarts = 0;
    Method method = Method::Ascent;
};

struct AscentConfig {
    std::uint64_t seed = 0;
    int max_iters = 5000;
    double grad_tol = 1e-8; // tangential gradient norm at convergence
    std::vector<std::vector<double>> informed_starts; // extra initial states
};

/// Projected gradient ascent on the sphere with backtracking line search and
/// renormalizing retraction. Runs the informed starts plus uniform restarts
/// and returns the best value found: always a feasible lower bound on the
/// ground-state energy.
inline GseEstimate gse_ascent(const std::vector<CouplingTensor>& tensors,
                              const MixtureSpec& spec, const std::vector<TailScales>& scales,
                              int restarts, const AscentConfig& cfg = {}) {
    if (restarts < 1) throw config_error("gse_ascent needs restarts >= 1");
    if (tensors.empty()) throw config_error("gse_ascent needs at least one layer");
    const int N = tensors.front().N();
    const double sqrtN = std::sqrt(static_cast<double>(N));

    auto retract = [&](std::vector<double>& s) {
        double nrm2 = 0.0;
        for (double v : s) nrm2 += v * v;
        const double f = sqrtN / std::sqrt(nrm2);
        for (double& v : s) v *= f;
    };

    std::vector<double> grad(static_cast<std::size_t>(N));
    std::vector<double> tang(static_cast<std::size_t>(N));
    std::vector<double> trial(static_cast<std::size_t>(N));

    double best = -std::numeric_limits<double>::infinity();
    int used = 0;
    auto run = [&](std::vector<double> sigma) {
        retract(sigma);
        double val = hamiltonian_with_gradient(tensors, spec, scales, sigma, grad);
        double step_hint = 0.0; // doubled last accepted step; caps the next try
        for (int it = 0; it < cfg.max_iters; ++it) {
            double dot = 0.0;
            for (int i = 0; i < N; ++i) dot += grad[static_cast<std::size_t>(i)] * sigma[static_cast<std::size_t>(i)];
            const double radial = dot / static_cast<double>(N);
            double gn2 = 0.0;
            for (int i = 0; i < N; ++i) {
                tang[static_cast<std::size_t>(i)] =
                    grad[static_cast<std::size_t>(i)] - radial * sigma[static_cast<std::size_t>(i)];
                gn2 += tang[static_cast<std::size_t>(i)] * tang[static_cast<std::size_t>(i)];
            }
            const double gn = std::sqrt(gn2);
            if (gn < cfg.grad_tol) break;

            // Backtracking from a displacement of 0.3 sqrt(N) along the
            // tangential direction, warm-capped by the previous accepted step
            // so late iterations don't re-halve down from a huge trial.
            double step = 0.3 * sqrtN / gn;
            if (step_hint > 0.0 && step_hint < step) step = step_hint;
            bool accepted = false;
            for (int bt = 0; bt < 60; ++bt) {
                for (int i = 0; i < N; ++i)
                    trial[static_cast<std::size_t>(i)] =
                        sigma[static_cast<std::size_t>(i)] + step * tang[static_cast<std::size_t>(i)];
                retract(trial);
                const double tv = hamiltonian(tensors, spec, scales, trial);
                if (tv >= val + 1e-4 * step * gn2) {
                    sigma.swap(trial);
                    val = hamiltonian_with_gradient(tensors, spec, scales, sigma, grad);
                    accepted = true;
                    step_hint = 2.0 * step;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break; // no ascent direction at line-search floor
        }
        best = std::max(best, val);
        ++used;
    };

    for (const auto& s0 : cfg.informed_starts) {
        if (static_cast<int>(s0.size()) != N)
            throw config_error("informed start size does not match N");
        run(s0);
    }
    for (int r = 0; r < restarts; ++r) {
        Rng rng = Rng::stream(cfg.seed, 0x617363656e740000ull ^ static_cast<std::uint64_t>(r));
        run(sample_sphere(rng, N));
    }
    GseEstimate est;
    est.value = best / N;
    est.restarts = used;
    est.method = GseEstimate::Method::Ascent;
    return est;
}

/// Spike-informed initial state for the ascent: exact slice optimum of the
/// dominant spike tuple at overlap qstar, residual mass spread evenly over
/// the remaining coordinates.
inline std::vector<double> spike_start(const std::vector<SpikeSet>& spikes,
                                       const MixtureSpec& spec,
                                       const std::vector<TailScales>& scales, int N,
                                       double qstar) {
    if (!(qstar >= 0.0 && qstar < 1.0)) throw config_error("spike start requires q in [0,1)");
    std::vector<double> sigma(static_cast<std::size_t>(N), 0.0);
    const detail::DominantSpike ds =
        detail::dominant_spike(spikes, spec, scales, qstar > 0.0 ? qstar : 0.5);
    if (ds.layer == static_cast<std::size_t>(-1)) {
        // no spike anywhere: uniform deterministic state
        const double v = 1.0;
        for (double& x : sigma) x = v;
    } else {
        const SpikeEntry& e = spikes[ds.layer].entries[ds.entry];
        detail::place_spike(sigma, e.tuple, ds.amplitude, ds.p, qstar);
        const auto parts = detail::tuple_multiplicities(e.tuple);
        std::vector<bool> used(static_cast<std::size_t>(N), false);
        for (const auto& [idx, k] : parts) used[static_cast<std::size_t>(idx)] = true;
        const int rest = N - static_cast<int>(parts.size());
        if (rest > 0) {
            const double fill = std::sqrt(static_cast<double>(N) * (1.0 - qstar) / rest);
            for (int i = 0; i < N; ++i)
                if (!used[static_cast<std::size_t>(i)]) sigma[static_cast<std::size_t>(i)] = fill;
        }
    }
    double nrm2 = 0.0;
    for (double v : sigma) nrm2 += v * v;
    const double f = std::sqrt(static_cast<double>(N) / nrm2);
    for (double& v : sigma) v *= f;
    return sigma;
}

namespace detail {

/// Largest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
inline double tridiag_lambda_max(std::span<const double> alpha, std::span<const double> beta,
                                 double tol) {
    const std::size_t n = alpha.size();
    double lo = alpha[0], hi = alpha[0];
    for (std::size_t i = 0; i < n; ++i) {
        const double off =
            (i > 0 ? std::abs(beta[i - 1]) : 0.0) + (i + 1 < n ? std::abs(beta[i]) : 0.0);
        lo = std::min(lo, alpha[i] - off);
        hi = std::max(hi, alpha[i] + off);
    }
    auto count_below = [&](double x) {
        // Sturm sequence: number of eigenvalues < x.
        int cnt = 0;
        double dcur = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double off2 = i > 0 ? beta[i - 1] * beta[i - 1] : 0.0;
            dcur = alpha[i] - x - off2 / dcur;
            if (dcur == 0.0) dcur = -1e-300;
            if (dcur < 0.0) ++cnt;
        }
        return cnt;
    };
    const int total = static_cast<int>(n);
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        (count_below(mid) == total ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Largest eigenvalue of a dense symmetric matrix by Lanczos with full
/// reorthogonalization (restarting into a fresh orthogonal direction on
/// breakdown) followed by Sturm bisection on the tridiagonal reduction.
inline double dense_lambda_max(const std::vector<double>& A, int N, std::uint64_t seed,
                               double tol) {
    const int m = std::min(N, 512);
    std::vector<std::vector<double>> V;
    V.reserve(static_cast<std::size_t>(m));
    std::vector<double> alpha, beta;
    Rng rng = Rng::stream(seed, 0x6c616e637a6f73ull);

    auto fresh_vector = [&]() -> bool {
        // random vector orthogonalized against the basis; false when the
        // space is exhausted
        for (int tries = 0; tries < 8; ++tries) {
            std::vector<double> v(static_cast<std::size_t>(N));
            for (double& x : v) x = rng.normal();
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& u : V) {
                    double dot = 0.0;
                    for (int i = 0; i < N; ++i)
                        dot += u[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
                    for (int i = 0; i < N; ++i)
                        v[static_cast<std::size_t>(i)] -= dot * u[static_cast<std::size_t>(i)];
                }
            double nrm2 = 0.0;
            for (double x : v) nrm2 += x * x;
            if (nrm2 > 1e-20) {
                const double f = 1.0 / std::sqrt(nrm2);
                for (double& x : v) x *= f;
                V.push_back(std::move(v));
                return true;
            }
        }
        return false;
    };

    if (!fresh_vector()) throw numerical_error("eigenvalue start vector failed");
    std::vector<double> w(static_cast<std::size_t>(N));
    double scale = 0.0;
    for (double x : A) scale = std::max(scale, std::abs(x));
    const double breakdown = std::max(scale, 1.0) * 1e-13;

    for (int j = 0; j < m; ++j) {
        const std::vector<double>& vj = V[static_cast<std::size_t>(j)];
        for (int i = 0; i < N; ++i) {
            double acc = 0.0;
            const double* row = A.data() + static_cast<std::size_t>(i) * N;
            for (int k = 0; k < N; ++k) acc += row[k] * vj[static_cast<std::size_t>(k)];
            w[static_cast<std::size_t>(i)] = acc;
        }
        double a = 0.0;
        for (int i = 0; i < N; ++i) a += w[static_cast<std::size_t>(i)] * vj[static_cast<std::size_t>(i)];
        alpha.push_back(a);
        if (j + 1 == m || static_cast<int>(V.size()) == N) break;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& u : V) {
                double dot = 0.0;
                for (int i = 0; i < N; ++i)
                    dot += u[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
                for (int i = 0; i < N; ++i)
                    w[static_cast<std::size_t>(i)] -= dot * u[static_cast<std::size_t>(i)];
            }
        double nrm2 = 0.0;
        for (double x : w) nrm2 += x * x;
        const double b = std::sqrt(nrm2);
        if (b <= breakdown) {
            // invariant subspace found: record a zero link and deflate
            if (!fresh_vector()) break;
            beta.push_back(0.0);
            continue;
        }
        beta.push_back(b);
        std::vector<double> next(static_cast<std::size_t>(N));
        for (int i = 0; i < N; ++i) next[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] / b;
        V.push_back(std::move(next));
    }
    return tridiag_lambda_max(alpha, beta, tol);
}

} // namespace detail

/// Exact p = 2 oracle: the normalized Hamiltonian is sigma^T A sigma for the
/// symmetric matrix A with A_ii = (gamma/b) w_ii and A_ij = (gamma/b) w_ij/2,
/// so sup over the sphere is N lambda_max(A) and the ground-state energy is
/// lambda_max(A) itself.
inline GseEstimate gse_eigen_p2(const CouplingTensor& J, const MixtureSpec& spec,
                                const TailScales& scales) {
    if (spec.layers.size() != 1 || spec.layers[0].p != 2 || J.p() != 2)
        throw config_error("eigenvalue method applies to the pure p=2 model only");
    const int N = J.N();
    std::vector<double> A(static_cast<std::size_t>(N) * N, 0.0);
    const double pref = spec.layers[0].gamma / scales.b;
    J.for_each([&](std::uint64_t, std::span<const int> t, double w) {
        const std::size_t i = static_cast<std::size_t>(t[0]);
        const std::size_t j = static_cast<std::size_t>(t[1]);
        if (i == j)
            A[i * N + i] = pref * w;
        else
            A[i * N + j] = A[j * N + i] = 0.5 * pref * w;
    });
    GseEstimate est;
    est.value = detail::dense_lambda_max(A, N, J.seed(), 1e-10);
    est.restarts = 1;
    est.method = GseEstimate::Method::EigenP2;
    return est;
}

} // namespace pspin
