#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pspin/errors.hpp"
#include "pspin/multiset.hpp"
#include "pspin/rng.hpp"
#include "pspin/tails.hpp"

namespace pspin {

/// Disorder of one p-layer: one base draw per sorted index multiset, stored in
/// colexicographic rank order. The coupling entering the symmetric sum over
/// multisets is w_m = sqrt(p! / k_m!) * base_m, where k_m! is the product of
/// the repeat-count factorials of the tuple; summing w_m sigma_m over sorted
/// multisets then equals the usual sum over all ordered index tuples with
/// couplings of variance one (so Var(w_m) = p!/k_m! per multiset).
class CouplingTensor {
public:
    CouplingTensor() = default;

    CouplingTensor(int N, int p, TailLaw law, std::uint64_t seed,
                   std::vector<double> base)
        : N_(N), p_(p), law_(law), seed_(seed), base_(std::move(base)) {
        if (base_.size() != num_multisets(N_, p_))
            throw config_error("coupling tensor size does not match C(N+p-1,p)");
        rebuild_weights();
    }

    int N() const { return N_; }
    int p() const { return p_; }
    const TailLaw& law() const { return law_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t size() const { return base_.size(); }

    /// Base draw at a colex rank.
    double base(std::uint64_t rank) const { return base_[rank]; }
    const std::vector<double>& base_draws() const { return base_; }

    /// Symmetric-sum coupling w_m at a colex rank.
    double weight(std::uint64_t rank) const { return weight_[rank]; }
    double weight(std::span<const int> tuple) const { return weight_[colex_rank(tuple)]; }
    const std::vector<double>& weights() const { return weight_; }

    /// Visit every multiset in colex order: f(rank, tuple, weight).
    template <class F>
    void for_each(F&& f) const {
        MultisetCursor cur(N_, p_);
        std::uint64_t r = 0;
        while (!cur.done()) {
            f(r, cur.tuple(), weight_[r]);
            cur.next();
            ++r;
        }
    }

private:
    void rebuild_weights() {
        weight_.resize(base_.size());
        const double pf = static_cast<double>(factorial_u64(p_));
        MultisetCursor cur(N_, p_);
        std::uint64_t r = 0;
        while (!cur.done()) {
            const double kf = static_cast<double>(repeat_factorial(cur.tuple()));
            weight_[r] = std::sqrt(pf / kf) * base_[r];
            cur.next();
            ++r;
        }
    }

    int N_ = 0;
    int p_ = 2;
    TailLaw law_;
    std::uint64_t seed_ = 0;
    std::vector<double> base_;   // raw draws, colex order
    std::vector<double> weight_; // sqrt(p!/k_m!) * base, same order
};

/// Draw a full coupling tensor. Draws are consumed in colex rank order from a
/// stream derived deterministically from (seed), so the tensor is a pure
/// function of (N, p, law, seed).
inline CouplingTensor generate_couplings(const TailLaw& law, int N, int p,
                                         std::uint64_t seed) {
    const std::uint64_t M = num_multisets(N, p);
    std::vector<double> base(M);
    Rng rng = Rng::stream(seed, (static_cast<std::uint64_t>(N) << 8) ^ static_cast<std::uint64_t>(p));
    for (std::uint64_t r = 0; r < M; ++r) base[r] = sample_tail(rng, law);
    return CouplingTensor(N, p, law, seed, std::move(base));
}

/// One layer of the model: interaction order, mixture coefficient, tail law.
struct LayerSpec {
    int p = 2;
    double gamma = 1.0;
    TailLaw tail = TailLaw::gaussian();
};

/// Full model: layers of distinct order plus the inverse temperature.
struct MixtureSpec {
    std::vector<LayerSpec> layers;
    double beta = 1.0;

    void validate() const {
        if (layers.empty()) throw config_error("mixture needs at least one layer");
        if (!(beta >= 0.0) || !std::isfinite(beta))
            throw config_error("inverse temperature must be finite and >= 0");
        bool any_nonzero = false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].p < 2) throw config_error("layer order p must be >= 2");
            if (!std::isfinite(layers[i].gamma))
                throw config_error("layer coefficient must be finite");
            if (layers[i].gamma != 0.0) any_nonzero = true;
            for (std::size_t j = 0; j < i; ++j)
                if (layers[j].p == layers[i].p)
                    throw config_error("layer orders must be distinct");
        }
        if (!any_nonzero) throw config_error("mixture needs a nonzero coefficient");
    }

    int max_order() const {
        int P = 0;
        for (const auto& l : layers) P = std::max(P, l.p);
        return P;
    }
};

/// Tail scales for every layer at size N, in layer order.
inline std::vector<TailScales> scales_for(const MixtureSpec& spec, int N) {
    spec.validate();
    std::vector<TailScales> out;
    out.reserve(spec.layers.size());
    for (const auto& l : spec.layers) out.push_back(quantile_scale(l.tail, N, l.p));
    return out;
}

/// Draw one tensor per layer of the mixture. Each layer reads its own stream
/// derived from (seed, N, p), so the result is a pure function of
/// (spec, N, seed) and layers are mutually independent. Refuses sizes whose
/// storage estimate exceeds max_bytes, reporting the entry count.
inline std::vector<CouplingTensor> generate(const MixtureSpec& spec, int N, std::uint64_t seed,
                                            std::uint64_t max_bytes = 256ull << 20) {
    spec.validate();
    if (N < spec.max_order())
        throw config_error("N must be at least the largest interaction order");
    for (const auto& l : spec.layers) {
        const double entries = detail::num_multisets_approx(N, l.p);
        const double bytes = 16.0 * entries; // base + weight arrays, 8 bytes each
        if (!(bytes <= static_cast<double>(max_bytes))) {
            std::ostringstream msg;
            msg << "coupling storage for N=" << N << ", p=" << l.p << " needs "
                << std::setprecision(6) << entries << " entries (" << bytes
                << " bytes), over the " << max_bytes << "-byte budget";
            throw config_error(msg.str());
        }
    }
    std::vector<CouplingTensor> out;
    out.reserve(spec.layers.size());
    for (const auto& l : spec.layers) out.push_back(generate_couplings(l.tail, N, l.p, seed));
    return out;
}

/// Normalized layer Hamiltonian
///   H(sigma) = gamma * N^((2-p)/2) / b * sum_m w_m sigma_m,
/// with sigma_m the product of coordinates over the tuple. On the sphere
/// |sigma|^2 = N with b = sqrt(N) this has extensive variance gamma^2 N.
inline double hamiltonian(const CouplingTensor& J, std::span<const double> sigma,
                          double gamma, const TailScales& scales) {
    if (static_cast<int>(sigma.size()) != J.N())
        throw config_error("hamiltonian: sigma size does not match N");
    const int p = J.p();
    double acc = 0.0;
    J.for_each([&](std::uint64_t, std::span<const int> t, double w) {
        double prod = w;
        for (int j = 0; j < p; ++j) prod *= sigma[static_cast<std::size_t>(t[j])];
        acc += prod;
    });
    const double pref = gamma * std::pow(static_cast<double>(J.N()), (2.0 - p) / 2.0) / scales.b;
    return pref * acc;
}

/// Hamiltonian together with its Euclidean gradient (same normalization).
inline double hamiltonian_with_gradient(const CouplingTensor& J,
                                        std::span<const double> sigma, double gamma,
                                        const TailScales& scales,
                                        std::span<double> grad) {
    if (static_cast<int>(sigma.size()) != J.N() || grad.size() != sigma.size())
        throw config_error("hamiltonian_with_gradient: size mismatch");
    const int p = J.p();
    std::fill(grad.begin(), grad.end(), 0.0);
    double acc = 0.0;
    std::vector<double> prefix(p + 1), suffix(p + 1);
    J.for_each([&](std::uint64_t, std::span<const int> t, double w) {
        prefix[0] = 1.0;
        for (int j = 0; j < p; ++j) prefix[j + 1] = prefix[j] * sigma[static_cast<std::size_t>(t[j])];
        suffix[p] = 1.0;
        for (int j = p - 1; j >= 0; --j) suffix[j] = suffix[j + 1] * sigma[static_cast<std::size_t>(t[j])];
        acc += w * prefix[p];
        for (int j = 0; j < p; ++j)
            grad[static_cast<std::size_t>(t[j])] += w * prefix[j] * suffix[j + 1];
    });
    const double pref = gamma * std::pow(static_cast<double>(J.N()), (2.0 - p) / 2.0) / scales.b;
    for (double& g : grad) g *= pref;
    return pref * acc;
}

namespace detail {

inline void check_mixture_inputs(const std::vector<CouplingTensor>& tensors,
                                 const MixtureSpec& spec,
                                 const std::vector<TailScales>& scales,
                                 std::span<const double> sigma) {
    if (tensors.size() != spec.layers.size() || scales.size() != spec.layers.size())
        throw config_error("one tensor and one scale set per layer required");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].p() != spec.layers[i].p)
            throw config_error("tensor order does not match its layer");
        if (static_cast<int>(sigma.size()) != tensors[i].N())
            throw config_error("sigma size does not match tensor N");
    }
}

} // namespace detail

/// Mixed-model Hamiltonian: sum of the gamma_p-weighted layer Hamiltonians.
inline double hamiltonian(const std::vector<CouplingTensor>& tensors, const MixtureSpec& spec,
                          const std::vector<TailScales>& scales,
                          std::span<const double> sigma) {
    detail::check_mixture_inputs(tensors, spec, scales, sigma);
    double acc = 0.0;
    for (std::size_t i = 0; i < tensors.size(); ++i)
        acc += hamiltonian(tensors[i], sigma, spec.layers[i].gamma, scales[i]);
    return acc;
}

/// Mixed-model Hamiltonian and Euclidean gradient in one pass.
inline double hamiltonian_with_gradient(const std::vector<CouplingTensor>& tensors,
                                        const MixtureSpec& spec,
                                        const std::vector<TailScales>& scales,
                                        std::span<const double> sigma, std::span<double> grad) {
    detail::check_mixture_inputs(tensors, spec, scales, sigma);
    if (grad.size() != sigma.size())
        throw config_error("gradient buffer size does not match sigma");
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> layer_grad(sigma.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        acc += hamiltonian_with_gradient(tensors[i], sigma, spec.layers[i].gamma, scales[i],
                                         layer_grad);
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += layer_grad[j];
    }
    return acc;
}

/// Euclidean gradient of the mixed Hamiltonian, length N.
inline std::vector<double> gradient(const std::vector<CouplingTensor>& tensors,
                                    const MixtureSpec& spec,
                                    const std::vector<TailScales>& scales,
                                    std::span<const double> sigma) {
    std::vector<double> g(sigma.size());
    hamiltonian_with_gradient(tensors, spec, scales, sigma, g);
    return g;
}

/// Rescaled extreme coupling of a heavy layer: Lambda = max |w_m| / d over
/// multisets with p distinct indices. Tuples with a repeated index are
/// excluded deterministically, whatever their magnitude.
inline ExtremeStat lambda_stat(const CouplingTensor& J, const TailScales& scales) {
    if (!J.law().is_heavy())
        throw config_error("lambda statistic requires a heavy-tailed layer");
    ExtremeStat best;
    best.alpha = J.law().alpha;
    best.lambda = -1.0;
    J.for_each([&](std::uint64_t, std::span<const int> t, double w) {
        if (has_repeated_index(t)) return;
        const double v = std::abs(w) / scales.d;
        if (v > best.lambda) {
            best.lambda = v;
            best.argmax_tuple.assign(t.begin(), t.end());
        }
    });
    if (best.lambda < 0.0)
        throw config_error("lambda statistic requires N >= p distinct indices");
    return best;
}

// ---------------------------------------------------------------------------
// On-disk tensor format: "PSPN" magic, little-endian u32 JSON header length,
// JSON header, then the base draws as little-endian f64 in colex order.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::string& out, double x) {
    std::uint64_t v = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

inline double get_f64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

inline nlohmann::ordered_json tail_to_json(const TailLaw& law) {
    nlohmann::ordered_json j;
    if (law.is_heavy()) {
        j["kind"] = "heavy";
        j["alpha"] = law.alpha;
    } else {
        j["kind"] = (law.dist == TailLaw::Dist::Gaussian) ? "gaussian" : "rademacher";
    }
    return j;
}

inline TailLaw tail_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "heavy") return TailLaw::heavy(j.at("alpha").get<double>());
    if (kind == "gaussian") return TailLaw::gaussian();
    if (kind == "rademacher") return TailLaw::rademacher();
    throw config_error("unknown tail kind in tensor header: " + kind);
}

} // namespace detail

inline void save_tensor(const std::string& path, const CouplingTensor& J) {
    nlohmann::ordered_json hdr;
    hdr["format"] = "pspn-1";
    hdr["N"] = J.N();
    hdr["p"] = J.p();
    hdr["seed"] = J.seed();
    hdr["tail"] = detail::tail_to_json(J.law());
    hdr["order"] = "colex";
    hdr["count"] = J.size();
    const std::string hs = hdr.dump();

    std::string out;
    out.reserve(8 + hs.size() + 8 * J.size());
    out += "PSPN";
    detail::put_u32_le(out, static_cast<std::uint32_t>(hs.size()));
    out += hs;
    for (std::uint64_t r = 0; r < J.size(); ++r) detail::put_f64_le(out, J.base(r));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw config_error("cannot open tensor file for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw config_error("short write on tensor file: " + path);
}

inline CouplingTensor load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot open tensor file: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || buf.compare(0, 4, "PSPN") != 0)
        throw config_error("not a coupling tensor file: " + path);
    const auto* raw = reinterpret_cast<const unsigned char*>(buf.data());
    const std::uint32_t hlen = detail::get_u32_le(raw + 4);
    if (buf.size() < 8ull + hlen) throw config_error("truncated tensor header: " + path);
    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(buf.substr(8, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad tensor header: ") + e.what());
    }
    const int N = hdr.at("N").get<int>();
    const int p = hdr.at("p").get<int>();
    const std::uint64_t seed = hdr.at("seed").get<std::uint64_t>();
    const TailLaw law = detail::tail_from_json(hdr.at("tail"));
    const std::uint64_t M = hdr.at("count").get<std::uint64_t>();
    if (M != num_multisets(N, p)) throw config_error("tensor count does not match C(N+p-1,p)");
    if (buf.size() != 8ull + hlen + 8ull * M) throw config_error("truncated tensor payload: " + path);
    std::vector<double> base(M);
    const unsigned char* pay = raw + 8 + hlen;
    for (std::uint64_t r = 0; r < M; ++r) base[r] = detail::get_f64_le(pay + 8 * r);
    return CouplingTensor(N, p, law, seed, std::move(base));
}

} // namespace pspin
