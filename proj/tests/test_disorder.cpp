#include <catch2/catch_amalgamated.hpp>

#include <pspin/disorder.hpp>

#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <vector>

using namespace pspin;

namespace {

// Tensor with a single nonzero base draw at the given sorted tuple.
CouplingTensor one_entry_tensor(int N, int p, const TailLaw& law, std::vector<int> tuple,
                                double base_value) {
    std::vector<double> base(num_multisets(N, p), 0.0);
    base[colex_rank(tuple)] = base_value;
    return CouplingTensor(N, p, law, 0, std::move(base));
}

std::vector<double> random_sphere_state(Rng& rng, int N) {
    std::vector<double> s(static_cast<std::size_t>(N));
    double n2 = 0.0;
    for (double& v : s) {
        v = rng.normal();
        n2 += v * v;
    }
    const double scale = std::sqrt(N / n2);
    for (double& v : s) v *= scale;
    return s;
}

} // namespace

TEST_CASE("generate draws one base value per multiset") {
    const auto J = generate_couplings(TailLaw::heavy(1.5), 3, 2, 7);
    CHECK(J.size() == 6);
    CHECK(J.N() == 3);
    CHECK(J.p() == 2);
    CHECK(J.seed() == 7);
    // same seed reproduces the draws bitwise, different seed does not
    const auto J2 = generate_couplings(TailLaw::heavy(1.5), 3, 2, 7);
    CHECK(J.base_draws() == J2.base_draws());
    const auto J3 = generate_couplings(TailLaw::heavy(1.5), 3, 2, 8);
    CHECK(J.base_draws() != J3.base_draws());
}

TEST_CASE("gaussian symmetric-sum weights have variance p!/k!") {
    // pool weights over many independent tensors at N = 10, p = 2
    double diag_s2 = 0.0, off_s2 = 0.0;
    std::size_t n_diag = 0, n_off = 0;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        const auto J = generate_couplings(TailLaw::gaussian(), 10, 2, seed);
        J.for_each([&](std::uint64_t, std::span<const int> t, double w) {
            if (t[0] == t[1]) {
                diag_s2 += w * w;
                ++n_diag;
            } else {
                off_s2 += w * w;
                ++n_off;
            }
        });
    }
    const double var_diag = diag_s2 / static_cast<double>(n_diag);
    const double var_off = off_s2 / static_cast<double>(n_off);
    CHECK(std::abs(var_diag - 1.0) < 3.0 * std::sqrt(2.0 / static_cast<double>(n_diag)));
    CHECK(std::abs(var_off - 2.0) < 3.0 * 2.0 * std::sqrt(2.0 / static_cast<double>(n_off)));
}

TEST_CASE("hamiltonian of a single coupling matches the hand expansion") {
    // base draw a on the pair {0,1}; sigma puts mass N/2 on each of the two
    // coordinates, so H = gamma * sqrt(2) * a * (N/2) / b.
    const int N = 4;
    const double a = 0.8;
    const TailLaw law = TailLaw::heavy(1.5);
    const CouplingTensor J = one_entry_tensor(N, 2, law, {0, 1}, a);
    const TailScales s = quantile_scale(law, N, 2);
    std::vector<double> sigma(N, 0.0);
    sigma[0] = sigma[1] = std::sqrt(N / 2.0);
    const double expect = std::sqrt(2.0) * a * (N / 2.0) / s.b;
    CHECK_THAT(hamiltonian(J, sigma, 1.0, s), Catch::Matchers::WithinRel(expect, 1e-12));
}

TEST_CASE("p = 2 hamiltonian equals the quadratic form sigma^T A sigma") {
    const int N = 32;
    MixtureSpec spec;
    spec.layers = {{2, 1.3, TailLaw::gaussian()}};
    const auto scales = scales_for(spec, N);
    const auto tensors = generate(spec, N, 21);
    const CouplingTensor& J = tensors[0];

    std::vector<double> A(static_cast<std::size_t>(N) * N, 0.0);
    const double pref = spec.layers[0].gamma / scales[0].b;
    J.for_each([&](std::uint64_t, std::span<const int> t, double w) {
        const std::size_t i = t[0], j = t[1];
        if (i == j)
            A[i * N + i] = pref * w;
        else
            A[i * N + j] = A[j * N + i] = 0.5 * pref * w;
    });

    Rng rng(33);
    for (int rep = 0; rep < 5; ++rep) {
        const auto sigma = random_sphere_state(rng, N);
        double quad = 0.0;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) quad += sigma[i] * A[i * N + j] * sigma[j];
        CHECK_THAT(hamiltonian(tensors, spec, scales, sigma),
                   Catch::Matchers::WithinRel(quad, 1e-10));
    }
}

TEST_CASE("hamiltonian matches the ordered-tuple reference sum") {
    Rng rng(5);
    const struct {
        int p, N;
    } cases[] = {{2, 12}, {3, 8}, {4, 6}};
    for (const auto& c : cases) {
        MixtureSpec spec;
        spec.layers = {{c.p, 0.7, TailLaw::heavy(1.5)}};
        const auto scales = scales_for(spec, c.N);
        const auto tensors = generate(spec, c.N, 100 + c.p);
        for (int rep = 0; rep < 3; ++rep) {
            const auto sigma = random_sphere_state(rng, c.N);
            const double lib = hamiltonian(tensors, spec, scales, sigma);
            const double ref = oracles::naive_hamiltonian(tensors, spec, scales, sigma);
            CHECK_THAT(lib, Catch::Matchers::WithinRel(ref, 1e-10));
        }
    }

    MixtureSpec mixed;
    mixed.layers = {{2, 1.0, TailLaw::gaussian()}, {3, -0.4, TailLaw::heavy(2.5)}};
    const int N = 8;
    const auto scales = scales_for(mixed, N);
    const auto tensors = generate(mixed, N, 9);
    const auto sigma = random_sphere_state(rng, N);
    CHECK_THAT(hamiltonian(tensors, mixed, scales, sigma),
               Catch::Matchers::WithinRel(oracles::naive_hamiltonian(tensors, mixed, scales, sigma),
                                          1e-10));
}

TEST_CASE("analytic gradient agrees with central differences") {
    MixtureSpec spec;
    spec.layers = {{3, 1.0, TailLaw::heavy(1.5)}};
    const int N = 16;
    const auto scales = scales_for(spec, N);
    const auto tensors = generate(spec, N, 3);
    auto f = [&](std::span<const double> s) { return hamiltonian(tensors, spec, scales, s); };

    Rng rng(19);
    const auto sigma = random_sphere_state(rng, N);
    const auto g = gradient(tensors, spec, scales, sigma);
    const auto gfd = oracles::fd_gradient(f, sigma, 1e-5);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < N; ++i) {
        num += (g[i] - gfd[i]) * (g[i] - gfd[i]);
        den += g[i] * g[i];
    }
    CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("gradient matches finite differences on many random states") {
    MixtureSpec spec;
    spec.layers = {{2, 0.9, TailLaw::gaussian()}, {3, 0.5, TailLaw::heavy(1.5)}};
    const int N = 8;
    const auto scales = scales_for(spec, N);
    const auto tensors = generate(spec, N, 4);
    auto f = [&](std::span<const double> s) { return hamiltonian(tensors, spec, scales, s); };

    Rng rng(77);
    for (int rep = 0; rep < 100; ++rep) {
        const auto sigma = random_sphere_state(rng, N);
        const auto g = gradient(tensors, spec, scales, sigma);
        const auto gfd = oracles::fd_gradient(f, sigma, 1e-5);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < N; ++i) {
            num += (g[i] - gfd[i]) * (g[i] - gfd[i]);
            den += g[i] * g[i];
        }
        CHECK(std::sqrt(num / den) < 1e-5);
    }
}

TEST_CASE("hamiltonian symmetries") {
    const int N = 6, p = 3;
    MixtureSpec spec;
    spec.layers = {{p, 1.1, TailLaw::heavy(1.8)}};
    const auto scales = scales_for(spec, N);
    const auto tensors = generate(spec, N, 12);
    Rng rng(8);
    const auto sigma = random_sphere_state(rng, N);
    const double h0 = hamiltonian(tensors, spec, scales, sigma);

    SECTION("degree-p homogeneity off the sphere") {
        const double t = 1.7;
        std::vector<double> scaled(sigma);
        for (double& v : scaled) v *= t;
        CHECK_THAT(hamiltonian(tensors, spec, scales, scaled),
                   Catch::Matchers::WithinRel(std::pow(t, p) * h0, 1e-12));
    }

    SECTION("parity in sigma is (-1)^p") {
        std::vector<double> neg(sigma);
        for (double& v : neg) v = -v;
        CHECK_THAT(hamiltonian(tensors, spec, scales, neg),
                   Catch::Matchers::WithinRel(std::pow(-1.0, p) * h0, 1e-12));
    }

    SECTION("relabeling indices and coordinates together is a no-op") {
        const std::vector<int> perm = {3, 0, 5, 1, 4, 2}; // i -> perm[i]
        std::vector<double> base_perm(tensors[0].size());
        std::vector<int> mapped(p);
        tensors[0].for_each([&](std::uint64_t r, std::span<const int> t, double) {
            for (int j = 0; j < p; ++j) mapped[j] = perm[static_cast<std::size_t>(t[j])];
            std::sort(mapped.begin(), mapped.end());
            base_perm[colex_rank(mapped)] = tensors[0].base(r);
        });
        std::vector<CouplingTensor> permuted;
        permuted.emplace_back(N, p, spec.layers[0].tail, 0, std::move(base_perm));
        std::vector<double> sigma_perm(sigma.size());
        for (int i = 0; i < N; ++i) sigma_perm[static_cast<std::size_t>(perm[i])] = sigma[i];
        CHECK_THAT(hamiltonian(permuted, spec, scales, sigma_perm),
                   Catch::Matchers::WithinRel(h0, 1e-12));
    }
}

TEST_CASE("pareto quantile identity holds exactly") {
    // P(sqrt(p!) |X| > d) * M = (d / sqrt(p!))^(-alpha) * M = 1
    for (double alpha : {0.7, 1.5, 2.0, 4.0})
        for (int p : {2, 3})
            for (int N : {5, 50, 333}) {
                const TailScales s = quantile_scale(TailLaw::heavy(alpha), N, p);
                const double pf = static_cast<double>(factorial_u64(p));
                const double tail_prob = std::pow(s.d / std::sqrt(pf), -alpha);
                CHECK_THAT(tail_prob * static_cast<double>(s.M),
                           Catch::Matchers::WithinRel(1.0, 1e-12));
            }
}

TEST_CASE("extreme statistic picks the largest distinct-index coupling") {
    const int N = 4, p = 2;
    const TailLaw law = TailLaw::heavy(1.5);
    const TailScales s = quantile_scale(law, N, p);

    SECTION("a single entry of effective magnitude 2d gives lambda = 2") {
        const double base = 2.0 * s.d / std::sqrt(2.0); // weight sqrt(2) base = 2 d
        const CouplingTensor J = one_entry_tensor(N, p, law, {0, 1}, base);
        const ExtremeStat e = lambda_stat(J, s);
        CHECK_THAT(e.lambda, Catch::Matchers::WithinRel(2.0, 1e-12));
        CHECK(e.argmax_tuple == std::vector<int>{0, 1});
        CHECK(e.alpha == 1.5);
    }

    SECTION("an all-zero tensor gives lambda = 0") {
        std::vector<double> base(num_multisets(N, p), 0.0);
        const CouplingTensor J(N, p, law, 0, std::move(base));
        CHECK(lambda_stat(J, s).lambda == 0.0);
    }

    SECTION("repeated-index tuples are excluded whatever their size") {
        std::vector<double> base(num_multisets(N, p), 0.0);
        std::vector<int> diag{2, 2}, off{1, 3};
        base[colex_rank(diag)] = 1e9;
        base[colex_rank(off)] = 3.0;
        const CouplingTensor J(N, p, law, 0, std::move(base));
        const ExtremeStat e = lambda_stat(J, s);
        CHECK_THAT(e.lambda, Catch::Matchers::WithinRel(std::sqrt(2.0) * 3.0 / s.d, 1e-12));
        CHECK(e.argmax_tuple == off);
    }

    SECTION("lambda is scale-equivariant in the draws") {
        const auto J = generate_couplings(law, 6, 2, 5);
        const TailScales s6 = quantile_scale(law, 6, 2);
        const double l0 = lambda_stat(J, s6).lambda;
        std::vector<double> scaled = J.base_draws();
        for (double& v : scaled) v *= 2.5;
        const CouplingTensor J2(6, 2, law, 5, std::move(scaled));
        CHECK_THAT(lambda_stat(J2, s6).lambda, Catch::Matchers::WithinRel(2.5 * l0, 1e-12));
    }
}

TEST_CASE("tensor files round-trip bitwise") {
    const auto J = generate_couplings(TailLaw::heavy(1.5), 8, 3, 99);
    const std::string path =
        (std::filesystem::temp_directory_path() / "pspin_test_tensor.bin").string();
    save_tensor(path, J);
    const CouplingTensor L = load_tensor(path);
    CHECK(L.N() == J.N());
    CHECK(L.p() == J.p());
    CHECK(L.seed() == J.seed());
    CHECK(L.law().is_heavy());
    CHECK(L.law().alpha == 1.5);
    REQUIRE(L.size() == J.size());
    CHECK(std::memcmp(L.base_draws().data(), J.base_draws().data(),
                      J.size() * sizeof(double)) == 0);
    std::remove(path.c_str());
    CHECK_THROWS(load_tensor(path));
}

TEST_CASE("generate refuses tensors beyond the memory budget") {
    MixtureSpec spec;
    spec.layers = {{2, 1.0, TailLaw::gaussian()}};
    CHECK_THROWS_AS(generate(spec, 50, 0, 1024), config_error);
    CHECK_NOTHROW(generate(spec, 50, 0));
}

TEST_CASE("input validation rejects inconsistent shapes") {
    MixtureSpec spec;
    spec.layers = {{2, 1.0, TailLaw::gaussian()}};
    const auto scales = scales_for(spec, 6);
    const auto tensors = generate(spec, 6, 1);
    std::vector<double> bad(5, 1.0);
    CHECK_THROWS_AS(hamiltonian(tensors, spec, scales, bad), config_error);

    MixtureSpec dup;
    dup.layers = {{2, 1.0, TailLaw::gaussian()}, {2, 0.5, TailLaw::gaussian()}};
    CHECK_THROWS_AS(dup.validate(), config_error);

    MixtureSpec zero;
    zero.layers = {{2, 0.0, TailLaw::gaussian()}};
    CHECK_THROWS_AS(zero.validate(), config_error);

    MixtureSpec low;
    low.layers = {{1, 1.0, TailLaw::gaussian()}};
    CHECK_THROWS_AS(low.validate(), config_error);
}
