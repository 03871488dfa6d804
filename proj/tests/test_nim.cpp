#include <catch2/catch_amalgamated.hpp>

#include <pspin/nim.hpp>

#include <cmath>
#include <vector>

using namespace pspin;

TEST_CASE("slice height g is the rescaled spike amplitude") {
    CHECK(g(2, 2.0) == 1.0);
    CHECK_THAT(g(3, std::pow(3.0, 1.5)), Catch::Matchers::WithinRel(1.0, 1e-12));
    CHECK_THAT(g(4, 8.0), Catch::Matchers::WithinRel(0.5, 1e-12));
    CHECK(g(2, 0.0) == 0.0);
}

TEST_CASE("closed-form monomial value matches the direct grid scan") {
    CHECK_THAT(f_grid(2, 2.0), Catch::Matchers::WithinAbs(0.153426, 1e-5));
    CHECK_THAT(f_closed(3, 10.0).value,
               Catch::Matchers::WithinAbs(f_grid(3, 10.0), 1e-8));
    for (int p = 2; p <= 4; ++p)
        for (double h : {0.8, 1.3, 2.0, 7.0, 40.0})
            CHECK_THAT(f_closed(p, h).value, Catch::Matchers::WithinAbs(f_grid(p, h), 1e-8));
}

TEST_CASE("p = 2 collapses to the explicit log formula") {
    CHECK_THAT(f_closed(2, std::exp(1.0)).value,
               Catch::Matchers::WithinAbs(0.359141, 1e-5));
    for (double h : {1.5, 2.0, std::exp(1.0), 10.0})
        CHECK_THAT(f_closed(2, h).value,
                   Catch::Matchers::WithinAbs((h - 1.0) / 2.0 - 0.5 * std::log(h), 1e-10));
}

TEST_CASE("value vanishes below the threshold and is positive above") {
    CHECK(nim_threshold(2) == 1.0);
    for (double h : {0.25, 0.5, 0.9, 1.0}) {
        const MonomialValue v = f_closed(2, h);
        CHECK(v.value == 0.0);
        CHECK(v.qstar == 0.0);
    }
    for (int p = 2; p <= 5; ++p) {
        const double hc = nim_threshold(p);
        CHECK(f_closed(p, 0.999 * hc).value == 0.0);
        const MonomialValue above = f_closed(p, 1.02 * hc);
        CHECK(above.value > 0.0);
        CHECK(above.qstar > 0.0);
        CHECK(above.qstar < 1.0);
    }
}

TEST_CASE("monomial value is nondecreasing and convex in the amplitude") {
    for (int p : {2, 3, 4}) {
        std::vector<double> f;
        const double h0 = 0.5, h1 = 20.0;
        const int n = 60;
        for (int i = 0; i < n; ++i)
            f.push_back(f_closed(p, h0 + (h1 - h0) * i / (n - 1)).value);
        for (int i = 0; i + 1 < n; ++i) CHECK(f[i + 1] >= f[i] - 1e-12);
        for (int i = 1; i + 1 < n; ++i) CHECK(f[i - 1] + f[i + 1] - 2.0 * f[i] >= -1e-10);
    }
}

TEST_CASE("large-amplitude slope approaches p^(-p/2)") {
    for (int p : {2, 3}) {
        const double h = 1e6;
        CHECK_THAT(f_closed(p, h).value / h,
                   Catch::Matchers::WithinRel(std::pow(static_cast<double>(p), -p / 2.0),
                                              1e-2));
    }
}

TEST_CASE("interior optimum satisfies the stationarity identity") {
    // d/dq [ (1/2) log(1-q) + h (q/p)^(p/2) ] = 0  <=>
    // 1/(1-q) = h p^(1-p/2) q^(p/2-1)
    for (int p : {2, 3, 4})
        for (double h : {1.5, 2.0, 5.0, 10.0}) {
            const MonomialValue v = f_closed(p, h);
            if (v.value <= 0.0) continue;
            const double lhs = 1.0 / (1.0 - v.qstar);
            const double rhs = h * std::pow(static_cast<double>(p), 1.0 - p / 2.0) *
                               std::pow(v.qstar, p / 2.0 - 1.0);
            CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(lhs)));
        }
}

TEST_CASE("convenience accessors agree with the full optimum") {
    for (int p : {2, 3})
        for (double h : {0.5, 2.0, 9.0}) {
            const MonomialValue v = f_closed(p, h);
            CHECK(nim_value(p, h) == v.value);
            CHECK(nim_qstar(p, h) == v.qstar);
        }
}

TEST_CASE("objective restricted to a slice matches by direct evaluation") {
    // the grid scan is itself checked against pointwise objective values
    const int p = 3;
    const double h = 4.0;
    double best = 0.0;
    for (int i = 0; i <= 5000; ++i) {
        const double q = i / 5001.0;
        best = std::max(best, nim_objective(p, h, q));
    }
    CHECK_THAT(f_grid(p, h), Catch::Matchers::WithinAbs(best, 1e-6));
    CHECK(nim_objective(p, h, 0.0) == 0.0);
}

TEST_CASE("invalid orders are rejected") {
    CHECK_THROWS_AS(f_closed(1, 2.0), config_error);
    CHECK_THROWS_AS(f_grid(1, 2.0), config_error);
    CHECK_THROWS_AS(nim_threshold(0), config_error);
}
