#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pspin {

/// Binomial coefficient C(n, k) in exact 64-bit arithmetic.
/// Throws std::overflow_error if the result does not fit in uint64.
inline std::uint64_t binom_u64(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    if (k > n - k) k = n - k;
    unsigned __int128 acc = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        acc = acc * (n - k + i) / i; // exact: C(n-k+i, i) is an integer
        if (acc > std::numeric_limits<std::uint64_t>::max()) {
            throw std::overflow_error("binomial C(" + std::to_string(n) + "," +
                                      std::to_string(k) + ") overflows 64 bits");
        }
    }
    return static_cast<std::uint64_t>(acc);
}

inline std::uint64_t factorial_u64(unsigned n) {
    std::uint64_t f = 1;
    for (unsigned i = 2; i <= n; ++i) f *= i;
    return f;
}

// Ordered multisets i_0 <= i_1 <= ... <= i_{p-1} over {0,...,N-1} are stored
// in colexicographic order. The rank of a tuple is
//   rank = sum_j C(i_j + j, j + 1)   (0-based indices and positions),
// the standard combinatorial number system after the shift to strictly
// increasing tuples.

inline std::uint64_t colex_rank(std::span<const int> tuple) {
    std::uint64_t r = 0;
    for (std::size_t j = 0; j < tuple.size(); ++j)
        r += binom_u64(static_cast<std::uint64_t>(tuple[j]) + j, j + 1);
    return r;
}

inline void colex_unrank(std::uint64_t rank, int N, int p, std::span<int> out) {
    for (int j = p - 1; j >= 0; --j) {
        // largest v with C(v + j, j + 1) <= rank
        int lo = 0, hi = N - 1;
        while (lo < hi) {
            const int mid = (lo + hi + 1) / 2;
            if (binom_u64(static_cast<std::uint64_t>(mid) + j, j + 1) <= rank)
                lo = mid;
            else
                hi = mid - 1;
        }
        out[j] = lo;
        rank -= binom_u64(static_cast<std::uint64_t>(lo) + j, j + 1);
    }
}

/// Product of factorials of the repeat counts of a sorted tuple
/// ({1,1,3} -> 2! * 1! = 2). This is the k! of the multiset.
inline std::uint64_t repeat_factorial(std::span<const int> sorted_tuple) {
    std::uint64_t f = 1;
    std::size_t i = 0;
    while (i < sorted_tuple.size()) {
        std::size_t run = 1;
        while (i + run < sorted_tuple.size() && sorted_tuple[i + run] == sorted_tuple[i]) ++run;
        f *= factorial_u64(static_cast<unsigned>(run));
        i += run;
    }
    return f;
}

inline bool has_repeated_index(std::span<const int> sorted_tuple) {
    for (std::size_t i = 1; i < sorted_tuple.size(); ++i)
        if (sorted_tuple[i] == sorted_tuple[i - 1]) return true;
    return false;
}

/// Walks all ordered multisets of size p over {0,...,N-1} in colex order.
/// Usage: for (MultisetCursor c(N, p); !c.done(); c.next()) { ... }
/// next() is O(p) amortized; rank() tracks the colex rank of the current
/// tuple so no unranking is needed during full sweeps.
class MultisetCursor {
public:
    MultisetCursor(int N, int p) : N_(N), tuple_(static_cast<std::size_t>(p), 0) {}

    bool done() const { return done_; }
    std::uint64_t rank() const { return rank_; }
    std::span<const int> tuple() const { return tuple_; }

    void next() {
        const int p = static_cast<int>(tuple_.size());
        int j = 0;
        while (j < p) {
            const int cap = (j + 1 < p) ? tuple_[j + 1] : N_ - 1;
            if (tuple_[j] < cap) break;
            ++j;
        }
        if (j == p) {
            done_ = true;
            return;
        }
        ++tuple_[j];
        for (int l = 0; l < j; ++l) tuple_[l] = 0;
        ++rank_;
    }

private:
    int N_;
    std::vector<int> tuple_;
    std::uint64_t rank_ = 0;
    bool done_ = false;
};

} // namespace pspin
