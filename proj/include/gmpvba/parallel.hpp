#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gmpvba {

inline void set_num_threads(int n)
{
#ifdef _OPENMP
    if (n > 0)
        omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// Block size of the deterministic reductions. Partial sums are formed per
/// block and combined serially, so the result does not depend on the
/// thread count or the scheduler.
inline constexpr std::size_t kReductionBlock = 1024;

template <class Term>
double deterministic_sum(std::size_t n, Term&& term)
{
    const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
    std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
        const std::size_t begin = static_cast<std::size_t>(b) * kReductionBlock;
        const std::size_t end = std::min(n, begin + kReductionBlock);
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i)
            s += term(i);
        partial[static_cast<std::size_t>(b)] = s;
    }
    return std::accumulate(partial.begin(), partial.end(), 0.0);
}

/// Counter-based generator: every draw is SplitMix64 applied to a mix of
/// (seed, stream, counter). Draws can be taken in any order or on any thread
/// and still reproduce bit for bit.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    static std::uint64_t splitmix64(std::uint64_t x) noexcept
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const noexcept
    {
        return splitmix64(splitmix64(seed_ ^ splitmix64(stream)) + counter);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform(std::uint64_t stream, std::uint64_t counter) const noexcept
    {
        return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
    }

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

}  // namespace gmpvba
