#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace spwood {

/// Seeded generator whose output is identical on every platform.
///
/// The engine is std::mt19937_64, whose sequence the standard pins down.
/// The standard distributions are implementation-defined, so the derived
/// draws are written out here:
///   uniform()     top 53 bits of one engine word, scaled to [0,1)
///   below(n)      rejection sampling on the largest multiple of n
///   normal()      Box-Muller, both variates used in order
///   shuffle()     Fisher-Yates from the back, j = below(i + 1)
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace spwood
