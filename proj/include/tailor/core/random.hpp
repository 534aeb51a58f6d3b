#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace tailor {

// Seeded stream with explicit float conversions so that draws do not depend
// on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::size_t index(std::size_t n) {
        const unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
        return static_cast<std::size_t>(m >> 64);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Derives an independent child stream; used to give each subsystem its own
    // sequence from one experiment seed.
    Rng fork(std::uint64_t salt) {
        std::seed_seq seq{static_cast<std::uint32_t>(next()), static_cast<std::uint32_t>(salt),
                          static_cast<std::uint32_t>(salt >> 32)};
        std::mt19937_64 e(seq);
        return Rng(e());
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace tailor
