#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace cfomimo {

/// Tags for the independent random substreams of one Monte Carlo trial.
/// The numeric values are part of the reproducibility contract; never
/// renumber existing entries.
enum class StreamPhase : std::uint64_t {
    cfo_draw = 1,
    estimation_channel = 2,
    ce_pilot_noise = 3,
    impulse_train_noise = 4,
    data_channel = 5,
    impulse_pilot_noise = 6,
    data_symbols = 7,
    data_noise = 8,
    user = 100,  // free range for callers (tests, ad-hoc tools)
};

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Seed for the substream (master, point, trial, phase).
///
/// Each coordinate is folded in with a SplitMix64 round, so the result only
/// depends on the four integers: it is stable across runs, platforms and
/// worker counts. `point` identifies an outer grid point of an experiment,
/// `trial` the Monte Carlo trial (or CFO-estimation round) inside it.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t point,
                                    std::uint64_t trial, StreamPhase phase) noexcept {
    std::uint64_t s = detail::mix64(master);
    s = detail::mix64(s ^ point);
    s = detail::mix64(s ^ (trial + 0x5851f42d4c957f2dULL));
    s = detail::mix64(s ^ static_cast<std::uint64_t>(phase));
    return s;
}

/// A seeded source of the scalar and circularly-symmetric complex draws used
/// throughout the simulator.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    RandomStream(std::uint64_t master, std::uint64_t point, std::uint64_t trial,
                 StreamPhase phase)
        : engine_(derive_seed(master, point, trial, phase)) {}

    double gaussian() { return normal_(engine_); }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    /// CN(0, var): independent real and imaginary parts of variance var/2.
    std::complex<double> complex_gaussian(double var) {
        const double s = std::sqrt(0.5 * var);
        const double re = normal_(engine_);
        const double im = normal_(engine_);
        return {s * re, s * im};
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cfomimo
