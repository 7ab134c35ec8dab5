#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace lsp2 {

/// SplitMix64 step; used to derive independent sub-stream seeds.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Hash (seed, a, b) into a well-mixed 64-bit seed. Every simulation stage
/// draws from its own stream keyed by (run seed, cycle, stage), so results do
/// not depend on worker count or scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept;

/// Stage identifiers for derive_seed().
enum class Stream : std::uint64_t {
    field = 1,
    beam1 = 2,
    beam2 = 3,
    accept = 4,
    pixel = 5,
    dark = 6,
    crosstalk = 7,
    jitter = 8,
    dark_rates = 9,
    tdc_widths = 10,
    offsets = 11,
};

/// Portable random source. std::mt19937_64 is fully specified by the
/// standard; the distributions below are written out by hand because the
/// std:: distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t a, Stream s)
        : engine_(derive_seed(seed, a, static_cast<std::uint64_t>(s))) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double uniform_pos() { return 1.0 - uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Exponential variate with the given rate (mean 1/rate).
    double exponential(double rate);

    /// Standard normal (Marsaglia polar method, spare cached).
    double normal();

    /// Circularly symmetric complex Gaussian with E|z|^2 = 1.
    std::complex<double> complex_normal();

    /// Gamma(shape, 1) via Marsaglia-Tsang.
    double gamma(double shape);

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lsp2
