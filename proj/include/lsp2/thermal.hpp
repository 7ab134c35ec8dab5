#pragma once

// Two-beam photon arrivals from one chaotic (thermal) field.
//
// The field is an Ornstein-Uhlenbeck process, sampled exactly at irregular
// times, so g2(tau) = 1 + |g1(tau)|^2 = 1 + exp(-2|tau|/tau_f) for a
// polarized source. Arrivals are drawn by thinning a homogeneous candidate
// process at rate * kIntensityCap.

#include "lsp2/rng.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace lsp2 {

inline constexpr double kIntensityCap = 20.0;

enum class SourceMode { thermal, coherent };

struct SourceConfig {
    SourceMode mode = SourceMode::thermal;
    double mean_rate_beam1 = 0.0;  // counts/s
    double mean_rate_beam2 = 0.0;  // counts/s
    double coherence_time_ps = 150.0;
    bool polarized = true;
    double path_delay_beam2_ps = 0.0;
    std::uint64_t rng_seed = 1;

    /// Throws ConfigError.
    void validate() const;
};

enum class EventKind : std::uint8_t { photon_beam1, photon_beam2, dark, crosstalk };

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

inline constexpr std::int32_t kNoPixel = -1;

struct TruthEvent {
    EventKind kind = EventKind::photon_beam1;
    double true_time_ps = 0.0;
    std::uint32_t cycle = 0;
    std::optional<std::uint32_t> parent;  // index in the cycle's truth list
    std::int32_t pixel = kNoPixel;
};

struct FieldState {
    std::array<std::complex<double>, 2> amplitude{};
    bool polarized = true;
    double last_sample_time_ps = 0.0;

    /// |E|^2 (polarized) or the mean of both components (unpolarized); the
    /// stationary mean is 1 in both cases.
    double intensity() const
    {
        if (polarized) return std::norm(amplitude[0]);
        return 0.5 * (std::norm(amplitude[0]) + std::norm(amplitude[1]));
    }
};

/// Draw from the stationary distribution.
FieldState stationary_field(bool polarized, double t_ps, Rng& rng);

/// Exact OU step: E' = E exp(-dt/tau) + zeta sqrt(1 - exp(-2 dt/tau)).
/// Throws std::logic_error for dt < 0. dt == 0 returns the state unchanged.
FieldState advance_field(const FieldState& state, double dt_ps, double tau_ps, Rng& rng);

struct ArrivalStats {
    std::uint64_t candidates = 0;
    std::uint64_t accepted = 0;
    std::uint64_t cap_exceeded = 0;  // candidates with I(t) > kIntensityCap

    ArrivalStats& operator+=(const ArrivalStats& o)
    {
        candidates += o.candidates;
        accepted += o.accepted;
        cap_exceeded += o.cap_exceeded;
        return *this;
    }
};

struct IntensitySample {
    double time_ps;
    double intensity;
};

/// Beam photons for one cycle, time sorted. Each cycle is an independent
/// field realization seeded from (rng_seed, cycle). If `trace` is given, the
/// field intensity at every candidate evaluation is appended.
std::vector<TruthEvent> generate_cycle_arrivals(const SourceConfig& cfg, double cycle_period_ps,
                                                std::uint32_t cycle, ArrivalStats* stats = nullptr,
                                                std::vector<IntensitySample>* trace = nullptr);

/// All cycles concatenated (cycle-major).
std::vector<TruthEvent> generate_arrivals(const SourceConfig& cfg, double cycle_period_ps,
                                          std::uint32_t cycle_count, ArrivalStats* stats = nullptr);

/// Homogeneous Poisson arrivals for one beam (constant intensity).
std::vector<TruthEvent> coherent_source_arrivals(double rate_cps, EventKind kind,
                                                 double cycle_period_ps, std::uint32_t cycle,
                                                 std::uint64_t seed);

}  // namespace lsp2
