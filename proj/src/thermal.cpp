#include "lsp2/thermal.hpp"

#include "lsp2/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace lsp2 {

void SourceConfig::validate() const
{
    if (!(mean_rate_beam1 >= 0.0) || !(mean_rate_beam2 >= 0.0))
        throw ConfigError("beam rates must be >= 0");
    if (!(coherence_time_ps > 0.0)) throw ConfigError("coherence_time_ps must be > 0");
    if (!(path_delay_beam2_ps >= 0.0)) throw ConfigError("path_delay_beam2_ps must be >= 0");
}

std::string_view to_string(EventKind k)
{
    switch (k) {
    case EventKind::photon_beam1: return "photon_beam1";
    case EventKind::photon_beam2: return "photon_beam2";
    case EventKind::dark: return "dark";
    case EventKind::crosstalk: return "crosstalk";
    }
    return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view s)
{
    for (auto k : {EventKind::photon_beam1, EventKind::photon_beam2, EventKind::dark,
                   EventKind::crosstalk})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

FieldState stationary_field(bool polarized, double t_ps, Rng& rng)
{
    FieldState s;
    s.polarized = polarized;
    s.last_sample_time_ps = t_ps;
    s.amplitude[0] = rng.complex_normal();
    if (!polarized) s.amplitude[1] = rng.complex_normal();
    return s;
}

FieldState advance_field(const FieldState& state, double dt_ps, double tau_ps, Rng& rng)
{
    if (dt_ps < 0.0) throw std::logic_error(fmt::format("advance_field: negative dt {}", dt_ps));
    if (dt_ps == 0.0) return state;
    FieldState next = state;
    const double x = dt_ps / tau_ps;
    const double decay = std::exp(-x);
    // 1 - decay^2 cancels badly for tiny steps
    const double kick = std::sqrt(x < 1e-3 ? -std::expm1(-2.0 * x) : 1.0 - decay * decay);
    next.amplitude[0] = state.amplitude[0] * decay + rng.complex_normal() * kick;
    if (!state.polarized) next.amplitude[1] = state.amplitude[1] * decay + rng.complex_normal() * kick;
    next.last_sample_time_ps = state.last_sample_time_ps + dt_ps;
    return next;
}

std::vector<TruthEvent> coherent_source_arrivals(double rate_cps, EventKind kind,
                                                 double cycle_period_ps, std::uint32_t cycle,
                                                 std::uint64_t seed)
{
    std::vector<TruthEvent> out;
    if (!(rate_cps > 0.0)) return out;
    const Stream stream = kind == EventKind::photon_beam2 ? Stream::beam2 : Stream::beam1;
    Rng rng(seed, cycle, stream);
    const double rate_per_ps = rate_cps * 1e-12;
    out.reserve(static_cast<std::size_t>(rate_per_ps * cycle_period_ps * 1.1) + 8);
    for (double t = rng.exponential(rate_per_ps); t < cycle_period_ps; t += rng.exponential(rate_per_ps))
        out.push_back(TruthEvent{kind, t, cycle, std::nullopt, kNoPixel});
    return out;
}

namespace {

std::vector<TruthEvent> merge_beams(std::vector<TruthEvent>&& a, std::vector<TruthEvent>&& b)
{
    if (b.empty()) return std::move(a);
    if (a.empty()) return std::move(b);
    std::vector<TruthEvent> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out),
               [](const TruthEvent& x, const TruthEvent& y) { return x.true_time_ps < y.true_time_ps; });
    return out;
}

}  // namespace

std::vector<TruthEvent> generate_cycle_arrivals(const SourceConfig& cfg, double cycle_period_ps,
                                                std::uint32_t cycle, ArrivalStats* stats,
                                                std::vector<IntensitySample>* trace)
{
    if (cfg.mode == SourceMode::coherent) {
        auto b1 = coherent_source_arrivals(cfg.mean_rate_beam1, EventKind::photon_beam1,
                                           cycle_period_ps, cycle, cfg.rng_seed);
        auto b2 = coherent_source_arrivals(cfg.mean_rate_beam2, EventKind::photon_beam2,
                                           cycle_period_ps, cycle, cfg.rng_seed);
        if (stats) {
            stats->candidates += b1.size() + b2.size();
            stats->accepted += b1.size() + b2.size();
        }
        return merge_beams(std::move(b1), std::move(b2));
    }

    constexpr double inf = std::numeric_limits<double>::infinity();
    Rng field_rng(cfg.rng_seed, cycle, Stream::field);
    Rng rng1(cfg.rng_seed, cycle, Stream::beam1);
    Rng rng2(cfg.rng_seed, cycle, Stream::beam2);
    Rng accept_rng(cfg.rng_seed, cycle, Stream::accept);

    const double cand1 = cfg.mean_rate_beam1 * kIntensityCap * 1e-12;  // per ps
    const double cand2 = cfg.mean_rate_beam2 * kIntensityCap * 1e-12;
    const double delay = cfg.path_delay_beam2_ps;
    const double tau = cfg.coherence_time_ps;

    // Arrival times of the next candidate in each beam.
    double next1 = cand1 > 0.0 ? rng1.exponential(cand1) : inf;
    double next2 = cand2 > 0.0 ? rng2.exponential(cand2) : inf;

    std::vector<TruthEvent> out1, out2;
    const double expected = (cfg.mean_rate_beam1 + cfg.mean_rate_beam2) * 1e-12 * cycle_period_ps;
    out1.reserve(static_cast<std::size_t>(cfg.mean_rate_beam1 * 1e-12 * cycle_period_ps * 1.2) + 8);
    out2.reserve(static_cast<std::size_t>(expected * 0.6) + 8);

    FieldState field;
    bool field_ready = false;
    ArrivalStats local;

    for (;;) {
        const double eval1 = next1 < cycle_period_ps ? next1 : inf;
        const double eval2 = next2 < cycle_period_ps ? next2 - delay : inf;
        if (eval1 == inf && eval2 == inf) break;
        const bool beam1 = eval1 <= eval2;
        const double t_eval = beam1 ? eval1 : eval2;

        if (!field_ready) {
            field = stationary_field(cfg.polarized, t_eval, field_rng);
            field_ready = true;
        } else {
            field = advance_field(field, t_eval - field.last_sample_time_ps, tau, field_rng);
        }
        const double intensity = field.intensity();
        ++local.candidates;
        if (intensity > kIntensityCap) ++local.cap_exceeded;
        if (trace) trace->push_back({t_eval, intensity});

        const bool accepted = accept_rng.uniform() * kIntensityCap < intensity;
        if (beam1) {
            if (accepted) out1.push_back({EventKind::photon_beam1, next1, cycle, std::nullopt, kNoPixel});
            next1 += rng1.exponential(cand1);
        } else {
            if (accepted) out2.push_back({EventKind::photon_beam2, next2, cycle, std::nullopt, kNoPixel});
            next2 += rng2.exponential(cand2);
        }
        if (accepted) ++local.accepted;
    }
    if (stats) *stats += local;
    return merge_beams(std::move(out1), std::move(out2));
}

std::vector<TruthEvent> generate_arrivals(const SourceConfig& cfg, double cycle_period_ps,
                                          std::uint32_t cycle_count, ArrivalStats* stats)
{
    cfg.validate();
    std::vector<TruthEvent> all;
    for (std::uint32_t c = 0; c < cycle_count; ++c) {
        auto events = generate_cycle_arrivals(cfg, cycle_period_ps, c, stats);
        all.insert(all.end(), events.begin(), events.end());
    }
    return all;
}

}  // namespace lsp2
