#include "lsp2/scenario.hpp"

#include "lsp2/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace lsp2 {

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double to_double(std::string_view key, std::string_view v)
{
    try {
        std::size_t used = 0;
        const std::string str(v);
        const double d = std::stod(str, &used);
        if (used != str.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
    }
}

template <class Int>
Int to_int(std::string_view key, std::string_view v)
{
    Int x{};
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
        throw ConfigError(fmt::format("{}: '{}' is not a valid integer", key, v));
    return x;
}

bool to_bool(std::string_view key, std::string_view v)
{
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

std::string fmt_double(double x) { return fmt::format("{}", x); }

}  // namespace

void set_scenario_value(Scenario& s, std::string_view key, std::string_view value)
{
    const auto v = trim(value);
    auto& src = s.source;
    auto& det = s.detector;
    auto& acq = s.acquisition;
    auto& ana = s.analysis;

    if (key == "name") s.name = std::string(v);
    else if (key == "seed") s.seed = to_int<std::uint64_t>(key, v);
    else if (key == "workers") s.workers = to_int<unsigned>(key, v);

    else if (key == "acquisition.cycle_count") acq.cycle_count = to_int<std::uint32_t>(key, v);
    else if (key == "acquisition.cycle_period_ns") acq.cycle_period_ns = to_int<std::uint32_t>(key, v);
    else if (key == "acquisition.block_len") acq.block_len = to_int<std::uint32_t>(key, v);
    else if (key == "acquisition.pixels_per_tdc") acq.pixels_per_tdc = to_int<std::uint32_t>(key, v);

    else if (key == "source.mode") {
        if (v == "thermal") src.mode = SourceMode::thermal;
        else if (v == "coherent") src.mode = SourceMode::coherent;
        else throw ConfigError(fmt::format("source.mode: '{}' is not thermal|coherent", v));
    }
    else if (key == "source.rate_beam1_cps") src.mean_rate_beam1 = to_double(key, v);
    else if (key == "source.rate_beam2_cps") src.mean_rate_beam2 = to_double(key, v);
    else if (key == "source.coherence_time_ps") src.coherence_time_ps = to_double(key, v);
    else if (key == "source.polarized") src.polarized = to_bool(key, v);
    else if (key == "source.path_delay_beam2_ps") src.path_delay_beam2_ps = to_double(key, v);

    else if (key == "detector.pixel_count") det.pixel_count = to_int<std::uint32_t>(key, v);
    else if (key == "detector.jitter_sigma_ps") det.jitter_sigma_ps = to_double(key, v);
    else if (key == "detector.pde") det.pde = to_double(key, v);
    else if (key == "detector.beam_centers") {
        const auto parts = split(v, ',');
        if (parts.size() != 2) throw ConfigError("detector.beam_centers needs two pixel indices");
        det.beam_centers = {to_int<std::int32_t>(key, parts[0]), to_int<std::int32_t>(key, parts[1])};
    }
    else if (key == "detector.beam_sigma_px") det.beam_sigma_px = to_double(key, v);
    else if (key == "detector.beam_profile") {
        if (v == "gaussian") det.beam_profile = BeamProfile::gaussian;
        else if (v == "flat") det.beam_profile = BeamProfile::flat;
        else throw ConfigError(fmt::format("detector.beam_profile: '{}' is not gaussian|flat", v));
    }
    else if (key == "detector.dcr_median_cps") det.dcr_median_cps = to_double(key, v);
    else if (key == "detector.dcr_log_sigma") det.dcr_log_sigma = to_double(key, v);
    else if (key == "detector.hot_pixels") {
        det.hot_pixels.clear();
        if (!v.empty() && v != "none") {
            for (auto item : split(v, ',')) {
                const auto kv = split(item, ':');
                if (kv.size() != 2) throw ConfigError("detector.hot_pixels entries must be pixel:cps");
                det.hot_pixels.push_back({to_int<std::uint32_t>(key, kv[0]), to_double(key, kv[1])});
            }
        }
    }
    else if (key == "detector.ct_p1") det.ct_p1 = to_double(key, v);
    else if (key == "detector.ct_floor") det.ct_floor = to_double(key, v);
    else if (key == "detector.ct_max_distance") det.ct_max_distance = to_int<std::int32_t>(key, v);
    else if (key == "detector.ct_delay_ps") det.ct_delay_ps = to_double(key, v);
    else if (key == "detector.ct_sigma_ps") det.ct_sigma_ps = to_double(key, v);
    else if (key == "detector.ct_chain") det.ct_chain = to_bool(key, v);
    else if (key == "detector.dead_time_ps") det.dead_time_ps = to_double(key, v);
    else if (key == "detector.pixel_offsets") s.offsets_spec = std::string(v);
    else if (key == "detector.tdc_widths") s.tdc_widths_spec = std::string(v);

    else if (key == "analysis.pair") {
        const auto parts = split(v, ',');
        if (parts.size() != 2) throw ConfigError("analysis.pair needs two pixel indices");
        ana.pair = {to_int<std::uint32_t>(key, parts[0]), to_int<std::uint32_t>(key, parts[1])};
    }
    else if (key == "analysis.window_ps") ana.window_ps = to_double(key, v);
    else if (key == "analysis.bin_width_ps") ana.bin_width_ps = to_double(key, v);
    else if (key == "analysis.expected_delay_ps") ana.expected_delay_ps = to_double(key, v);
    else if (key == "analysis.fit_half_range_ps") ana.fit_half_range_ps = to_double(key, v);
    else if (key == "analysis.dcr_threshold_cps") ana.dcr_threshold_cps = to_double(key, v);
    else if (key == "analysis.ct_span") ana.ct_span = to_int<std::int32_t>(key, v);
    else if (key == "analysis.mask_top") ana.mask_top = to_int<std::uint32_t>(key, v);
    else if (key == "analysis.readout_budget_cps") ana.readout_budget_cps = to_double(key, v);
    else if (key == "analysis.timeline_slice_s") ana.timeline_slice_s = to_double(key, v);
    else throw ConfigError(fmt::format("unknown scenario key '{}'", key));
}

Scenario parse_scenario(std::string_view text)
{
    Scenario s;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        auto line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (!line.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(fmt::format("line {}: expected key = value", line_no));
            try {
                set_scenario_value(s, trim(line.substr(0, eq)), line.substr(eq + 1));
            } catch (const ConfigError& e) {
                throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
            }
        }
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot read scenario file {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

std::string to_text(const Scenario& s)
{
    const auto& src = s.source;
    const auto& det = s.detector;
    const auto& acq = s.acquisition;
    const auto& ana = s.analysis;
    std::string hot;
    for (const auto& h : det.hot_pixels) {
        if (!hot.empty()) hot += ",";
        hot += fmt::format("{}:{}", h.pixel, h.cps);
    }
    if (hot.empty()) hot = "none";

    std::string out;
    auto line = [&out](std::string_view k, const std::string& v) { out += fmt::format("{} = {}\n", k, v); };
    line("name", s.name);
    line("seed", std::to_string(s.seed));
    line("workers", std::to_string(s.workers));
    line("acquisition.cycle_count", std::to_string(acq.cycle_count));
    line("acquisition.cycle_period_ns", std::to_string(acq.cycle_period_ns));
    line("acquisition.block_len", std::to_string(acq.block_len));
    line("acquisition.pixels_per_tdc", std::to_string(acq.pixels_per_tdc));
    line("source.mode", src.mode == SourceMode::thermal ? "thermal" : "coherent");
    line("source.rate_beam1_cps", fmt_double(src.mean_rate_beam1));
    line("source.rate_beam2_cps", fmt_double(src.mean_rate_beam2));
    line("source.coherence_time_ps", fmt_double(src.coherence_time_ps));
    line("source.polarized", src.polarized ? "true" : "false");
    line("source.path_delay_beam2_ps", fmt_double(src.path_delay_beam2_ps));
    line("detector.pixel_count", std::to_string(det.pixel_count));
    line("detector.jitter_sigma_ps", fmt_double(det.jitter_sigma_ps));
    line("detector.pde", fmt_double(det.pde));
    line("detector.beam_centers", fmt::format("{},{}", det.beam_centers[0], det.beam_centers[1]));
    line("detector.beam_sigma_px", fmt_double(det.beam_sigma_px));
    line("detector.beam_profile", det.beam_profile == BeamProfile::flat ? "flat" : "gaussian");
    line("detector.dcr_median_cps", fmt_double(det.dcr_median_cps));
    line("detector.dcr_log_sigma", fmt_double(det.dcr_log_sigma));
    line("detector.hot_pixels", hot);
    line("detector.ct_p1", fmt_double(det.ct_p1));
    line("detector.ct_floor", fmt_double(det.ct_floor));
    line("detector.ct_max_distance", std::to_string(det.ct_max_distance));
    line("detector.ct_delay_ps", fmt_double(det.ct_delay_ps));
    line("detector.ct_sigma_ps", fmt_double(det.ct_sigma_ps));
    line("detector.ct_chain", det.ct_chain ? "true" : "false");
    line("detector.dead_time_ps", fmt_double(det.dead_time_ps));
    line("detector.pixel_offsets", s.offsets_spec);
    line("detector.tdc_widths", s.tdc_widths_spec);
    line("analysis.pair", fmt::format("{},{}", ana.pair[0], ana.pair[1]));
    line("analysis.window_ps", fmt_double(ana.window_ps));
    line("analysis.bin_width_ps", fmt_double(ana.bin_width_ps));
    line("analysis.expected_delay_ps", fmt_double(ana.expected_delay_ps));
    line("analysis.fit_half_range_ps", fmt_double(ana.fit_half_range_ps));
    line("analysis.dcr_threshold_cps", fmt_double(ana.dcr_threshold_cps));
    line("analysis.ct_span", std::to_string(ana.ct_span));
    line("analysis.mask_top", std::to_string(ana.mask_top));
    line("analysis.readout_budget_cps", fmt_double(ana.readout_budget_cps));
    line("analysis.timeline_slice_s", fmt_double(ana.timeline_slice_s));
    return out;
}

std::string scenario_hash(const Scenario& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_text(s)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

std::string provenance_line(std::string_view hash)
{
    return fmt::format("# lsp2sim {} scenario={}", kToolVersion, hash);
}

void Scenario::validate() const
{
    source.validate();
    detector.validate();
    if (acquisition.pixels_per_tdc == 0 || acquisition.pixels_per_tdc > kMaxPixelsPerTdc)
        throw ConfigError("acquisition.pixels_per_tdc must be 1..4");
    if (detector.pixel_count % acquisition.pixels_per_tdc != 0)
        throw ConfigError("pixel_count must be a multiple of pixels_per_tdc");
    if (acquisition.block_len == 0) throw ConfigError("acquisition.block_len must be positive");
    try {
        file_header().validate();
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    if (!(analysis.bin_width_ps > 0.0)) throw ConfigError("analysis.bin_width_ps must be positive");
    if (!(analysis.window_ps > analysis.bin_width_ps)) throw ConfigError("analysis.window_ps too small");
    for (auto p : analysis.pair)
        if (p >= detector.pixel_count) throw ConfigError("analysis.pair outside sensor");
}

FileHeader Scenario::file_header() const
{
    FileHeader h;
    h.pixel_count = detector.pixel_count;
    h.pixels_per_tdc = acquisition.pixels_per_tdc;
    h.tdc_count = detector.pixel_count / std::max(1u, acquisition.pixels_per_tdc);
    h.block_len = acquisition.block_len;
    h.cycle_count = acquisition.cycle_count;
    h.cycle_period_ns = acquisition.cycle_period_ns;
    return h;
}

void Scenario::materialize()
{
    source.rng_seed = seed;
    detector.rng_seed = seed;
    const auto n = detector.pixel_count;

    if (tdc_widths_spec == "nominal") {
        detector.tdc_widths = TdcBinWidths{};
    } else if (tdc_widths_spec.rfind("dirichlet:", 0) == 0) {
        const double conc = to_double("detector.tdc_widths", std::string_view(tdc_widths_spec).substr(10));
        if (!(conc > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
        detector.tdc_widths = TdcBinWidths::dirichlet(n, conc, derive_seed(seed, 0, 0xd1));
    } else {
        throw ConfigError(fmt::format("detector.tdc_widths: '{}' is not nominal|dirichlet:<c>", tdc_widths_spec));
    }

    detector.pixel_offsets_ps.clear();
    if (offsets_spec == "zero" || offsets_spec.empty()) {
    } else if (offsets_spec.rfind("gauss:", 0) == 0) {
        const double sd = to_double("detector.pixel_offsets", std::string_view(offsets_spec).substr(6));
        Rng rng(seed, 0, Stream::offsets);
        detector.pixel_offsets_ps.resize(n);
        for (auto& o : detector.pixel_offsets_ps) o = sd * rng.normal();
    } else {
        for (auto item : split(offsets_spec, ','))
            detector.pixel_offsets_ps.push_back(to_double("detector.pixel_offsets", item));
        if (detector.pixel_offsets_ps.size() != n)
            throw ConfigError(fmt::format("detector.pixel_offsets lists {} values for {} pixels",
                                          detector.pixel_offsets_ps.size(), n));
    }
    validate();
}

}  // namespace lsp2
