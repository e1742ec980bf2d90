#ifndef MOTORID_TRANSIENT_HPP
#define MOTORID_TRANSIENT_HPP

// Turn-on detection and the preprocessing chain that turns a raw record into
// a canonical five-period event: steady-state normalization, omission of the
// first period, polarity canonicalization and instantaneous power.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "motorid/error.hpp"
#include "motorid/signal.hpp"
#include "motorid/text_io.hpp"

namespace motorid {

enum class MechType { pump, compressor, fan, other };

inline const char* to_string(MechType m) {
    switch (m) {
    case MechType::pump: return "pump";
    case MechType::compressor: return "compressor";
    case MechType::fan: return "fan";
    case MechType::other: return "other";
    }
    return "other";
}

inline MechType parse_mech_type(std::string_view s) {
    s = text::trim(s);
    if (s == "pump") return MechType::pump;
    if (s == "compressor") return MechType::compressor;
    if (s == "fan") return MechType::fan;
    if (s == "other") return MechType::other;
    throw ParseError("unknown mech_type '" + std::string(s) + "'", 0);
}

struct DetectionConfig {
    double on_threshold = 0.1;         // fraction of the steady amplitude
    std::size_t quiet_samples = 2000;  // quiet run required before a turn-on
    std::size_t steady_tail_periods = 25;
    double min_gap_periods = 7.0;      // closer events overlap the 2..6 window
    double crossing_hysteresis = 0.05; // in normalized current units
    std::size_t points_per_period = 200;

    void validate() const {
        if (!(on_threshold > 0.0 && on_threshold < 1.0)) throw ConfigError("detect.on_threshold must be in (0,1)");
        if (quiet_samples < 1) throw ConfigError("detect.quiet_samples must be >= 1");
        if (steady_tail_periods < 5) throw ConfigError("detect.steady_tail_periods must be >= 5");
        if (!(crossing_hysteresis >= 0.0 && crossing_hysteresis < 1.0))
            throw ConfigError("detect.crossing_hysteresis must be in [0,1)");
        if (points_per_period < 40) throw ConfigError("detect.points_per_period must be >= 40");
    }
};

/// A preprocessed turn-on: mains periods 2..6 after switch-on, resampled.
struct TurnOnEvent {
    static constexpr std::size_t kPeriods = 5;

    std::array<std::vector<double>, kPeriods> periods;       // normalized current
    std::array<std::vector<double>, kPeriods> power_periods; // i*u, normalized current times volt
    std::array<double, kPeriods> period_start{};    // s, relative to event_time
    std::array<double, kPeriods> period_duration{}; // s
    std::array<double, kPeriods> mid_fraction{};    // mid-period zero crossing, fraction of the period
    double event_time = 0.0;
    std::string motor_id;
    MechType mech_type = MechType::other;
    bool polarity_flipped = false;
    double scale_factor = 1.0;

    std::size_t points() const noexcept { return periods[0].size(); }

    /// Resampled index where the second half-period of period p begins.
    std::size_t mid_index(std::size_t p) const noexcept {
        auto n = static_cast<double>(points());
        auto m = static_cast<std::size_t>(std::lround(mid_fraction[p] * n));
        return std::clamp<std::size_t>(m, 1, points() - 1);
    }

    /// Time of resampled point j of period p, relative to event_time.
    double time_of(std::size_t p, std::size_t j) const noexcept {
        return period_start[p] + period_duration[p] * static_cast<double>(j) / static_cast<double>(points());
    }
};

namespace detail {

inline std::size_t period_samples(const Waveform& w) {
    return std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(w.samples_per_period())));
}

/// max|x| over consecutive windows of `len` samples in [begin, end).
inline std::vector<double> window_peaks(std::span<const double> x, std::size_t begin, std::size_t end,
                                        std::size_t len) {
    std::vector<double> out;
    for (std::size_t s = begin; s + len <= end; s += len) {
        double m = 0.0;
        for (std::size_t k = s; k < s + len; ++k) m = std::max(m, std::abs(x[k]));
        out.push_back(m);
    }
    return out;
}

} // namespace detail

/// Start times of turn-on events. The reference amplitude is the median
/// per-period peak over the record's active periods (those above 5 % of the
/// largest period peak).
inline std::vector<double> detect_turn_on(const Waveform& w, const DetectionConfig& cfg = {}) {
    cfg.validate();
    const std::size_t L = detail::period_samples(w);
    if (w.size() <= cfg.quiet_samples + 6 * L)
        throw Error("record too short for turn-on detection");

    auto peaks = detail::window_peaks(w.current, 0, w.size(), L);
    double top = peaks.empty() ? 0.0 : *std::max_element(peaks.begin(), peaks.end());
    if (!(top > 0.0)) return {};
    std::vector<double> active;
    for (double p : peaks)
        if (p >= 0.05 * top) active.push_back(p);
    std::nth_element(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(active.size() / 2), active.end());
    const double threshold = cfg.on_threshold * active[active.size() / 2];

    std::vector<double> events;
    std::size_t quiet = 0;
    const double min_gap = cfg.min_gap_periods / w.mains_freq;
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (std::abs(w.current[k]) < threshold) {
            ++quiet;
            continue;
        }
        double t = static_cast<double>(k) / w.sample_rate;
        if (quiet >= cfg.quiet_samples && (events.empty() || t - events.back() >= min_gap))
            events.push_back(t);
        quiet = 0;
    }
    return events;
}

/// 1 / (mean per-period peak of |i|) over the last steady_tail_periods
/// complete periods before `end_time` (record end when omitted). Trailing
/// periods below 10 % of the largest one (device already off) are skipped.
inline double steady_scale_factor(const Waveform& w, double event_time, const DetectionConfig& cfg = {},
                                  std::optional<double> end_time = std::nullopt) {
    cfg.validate();
    const std::size_t L = detail::period_samples(w);
    std::size_t end = w.size();
    if (end_time) end = std::min(end, sample_at_or_after(*end_time, w.sample_rate));
    const std::size_t transient_end =
        sample_at_or_after(event_time, w.sample_rate) + static_cast<std::size_t>(std::ceil(cfg.min_gap_periods)) * L;

    // windows aligned backwards from `end`
    std::vector<double> peaks;
    for (std::size_t e = end; e >= transient_end + L; e -= L) {
        double m = 0.0;
        for (std::size_t k = e - L; k < e; ++k) m = std::max(m, std::abs(w.current[k]));
        peaks.push_back(m);
    }
    if (!peaks.empty()) {
        double top = *std::max_element(peaks.begin(), peaks.end());
        auto first_on = std::find_if(peaks.begin(), peaks.end(), [&](double p) { return p >= 0.1 * top; });
        peaks.erase(peaks.begin(), first_on);
    }
    if (peaks.size() < cfg.steady_tail_periods) throw Error("steady state too short");
    double sum = 0.0;
    for (std::size_t k = 0; k < cfg.steady_tail_periods; ++k) sum += peaks[k];
    double mean = sum / static_cast<double>(cfg.steady_tail_periods);
    if (!(mean > 0.0)) throw Error("steady state too short: zero steady amplitude");
    return 1.0 / mean;
}

/// Preprocesses one turn-on. Crossings are taken on the normalized current
/// with hysteresis; crossing c0 is the first one after event_time, period 1 is
/// [c0, c2) and is discarded, periods 2..6 are [c2, c4) ... [c10, c12). If
/// the retained window starts with a negative half-period, current and voltage
/// are both negated so that the first retained peak is positive and i*u is
/// unchanged.
inline TurnOnEvent preprocess_event(const Waveform& w, double event_time, const DetectionConfig& cfg = {},
                                    std::optional<double> end_time = std::nullopt) {
    if (sample_at_or_after(event_time, w.sample_rate) + 6 * detail::period_samples(w) > w.size())
        throw Error("event truncated: fewer than 6 periods after turn-on");
    const double scale = steady_scale_factor(w, event_time, cfg, end_time);
    const std::size_t L = detail::period_samples(w);
    const std::size_t first = sample_at_or_after(event_time, w.sample_rate);
    const std::size_t last = std::min(w.size(), first + 10 * L);
    if (first >= last) throw Error("event truncated");

    // normalized copies covering the event window (from sample 0 so that
    // sample indices and times agree)
    std::vector<double> cur(w.current.begin(), w.current.begin() + static_cast<std::ptrdiff_t>(last));
    std::vector<double> volt(w.voltage.begin(), w.voltage.begin() + static_cast<std::ptrdiff_t>(last));
    for (double& v : cur) v *= scale;

    auto crossings = zero_crossings(cur, w.sample_rate, cfg.crossing_hysteresis, first);
    std::erase_if(crossings, [&](const ZeroCrossing& c) { return c.time < event_time; });
    constexpr std::size_t needed = 2 * (TurnOnEvent::kPeriods + 1) + 1;
    if (crossings.size() < needed) throw Error("event truncated: fewer than 6 periods after turn-on");

    TurnOnEvent ev;
    ev.event_time = event_time;
    ev.scale_factor = scale;
    ev.polarity_flipped = !crossings[2].rising;
    if (ev.polarity_flipped) {
        for (double& v : cur) v = -v;
        for (double& v : volt) v = -v;
    }
    const std::size_t n = cfg.points_per_period;
    for (std::size_t p = 0; p < TurnOnEvent::kPeriods; ++p) {
        double t0 = crossings[2 * p + 2].time;
        double tm = crossings[2 * p + 3].time;
        double t1 = crossings[2 * p + 4].time;
        ev.periods[p] = resample_span(cur, w.sample_rate, t0, t1, n);
        auto u = resample_span(volt, w.sample_rate, t0, t1, n);
        ev.power_periods[p].resize(n);
        for (std::size_t j = 0; j < n; ++j) ev.power_periods[p][j] = ev.periods[p][j] * u[j];
        ev.period_start[p] = t0 - event_time;
        ev.period_duration[p] = t1 - t0;
        ev.mid_fraction[p] = (tm - t0) / (t1 - t0);
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Event store: one waveform file per event with label headers.
// ---------------------------------------------------------------------------

struct EventRecord {
    Waveform waveform;
    double event_time = 0.0; // s from the first sample of `waveform`
    std::string motor_id;
    MechType mech_type = MechType::other;
    bool polarity_flipped = false;
    double scale_factor = 1.0;
};

inline void write_event_file(const std::string& path, const EventRecord& r) {
    write_waveform(path, r.waveform,
                   {{"event_time", text::format_double(r.event_time)},
                    {"motor_id", r.motor_id},
                    {"mech_type", to_string(r.mech_type)},
                    {"polarity_flipped", r.polarity_flipped ? "1" : "0"},
                    {"scale_factor", text::format_double(r.scale_factor)}});
}

inline EventRecord read_event_file(const std::string& path, const IngestionConfig& ing = {}) {
    auto parsed = parse_waveform(path, ing);
    EventRecord r;
    r.waveform = std::move(parsed.waveform);
    auto need = [&](const char* key) -> const std::string& {
        auto it = parsed.header.find(key);
        if (it == parsed.header.end()) throw ParseError(std::string("event file lacks header ") + key, 0);
        return it->second;
    };
    auto num = [&](const char* key) {
        auto v = text::parse_double(need(key));
        if (!v) throw ParseError(std::string("malformed header ") + key, 0);
        return *v;
    };
    r.event_time = num("event_time");
    r.motor_id = need("motor_id");
    r.mech_type = parse_mech_type(need("mech_type"));
    r.polarity_flipped = need("polarity_flipped") == "1";
    r.scale_factor = num("scale_factor");
    return r;
}

/// Preprocesses a stored event, attaching its labels.
inline TurnOnEvent preprocess_record(const EventRecord& r, const DetectionConfig& cfg = {}) {
    auto ev = preprocess_event(r.waveform, r.event_time, cfg);
    ev.motor_id = r.motor_id;
    ev.mech_type = r.mech_type;
    return ev;
}

} // namespace motorid

#endif
