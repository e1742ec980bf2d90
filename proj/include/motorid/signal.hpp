#ifndef MOTORID_SIGNAL_HPP
#define MOTORID_SIGNAL_HPP

// Waveform representation, the waveform text format, and mains-period
// geometry: zero crossings, period slicing and fixed-length resampling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "motorid/error.hpp"
#include "motorid/text_io.hpp"

namespace motorid {

enum class Channel { current, voltage };

/// Uniformly sampled single-phase current and voltage.
struct Waveform {
    std::vector<double> current;  // A
    std::vector<double> voltage;  // V
    double sample_rate = 10000.0; // Hz
    double mains_freq = 50.0;     // Hz

    std::size_t size() const noexcept { return current.size(); }
    double duration() const noexcept { return static_cast<double>(size()) / sample_rate; }
    double samples_per_period() const noexcept { return sample_rate / mains_freq; }

    std::span<const double> channel(Channel c) const noexcept {
        return c == Channel::current ? std::span<const double>(current) : std::span<const double>(voltage);
    }

    /// Throws ConfigError when an invariant is broken.
    void validate() const {
        if (current.size() != voltage.size())
            throw ConfigError("waveform channels differ in length");
        if (current.size() < 2) throw ConfigError("waveform needs at least 2 samples");
        if (!(mains_freq > 0.0)) throw ConfigError("mains_freq must be positive");
        if (!(sample_rate > 2.0 * 20.0 * mains_freq))
            throw ConfigError("sample_rate must exceed the Nyquist rate of the 20th harmonic");
    }
};

// ---------------------------------------------------------------------------
// Waveform text format
// ---------------------------------------------------------------------------

struct IngestionConfig {
    double default_sample_rate = 10000.0;
    double default_mains_freq = 50.0;
    /// Allowed relative deviation of an explicit time column from 1/sample_rate.
    double timing_tolerance = 1e-3;
};

struct ParsedWaveform {
    Waveform waveform;
    /// Every `# key=value` header line, including sample_rate and mains_freq.
    std::map<std::string, std::string> header;
    bool voltage_missing = false;
    std::vector<std::string> warnings;
};

/// Parses the comma-separated waveform format from a stream. Columns are
/// `i[,u]`, optionally preceded by a `t` column and a column-name line.
inline ParsedWaveform parse_waveform(std::istream& in, const IngestionConfig& cfg = {}) {
    ParsedWaveform out;
    std::vector<double> times;
    int col_t = -1, col_i = 0, col_u = 1;
    std::size_t ncols = 0;
    bool seen_data = false;
    std::string line;
    std::size_t lineno = 0;

    while (std::getline(in, line)) {
        ++lineno;
        auto view = text::trim(line);
        if (view.empty()) continue;
        if (view.front() == '#') {
            if (seen_data) throw ParseError("header line after data", lineno);
            if (auto kv = text::parse_header_line(view)) out.header[kv->first] = kv->second;
            continue;
        }
        auto fields = text::split(view);
        if (!seen_data && ncols == 0 && !text::parse_double(fields[0])) {
            // column-name line
            col_t = col_i = col_u = -1;
            for (std::size_t k = 0; k < fields.size(); ++k) {
                auto name = text::trim(fields[k]);
                if (name == "t") col_t = static_cast<int>(k);
                else if (name == "i") col_i = static_cast<int>(k);
                else if (name == "u") col_u = static_cast<int>(k);
                else throw ParseError("unknown column '" + std::string(name) + "'", lineno);
            }
            if (col_i < 0) throw ParseError("missing current column 'i'", lineno);
            ncols = fields.size();
            continue;
        }
        if (ncols == 0) {
            ncols = fields.size();
            if (ncols > 2) throw ParseError("expected columns i[,u]", lineno);
            if (ncols == 1) col_u = -1;
        }
        if (fields.size() != ncols) throw ParseError("expected " + std::to_string(ncols) + " fields", lineno);
        seen_data = true;
        auto get = [&](int col) {
            auto v = text::parse_double(fields[static_cast<std::size_t>(col)]);
            if (!v || !std::isfinite(*v)) throw ParseError("malformed number", lineno);
            return *v;
        };
        out.waveform.current.push_back(get(col_i));
        if (col_u >= 0) out.waveform.voltage.push_back(get(col_u));
        if (col_t >= 0) times.push_back(get(col_t));
    }

    auto header_number = [&](const char* key, double fallback) {
        auto it = out.header.find(key);
        if (it == out.header.end()) return fallback;
        auto v = text::parse_double(it->second);
        if (!v) throw ParseError(std::string("malformed header value for ") + key, 0);
        return *v;
    };
    out.waveform.mains_freq = header_number("mains_freq", cfg.default_mains_freq);
    double rate = header_number("sample_rate", 0.0);

    if (!times.empty() && times.size() >= 2) {
        double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
        if (!(dt > 0.0)) throw ParseError("time column is not increasing", 0);
        if (rate == 0.0) rate = 1.0 / dt;
        double expected = 1.0 / rate;
        for (std::size_t k = 1; k < times.size(); ++k) {
            double step = times[k] - times[k - 1];
            if (std::abs(step - expected) > cfg.timing_tolerance * expected)
                throw ParseError("non-uniform sample timing", 0);
        }
    }
    out.waveform.sample_rate = rate == 0.0 ? cfg.default_sample_rate : rate;

    if (out.waveform.voltage.empty()) {
        out.waveform.voltage.assign(out.waveform.current.size(), 0.0);
        out.voltage_missing = true;
        out.warnings.push_back("voltage column missing; using zeros");
    }
    out.waveform.validate();
    return out;
}

inline ParsedWaveform parse_waveform(const std::string& path, const IngestionConfig& cfg = {}) {
    auto in = text::open_for_read(path);
    return parse_waveform(in, cfg);
}

/// Writes the waveform with sample_rate/mains_freq headers followed by any
/// extra header entries, in the order given.
inline void write_waveform(std::ostream& out, const Waveform& w,
                           const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    out << "# sample_rate=" << text::format_double(w.sample_rate) << '\n';
    out << "# mains_freq=" << text::format_double(w.mains_freq) << '\n';
    for (const auto& [k, v] : extra) out << "# " << k << '=' << v << '\n';
    out << "i,u\n";
    for (std::size_t k = 0; k < w.size(); ++k)
        out << text::format_double(w.current[k]) << ',' << text::format_double(w.voltage[k]) << '\n';
}

inline void write_waveform(const std::string& path, const Waveform& w,
                           const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    auto out = text::open_for_write(path);
    write_waveform(out, w, extra);
    if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Zero crossings
// ---------------------------------------------------------------------------

struct ZeroCrossing {
    double time; // s, from the first sample
    bool rising;
};

/// All zero crossings of `x`, located by linear interpolation between the
/// two samples that straddle zero. With `hysteresis` h > 0 the sign state
/// only changes once the signal leaves the band [-h, h]; the reported time is
/// the last raw crossing before that happened, so noise chatter around zero
/// yields one crossing. Exactly symmetric under negation of `x`.
inline std::vector<ZeroCrossing> zero_crossings(std::span<const double> x, double sample_rate,
                                                double hysteresis = 0.0, std::size_t first = 0) {
    std::vector<ZeroCrossing> out;
    int state = 0; // -1 below band, +1 above band, 0 not yet known
    double last_rise = -1.0, last_fall = -1.0;
    // a record that starts exactly at zero starts on a crossing
    const double start_zero = first < x.size() && x[first] == 0.0 ? static_cast<double>(first) / sample_rate : -1.0;
    for (std::size_t k = first; k < x.size(); ++k) {
        if (k > first) {
            double a = x[k - 1], b = x[k];
            if ((a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0)) {
                double t = (static_cast<double>(k - 1) + a / (a - b)) / sample_rate;
                (a < 0.0 ? last_rise : last_fall) = t;
            }
        }
        if (x[k] > hysteresis && state != 1) {
            if (state == -1 && last_rise >= 0.0) out.push_back({last_rise, true});
            if (state == 0 && start_zero >= 0.0) out.push_back({last_rise >= 0.0 ? last_rise : start_zero, true});
            state = 1;
            last_rise = last_fall = -1.0;
        } else if (x[k] < -hysteresis && state != -1) {
            if (state == 1 && last_fall >= 0.0) out.push_back({last_fall, false});
            if (state == 0 && start_zero >= 0.0) out.push_back({last_fall >= 0.0 ? last_fall : start_zero, false});
            state = -1;
            last_rise = last_fall = -1.0;
        }
    }
    return out;
}

/// Times of negative-to-positive crossings of one channel. Throws when fewer
/// than two exist.
inline std::vector<double> positive_zero_crossings(const Waveform& w, Channel channel = Channel::current,
                                                   double hysteresis = 0.0) {
    std::vector<double> out;
    for (const auto& c : zero_crossings(w.channel(channel), w.sample_rate, hysteresis))
        if (c.rising) out.push_back(c.time);
    if (out.size() < 2) throw Error("no period structure: fewer than 2 positive zero crossings");
    return out;
}

// ---------------------------------------------------------------------------
// Periods
// ---------------------------------------------------------------------------

struct PeriodSlice {
    std::size_t start_index; // first sample at or after start_time
    std::size_t end_index;   // exclusive; equals the next slice's start_index
    double start_time;       // s
    double end_time;         // s
    bool irregular = false;  // duration outside +-20 % of the mains period

    double duration() const noexcept { return end_time - start_time; }
};

inline std::size_t sample_at_or_after(double t, double sample_rate) {
    return static_cast<std::size_t>(std::max(0.0, std::ceil(t * sample_rate - 1e-9)));
}

inline std::vector<PeriodSlice> slice_periods(const Waveform& w, std::span<const double> crossings,
                                              double tolerance = 0.2) {
    if (crossings.size() < 2) throw Error("slice_periods needs at least 2 crossings");
    const double nominal = 1.0 / w.mains_freq;
    std::vector<PeriodSlice> out;
    out.reserve(crossings.size() - 1);
    for (std::size_t k = 0; k + 1 < crossings.size(); ++k) {
        PeriodSlice s{sample_at_or_after(crossings[k], w.sample_rate),
                      sample_at_or_after(crossings[k + 1], w.sample_rate), crossings[k], crossings[k + 1]};
        s.end_index = std::min(s.end_index, w.size());
        s.irregular = std::abs(s.duration() - nominal) > tolerance * nominal;
        out.push_back(s);
    }
    return out;
}

/// Linear interpolation of a sampled signal at time t (clamped to the record).
inline double sample_at(std::span<const double> x, double sample_rate, double t) {
    double pos = t * sample_rate;
    if (pos <= 0.0) return x.front();
    auto last = static_cast<double>(x.size() - 1);
    if (pos >= last) return x.back();
    auto k = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(k);
    return x[k] + frac * (x[k + 1] - x[k]);
}

/// `n` values at uniform phase positions start + j*duration/n, j = 0..n-1.
inline std::vector<double> resample_span(std::span<const double> x, double sample_rate, double start_time,
                                         double end_time, std::size_t n) {
    if (n < 2) throw ConfigError("resample length must be at least 2");
    std::vector<double> out(n);
    const double step = (end_time - start_time) / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j)
        out[j] = sample_at(x, sample_rate, start_time + static_cast<double>(j) * step);
    return out;
}

inline std::vector<double> resample_slice(const Waveform& w, const PeriodSlice& s, std::size_t n,
                                          Channel channel = Channel::current) {
    return resample_span(w.channel(channel), w.sample_rate, s.start_time, s.end_time, n);
}

} // namespace motorid

#endif
