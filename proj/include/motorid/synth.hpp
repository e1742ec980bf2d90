#ifndef MOTORID_SYNTH_HPP
#define MOTORID_SYNTH_HPP

// Synthetic fixed-speed motor turn-on generator (stand-in corpus with ground
// truth) and brute-force oracles for the DFT, the energy integral and the
// exponential fit.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "motorid/error.hpp"
#include "motorid/features.hpp"
#include "motorid/signal.hpp"
#include "motorid/text_io.hpp"
#include "motorid/transient.hpp"

namespace motorid {

inline constexpr std::size_t kProfileHarmonics = 19; // harmonics 2..20

struct MotorArchetype {
    std::string motor_id;
    MechType mech_type = MechType::other;
    double steady_amplitude = 1.0; // A, fundamental
    double envelope_scale = 0.0;   // inrush excess at switch-on, multiple of steady
    double decay = 50.0;           // envelope lambda, 1/s
    std::vector<double> harmonic_magnitudes = std::vector<double>(kProfileHarmonics, 0.0); // relative to fundamental
    std::vector<double> harmonic_phases = std::vector<double>(kProfileHarmonics, 0.0);     // rad
    double noise_level = 0.0;      // std of white noise, fraction of steady_amplitude
    double mains_freq = 50.0;
    double power_factor_angle = 0.0; // current lag behind voltage, rad
    double dc_fraction = 0.5;      // decaying offset, fraction of the switch-on excursion
    double dc_decay_ratio = 1.5;   // offset decays at dc_decay_ratio * decay
    double event_variability = 0.0; // per-event relative std of A, E, lambda and each h_n
    std::size_t events = 10;       // default number of events in a corpus

    void validate() const {
        if (!(steady_amplitude > 0.0)) throw ConfigError(motor_id + ": steady_amplitude must be positive");
        if (!(decay > 0.0)) throw ConfigError(motor_id + ": decay must be positive");
        if (harmonic_magnitudes.size() != kProfileHarmonics || harmonic_phases.size() != kProfileHarmonics)
            throw ConfigError(motor_id + ": harmonic profile needs 19 entries (harmonics 2..20)");
        for (double h : harmonic_magnitudes)
            if (h < 0.0) throw ConfigError(motor_id + ": harmonic magnitudes must be non-negative");
        if (noise_level < 0.0 || envelope_scale < 0.0 || dc_fraction < 0.0 || event_variability < 0.0)
            throw ConfigError(motor_id + ": negative noise, envelope, dc fraction or event variability");
    }
};

struct GroundTruth {
    double switch_time = 0.0;  // s
    double switch_phase = 0.0; // voltage phase at switch-on, rad
    std::string motor_id;
};

struct GeneratorOptions {
    double duration = 1.0;          // s
    double sample_rate = 10000.0;   // Hz
    double nominal_switch_time = 0.25; // s; moved forward to reach the requested phase
    double voltage_amplitude = 325.0;
    double grid_phase = 0.0;
};

struct GeneratedEvent {
    Waveform waveform;
    GroundTruth truth;
};

/// Deterministic per-item seed derivation (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Current after switch-on at tau = t - t0:
///   A (1 + E e^{-lambda tau}) sum_n h_n sin(n (w tau + psi) + phi_n)
///   - dc A (1 + E) sin(psi) e^{-r lambda tau} + noise,
/// with h_1 = 1, phi_1 = 0 and psi the current phase at switch-on (voltage
/// phase minus the power-factor angle). Voltage is V sin(w t + grid_phase).
inline GeneratedEvent generate_event(const MotorArchetype& a, double switch_phase, const GeneratorOptions& opt,
                                     std::uint64_t seed) {
    a.validate();
    if (opt.duration < 1.0) throw ConfigError("generator duration must be at least 1 s");
    if (opt.sample_rate < 4000.0) throw ConfigError("generator sample rate must be at least 4 kHz");
    const double two_pi = 2.0 * std::numbers::pi;
    const double w = two_pi * a.mains_freq;

    // first time at or after the nominal switch time where the voltage phase equals switch_phase
    double phase_now = std::fmod(w * opt.nominal_switch_time + opt.grid_phase, two_pi);
    double advance = std::fmod(switch_phase - phase_now + 2.0 * two_pi, two_pi);
    const double t0 = opt.nominal_switch_time + advance / w;
    const double psi = switch_phase - a.power_factor_angle;

    GeneratedEvent out;
    out.truth = {t0, std::fmod(switch_phase + two_pi, two_pi), a.motor_id};
    auto n = static_cast<std::size_t>(std::llround(opt.duration * opt.sample_rate));
    auto& wf = out.waveform;
    wf.sample_rate = opt.sample_rate;
    wf.mains_freq = a.mains_freq;
    wf.current.assign(n, 0.0);
    wf.voltage.resize(n);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sigma = a.noise_level * a.steady_amplitude;
    const double dc0 = -a.dc_fraction * a.steady_amplitude * (1.0 + a.envelope_scale) * std::sin(psi);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / opt.sample_rate;
        wf.voltage[k] = opt.voltage_amplitude * std::sin(w * t + opt.grid_phase);
        double v = 0.0;
        if (t >= t0) {
            const double tau = t - t0;
            double shape = std::sin(w * tau + psi);
            for (std::size_t h = 0; h < kProfileHarmonics; ++h) {
                if (a.harmonic_magnitudes[h] == 0.0) continue;
                double order = static_cast<double>(h + 2);
                shape += a.harmonic_magnitudes[h] * std::sin(order * (w * tau + psi) + a.harmonic_phases[h]);
            }
            v = a.steady_amplitude * (1.0 + a.envelope_scale * std::exp(-a.decay * tau)) * shape;
            v += dc0 * std::exp(-a.dc_decay_ratio * a.decay * tau);
        }
        if (sigma > 0.0) v += sigma * gauss(rng);
        wf.current[k] = v;
    }
    return out;
}

/// One corpus entry: the stored event record plus generator ground truth.
struct CorpusEvent {
    EventRecord record;
    GroundTruth truth;
    std::size_t motor_index = 0;
    std::size_t event_index = 0;
};

/// Copy of `a` with A, E, lambda and the harmonic magnitudes scaled by
/// independent factors max(0, 1 + v N(0,1)), v = event_variability.
inline MotorArchetype vary_archetype(const MotorArchetype& a, std::uint64_t seed) {
    MotorArchetype out = a;
    if (a.event_variability <= 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto factor = [&] { return std::max(0.0, 1.0 + a.event_variability * gauss(rng)); };
    out.steady_amplitude *= std::max(0.05, factor());
    out.envelope_scale *= factor();
    out.decay *= std::max(0.05, factor());
    for (double& h : out.harmonic_magnitudes) h *= factor();
    return out;
}

/// Generates, detects and labels one event; the record's event_time is the
/// detected turn-on (ground truth when detection finds nothing usable).
inline CorpusEvent make_corpus_event(const MotorArchetype& a, std::size_t motor_index, std::size_t event_index,
                                     std::uint64_t seed, const GeneratorOptions& opt = {},
                                     const DetectionConfig& det = {}) {
    std::uint64_t s = derive_seed(seed, motor_index, event_index);
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    double switch_phase = phase(rng);
    auto gen = generate_event(vary_archetype(a, derive_seed(s, 2)), switch_phase, opt, derive_seed(s, 1));
    CorpusEvent ev;
    ev.truth = gen.truth;
    ev.motor_index = motor_index;
    ev.event_index = event_index;
    auto detected = detect_turn_on(gen.waveform, det);
    ev.record.event_time = detected.size() == 1 ? detected.front() : gen.truth.switch_time;
    ev.record.motor_id = a.motor_id;
    ev.record.mech_type = a.mech_type;
    auto pre = preprocess_event(gen.waveform, ev.record.event_time, det);
    ev.record.polarity_flipped = pre.polarity_flipped;
    ev.record.scale_factor = pre.scale_factor;
    ev.record.waveform = std::move(gen.waveform);
    return ev;
}

/// All events of a roster; `events_per_motor` = 0 uses each archetype's count.
inline std::vector<CorpusEvent> generate_corpus(const std::vector<MotorArchetype>& roster,
                                                std::size_t events_per_motor, std::uint64_t seed,
                                                const GeneratorOptions& opt = {}, const DetectionConfig& det = {}) {
    if (roster.empty()) throw ConfigError("roster is empty");
    std::vector<CorpusEvent> out;
    for (std::size_t m = 0; m < roster.size(); ++m) {
        std::size_t count = events_per_motor ? events_per_motor : roster[m].events;
        for (std::size_t e = 0; e < count; ++e) out.push_back(make_corpus_event(roster[m], m, e, seed, opt, det));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rosters
// ---------------------------------------------------------------------------

/// Motor types and event counts of the 18-motor study roster.
struct RosterEntry {
    MechType mech;
    std::size_t events;
};

inline const std::vector<RosterEntry>& study_roster() {
    static const std::vector<RosterEntry> r = {
        {MechType::compressor, 14}, {MechType::other, 12}, {MechType::other, 21}, {MechType::pump, 12},
        {MechType::compressor, 8},  {MechType::fan, 9},     {MechType::pump, 27}, {MechType::pump, 8},
        {MechType::other, 10},      {MechType::fan, 28},    {MechType::pump, 15}, {MechType::compressor, 38},
        {MechType::fan, 39},        {MechType::pump, 47},   {MechType::compressor, 46}, {MechType::fan, 14},
        {MechType::fan, 18},        {MechType::pump, 10},
    };
    return r;
}

inline double profile_distance(const MotorArchetype& a, const MotorArchetype& b) {
    double s = 0.0;
    for (std::size_t h = 0; h < kProfileHarmonics; ++h) {
        double d = a.harmonic_magnitudes[h] - b.harmonic_magnitudes[h];
        s += d * d;
    }
    return std::sqrt(s);
}

struct RosterOptions {
    double noise_level = 0.02;
    double min_profile_distance = 0.05;
    double harmonic_spread = 0.02;   // per-motor deviation of each harmonic magnitude
    bool type_keyed = false;         // harmonic content set by mech type rather than by motor
    double event_variability = 0.3;  // event-to-event spread of one motor's parameters
};

namespace detail {

/// Shared motor-like baseline: odd harmonics dominate.
inline double baseline_harmonic(std::size_t order) {
    if (order % 2 == 1) return 0.12 / static_cast<double>(order - 1);
    return 0.01;
}

inline void randomize_motor(MotorArchetype& a, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    a.steady_amplitude = 1.0 + 19.0 * u(rng);
    a.envelope_scale = 3.0 + 3.0 * u(rng);
    a.decay = 50.0 + 50.0 * u(rng);
    a.power_factor_angle = 0.3 + 0.6 * u(rng);
}

} // namespace detail

/// Random archetypes for the given types and event counts, with harmonic
/// profiles drawn around a common baseline and rejected until every pair is
/// at least `min_profile_distance` apart (Euclidean over harmonics 2..20).
/// With `type_keyed`, the profile and phases depend only on the mech type and
/// motors of one type differ only in the remaining parameters.
inline std::vector<MotorArchetype> make_roster(const std::vector<RosterEntry>& entries, std::uint64_t seed,
                                               const RosterOptions& opt = {}) {
    std::mt19937_64 rng(derive_seed(seed, 0xA5));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;

    auto draw_profile = [&](MotorArchetype& a, double spread) {
        for (std::size_t h = 0; h < kProfileHarmonics; ++h) {
            double base = detail::baseline_harmonic(h + 2);
            a.harmonic_magnitudes[h] = std::max(0.0, base + spread * (2.0 * u(rng) - 1.0));
            a.harmonic_phases[h] = two_pi * u(rng);
        }
    };

    std::vector<MotorArchetype> keyed(4);
    if (opt.type_keyed) {
        for (int attempt = 0;; ++attempt) {
            for (auto& k : keyed) draw_profile(k, 3.0 * opt.harmonic_spread);
            bool ok = true;
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = i + 1; j < 4; ++j) ok = ok && profile_distance(keyed[i], keyed[j]) >= 0.1;
            if (ok || attempt > 10000) break;
        }
    }

    std::vector<MotorArchetype> roster;
    for (std::size_t m = 0; m < entries.size(); ++m) {
        MotorArchetype a;
        char id[16];
        std::snprintf(id, sizeof id, "M%02zu", m + 1);
        a.motor_id = id;
        a.mech_type = entries[m].mech;
        a.events = entries[m].events;
        a.noise_level = opt.noise_level;
        a.event_variability = opt.event_variability;
        detail::randomize_motor(a, rng);
        if (opt.type_keyed) {
            const auto& k = keyed[static_cast<std::size_t>(a.mech_type)];
            a.harmonic_magnitudes = k.harmonic_magnitudes;
            a.harmonic_phases = k.harmonic_phases;
        } else {
            for (int attempt = 0; attempt < 100000; ++attempt) {
                draw_profile(a, opt.harmonic_spread);
                bool ok = std::all_of(roster.begin(), roster.end(), [&](const MotorArchetype& o) {
                    return profile_distance(a, o) >= opt.min_profile_distance;
                });
                if (ok) break;
                if (attempt == 99999) throw ConfigError("cannot satisfy min_profile_distance");
            }
        }
        roster.push_back(std::move(a));
    }
    return roster;
}

inline std::vector<MotorArchetype> default_roster(std::uint64_t seed, const RosterOptions& opt = {}) {
    return make_roster(study_roster(), seed, opt);
}

// ---------------------------------------------------------------------------
// Roster file: blocks of key=value lines, each block opened by `[motor]`.
// ---------------------------------------------------------------------------

inline void write_roster(std::ostream& out, const std::vector<MotorArchetype>& roster) {
    auto join = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + text::format_double(v[k]);
        return s;
    };
    for (const auto& a : roster) {
        out << "[motor]\n";
        out << "motor_id=" << a.motor_id << '\n';
        out << "mech_type=" << to_string(a.mech_type) << '\n';
        out << "events=" << a.events << '\n';
        out << "steady_amplitude=" << text::format_double(a.steady_amplitude) << '\n';
        out << "envelope_scale=" << text::format_double(a.envelope_scale) << '\n';
        out << "decay=" << text::format_double(a.decay) << '\n';
        out << "harmonic_magnitudes=" << join(a.harmonic_magnitudes) << '\n';
        out << "harmonic_phases=" << join(a.harmonic_phases) << '\n';
        out << "noise_level=" << text::format_double(a.noise_level) << '\n';
        out << "mains_freq=" << text::format_double(a.mains_freq) << '\n';
        out << "power_factor_angle=" << text::format_double(a.power_factor_angle) << '\n';
        out << "dc_fraction=" << text::format_double(a.dc_fraction) << '\n';
        out << "dc_decay_ratio=" << text::format_double(a.dc_decay_ratio) << '\n';
        out << "event_variability=" << text::format_double(a.event_variability) << "\n\n";
    }
}

inline std::vector<MotorArchetype> read_roster(std::istream& in) {
    std::vector<MotorArchetype> roster;
    std::string line;
    std::size_t lineno = 0;
    auto numbers = [&](std::string_view v) {
        std::vector<double> out;
        for (auto tok : text::split(text::trim(v), ' ')) {
            if (tok.empty()) continue;
            auto d = text::parse_double(tok);
            if (!d) throw ParseError("malformed number list", lineno);
            out.push_back(*d);
        }
        return out;
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto v = text::trim(line);
        if (v.empty() || v.front() == '#') continue;
        if (v == "[motor]") {
            roster.emplace_back();
            continue;
        }
        if (roster.empty()) throw ParseError("key outside a [motor] block", lineno);
        auto eq = v.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value", lineno);
        auto key = text::trim(v.substr(0, eq));
        auto val = text::trim(v.substr(eq + 1));
        auto& a = roster.back();
        auto num = [&] {
            auto d = text::parse_double(val);
            if (!d) throw ParseError("malformed number for " + std::string(key), lineno);
            return *d;
        };
        if (key == "motor_id") a.motor_id = std::string(val);
        else if (key == "mech_type") a.mech_type = parse_mech_type(val);
        else if (key == "events") a.events = static_cast<std::size_t>(num());
        else if (key == "steady_amplitude") a.steady_amplitude = num();
        else if (key == "envelope_scale") a.envelope_scale = num();
        else if (key == "decay") a.decay = num();
        else if (key == "harmonic_magnitudes") a.harmonic_magnitudes = numbers(val);
        else if (key == "harmonic_phases") a.harmonic_phases = numbers(val);
        else if (key == "noise_level") a.noise_level = num();
        else if (key == "mains_freq") a.mains_freq = num();
        else if (key == "power_factor_angle") a.power_factor_angle = num();
        else if (key == "dc_fraction") a.dc_fraction = num();
        else if (key == "dc_decay_ratio") a.dc_decay_ratio = num();
        else if (key == "event_variability") a.event_variability = num();
        else throw ParseError("unknown roster key '" + std::string(key) + "'", lineno);
    }
    for (const auto& a : roster) a.validate();
    return roster;
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Magnitude of DFT bin n by direct correlation with cos and sin.
inline double naive_dft(std::span<const double> x, std::size_t n) {
    const double N = static_cast<double>(x.size());
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        double arg = 2.0 * std::numbers::pi * static_cast<double>(n) * static_cast<double>(k) / N;
        re += x[k] * std::cos(arg);
        im -= x[k] * std::sin(arg);
    }
    return std::hypot(re, im);
}

/// Integral of i*u over [t_begin, t_end] (s from the first sample) by the
/// midpoint rule at 10x the sample rate, interpolating both channels linearly.
inline double oracle_energy(std::span<const double> i, std::span<const double> u, double sample_rate, double t_begin,
                            double t_end) {
    if (i.size() != u.size()) throw ConfigError("oracle_energy needs equal lengths");
    if (!(t_end > t_begin)) return 0.0;
    const double fine = 10.0 * sample_rate;
    auto steps = static_cast<std::size_t>(std::ceil((t_end - t_begin) * fine));
    const double h = (t_end - t_begin) / static_cast<double>(steps);
    double s = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        double t = t_begin + (static_cast<double>(k) + 0.5) * h;
        s += sample_at(i, sample_rate, t) * sample_at(u, sample_rate, t);
    }
    return s * h;
}

inline double oracle_energy(std::span<const double> i, std::span<const double> u, double sample_rate) {
    return oracle_energy(i, u, sample_rate, 0.0, static_cast<double>(i.size() - 1) / sample_rate);
}

struct OracleLambda {
    double lambda = 0.0;
    double objective = 0.0;      // least-squares cost at the argmin
    double flat_objective = 0.0; // cost of the best constant
};

/// Dense log-spaced grid over lambda in [0.01, 500] (10^4 points); amplitude
/// and offset solved in closed form at each lambda.
inline OracleLambda oracle_lambda(const PeakSeries& p, std::size_t grid = 10000) {
    OracleLambda best;
    const std::size_t n = p.times.size();
    const double t0 = p.times.front();
    double mean = 0.0;
    for (double v : p.values) mean += v;
    mean /= static_cast<double>(n);
    for (double v : p.values) best.flat_objective += (v - mean) * (v - mean);
    best.objective = std::numeric_limits<double>::infinity();
    const double lo = std::log(0.01), hi = std::log(500.0);
    for (std::size_t g = 0; g < grid; ++g) {
        double lambda = std::exp(lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid - 1));
        // regress v on [e, 1]
        double se = 0.0, see = 0.0, sv = 0.0, sev = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double e = std::exp(-lambda * (p.times[k] - t0));
            se += e, see += e * e, sv += p.values[k], sev += e * p.values[k];
        }
        double det = static_cast<double>(n) * see - se * se;
        double a = det != 0.0 ? (static_cast<double>(n) * sev - se * sv) / det : 0.0;
        double c = (sv - a * se) / static_cast<double>(n);
        double cost = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double r = a * std::exp(-lambda * (p.times[k] - t0)) + c - p.values[k];
            cost += r * r;
        }
        if (cost < best.objective) best.objective = cost, best.lambda = lambda;
    }
    return best;
}

} // namespace motorid

#endif
