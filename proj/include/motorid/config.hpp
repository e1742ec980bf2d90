#ifndef MOTORID_CONFIG_HPP
#define MOTORID_CONFIG_HPP

// Run configuration: flat key=value text with section prefixes, e.g.
//   detect.on_threshold=0.1
//   experiment.kernels=linear,rbf

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "motorid/error.hpp"
#include "motorid/experiments.hpp"
#include "motorid/features.hpp"
#include "motorid/ml.hpp"
#include "motorid/synth.hpp"
#include "motorid/text_io.hpp"
#include "motorid/transient.hpp"

namespace motorid {

struct RunConfig {
    std::string input;
    std::string output;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;

    IngestionConfig ingestion;
    DetectionConfig detection;
    FeatureConfig features;
    ExperimentConfig experiment;

    // synth
    RosterOptions roster;
    GeneratorOptions generator;
    std::size_t synth_events_per_motor = 0; // 0: per-motor counts of the roster
    std::string roster_file;

    void validate() const;
    /// Canonical key=value listing of every resolved value, sorted by key.
    std::string canonical() const;
    std::string digest() const { return text::hex64(text::fnv1a(canonical())); }
};

namespace detail {

struct ConfigKey {
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline double config_number(std::string_view key, std::string_view v) {
    auto d = text::parse_double(v);
    if (!d) throw ConfigError(std::string(key) + ": not a number: '" + std::string(v) + "'");
    return *d;
}

inline std::size_t config_count(std::string_view key, std::string_view v) {
    auto n = text::parse_int(v);
    if (!n || *n < 0) throw ConfigError(std::string(key) + ": not a non-negative integer: '" + std::string(v) + "'");
    return static_cast<std::size_t>(*n);
}

inline bool config_bool(std::string_view key, std::string_view v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError(std::string(key) + ": not a boolean: '" + std::string(v) + "'");
}

inline std::string kernel_list(const std::vector<Kernel>& ks) {
    std::vector<std::string> parts;
    for (auto k : ks) parts.emplace_back(to_string(k));
    return text::join(parts);
}

#define MOTORID_NUM(key, member)                                                                                      \
    {                                                                                                                 \
        key, {                                                                                                        \
            [](RunConfig& c, std::string_view v) { c.member = config_number(key, v); },                               \
            [](const RunConfig& c) { return text::format_double(c.member); }                                          \
        }                                                                                                             \
    }
#define MOTORID_COUNT(key, member)                                                                                    \
    {                                                                                                                 \
        key, {                                                                                                        \
            [](RunConfig& c, std::string_view v) { c.member = config_count(key, v); },                                \
            [](const RunConfig& c) { return std::to_string(c.member); }                                               \
        }                                                                                                             \
    }

inline const std::map<std::string, ConfigKey>& config_keys() {
    static const std::map<std::string, ConfigKey> keys = {
        {"input", {[](RunConfig& c, std::string_view v) { c.input = v; }, [](const RunConfig& c) { return c.input; }}},
        {"output", {[](RunConfig& c, std::string_view v) { c.output = v; }, [](const RunConfig& c) { return c.output; }}},
        {"seed",
         {[](RunConfig& c, std::string_view v) {
              std::uint64_t s = 0;
              auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
              if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("seed: not a u64: '" + std::string(v) + "'");
              c.seed = s;
          },
          [](const RunConfig& c) { return std::to_string(c.seed); }}},
        MOTORID_COUNT("jobs", jobs),

        MOTORID_NUM("ingest.sample_rate", ingestion.default_sample_rate),
        MOTORID_NUM("ingest.mains_freq", ingestion.default_mains_freq),
        MOTORID_NUM("ingest.timing_tolerance", ingestion.timing_tolerance),

        MOTORID_NUM("detect.on_threshold", detection.on_threshold),
        MOTORID_COUNT("detect.quiet_samples", detection.quiet_samples),
        MOTORID_COUNT("detect.steady_tail_periods", detection.steady_tail_periods),
        MOTORID_NUM("detect.min_gap_periods", detection.min_gap_periods),
        MOTORID_NUM("detect.crossing_hysteresis", detection.crossing_hysteresis),
        MOTORID_COUNT("detect.points_per_period", detection.points_per_period),

        MOTORID_NUM("features.extrema_prominence", features.extrema_prominence),
        MOTORID_COUNT("features.smoothing_width", features.smoothing_width),
        MOTORID_NUM("features.inflection_band", features.inflection_band),

        MOTORID_NUM("ml.C", experiment.svm.C),
        MOTORID_NUM("ml.gamma", experiment.svm.gamma),
        MOTORID_NUM("ml.coef0", experiment.svm.coef0),
        MOTORID_NUM("ml.tolerance", experiment.svm.tolerance),
        MOTORID_COUNT("ml.max_iterations", experiment.svm.max_iterations),
        {"ml.scaler",
         {[](RunConfig& c, std::string_view v) {
              if (v == "fold_local") c.experiment.scaler = ScalerMode::fold_local;
              else if (v == "global") c.experiment.scaler = ScalerMode::global;
              else throw ConfigError("ml.scaler: expected fold_local or global");
          },
          [](const RunConfig& c) {
              return std::string(c.experiment.scaler == ScalerMode::global ? "global" : "fold_local");
          }}},

        {"experiment.protocol",
         {[](RunConfig& c, std::string_view v) {
              if (v == "motors") c.experiment.protocol = Protocol::motors;
              else if (v == "mech") c.experiment.protocol = Protocol::mech;
              else throw ConfigError("experiment.protocol: expected motors or mech");
          },
          [](const RunConfig& c) { return std::string(to_string(c.experiment.protocol)); }}},
        {"experiment.kernels",
         {[](RunConfig& c, std::string_view v) {
              c.experiment.kernels.clear();
              for (auto part : text::split(v)) {
                  try {
                      c.experiment.kernels.push_back(parse_kernel(text::trim(part)));
                  } catch (const Error&) {
                      throw ConfigError("experiment.kernels: unknown kernel '" + std::string(part) + "'");
                  }
              }
          },
          [](const RunConfig& c) { return kernel_list(c.experiment.kernels); }}},
        MOTORID_COUNT("experiment.k_max", experiment.k_max),
        MOTORID_COUNT("experiment.folds", experiment.folds),
        MOTORID_COUNT("experiment.events_per_motor", experiment.events_per_motor),

        MOTORID_NUM("synth.noise", roster.noise_level),
        MOTORID_NUM("synth.min_profile_distance", roster.min_profile_distance),
        MOTORID_NUM("synth.harmonic_spread", roster.harmonic_spread),
        {"synth.type_keyed",
         {[](RunConfig& c, std::string_view v) { c.roster.type_keyed = config_bool("synth.type_keyed", v); },
          [](const RunConfig& c) { return std::string(c.roster.type_keyed ? "1" : "0"); }}},
        MOTORID_COUNT("synth.events_per_motor", synth_events_per_motor),
        {"synth.roster",
         {[](RunConfig& c, std::string_view v) { c.roster_file = v; }, [](const RunConfig& c) { return c.roster_file; }}},
        MOTORID_NUM("synth.duration", generator.duration),
        MOTORID_NUM("synth.sample_rate", generator.sample_rate),
        MOTORID_NUM("synth.voltage_amplitude", generator.voltage_amplitude),
    };
    return keys;
}

#undef MOTORID_NUM
#undef MOTORID_COUNT

} // namespace detail

inline void RunConfig::validate() const {
    detection.validate();
    if (!(ingestion.default_sample_rate > 0.0)) throw ConfigError("ingest.sample_rate must be > 0");
    if (!(ingestion.default_mains_freq > 0.0)) throw ConfigError("ingest.mains_freq must be > 0");
    if (!(features.extrema_prominence >= 0.0 && features.extrema_prominence < 1.0))
        throw ConfigError("features.extrema_prominence must be in [0,1)");
    if (features.smoothing_width < 1 || features.smoothing_width % 2 == 0)
        throw ConfigError("features.smoothing_width must be odd and >= 1");
    if (!(features.inflection_band >= 0.0 && features.inflection_band < 1.0))
        throw ConfigError("features.inflection_band must be in [0,1)");
    if (!(experiment.svm.C > 0.0)) throw ConfigError("ml.C must be > 0");
    if (!(experiment.svm.tolerance > 0.0)) throw ConfigError("ml.tolerance must be > 0");
    if (experiment.svm.max_iterations < 1) throw ConfigError("ml.max_iterations must be >= 1");
    if (experiment.kernels.empty()) throw ConfigError("experiment.kernels must not be empty");
    if (experiment.k_max < 1 || experiment.k_max > kFeatureCount)
        throw ConfigError("experiment.k_max must be in [1,173]");
    if (experiment.folds < 2) throw ConfigError("experiment.folds must be >= 2");
    if (experiment.events_per_motor < 1) throw ConfigError("experiment.events_per_motor must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (!(roster.noise_level >= 0.0)) throw ConfigError("synth.noise must be >= 0");
    if (!(roster.harmonic_spread >= 0.0)) throw ConfigError("synth.harmonic_spread must be >= 0");
    if (!(generator.duration >= 1.0)) throw ConfigError("synth.duration must be >= 1 s");
    if (!(generator.sample_rate >= 4000.0)) throw ConfigError("synth.sample_rate must be >= 4 kHz");
}

inline std::string RunConfig::canonical() const {
    std::ostringstream out;
    for (const auto& [key, k] : detail::config_keys())
        if (key != "output" && key != "jobs") out << key << '=' << k.get(*this) << '\n';
    return out.str();
}

/// Applies one key=value assignment.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
    const auto& keys = detail::config_keys();
    auto it = keys.find(std::string(key));
    if (it == keys.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    it->second.set(c, text::trim(value));
}

/// Parses a config file on top of `base`. Blank lines and lines starting
/// with '#' are ignored.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto v = text::trim(line);
        if (v.empty() || v.front() == '#') continue;
        auto eq = v.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        set_config_value(base, text::trim(v.substr(0, eq)), v.substr(eq + 1));
    }
    base.validate();
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    return parse_config(in, std::move(base));
}

} // namespace motorid

#endif
