// motorid: synth | detect | extract | experiment | report
//
// Exit codes: 0 success, 2 config error, 3 protocol error, 4 I/O error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "motorid/config.hpp"
#include "motorid/experiments.hpp"
#include "motorid/synth.hpp"

namespace fs = std::filesystem;
using namespace motorid;

namespace {

enum Exit { ok = 0, config_error = 2, protocol_error = 3, io_error = 4 };

struct Flags {
    std::string config;
    std::string out;
    std::string input;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::string kernel;
};

RunConfig resolve(const Flags& f) {
    RunConfig c;
    if (!f.config.empty()) c = load_config(f.config);
    if (!f.out.empty()) c.output = f.out;
    if (!f.input.empty()) c.input = f.input;
    if (f.seed) c.seed = *f.seed;
    if (f.jobs) c.jobs = *f.jobs;
    if (!f.kernel.empty()) {
        try {
            c.experiment.kernels = {parse_kernel(f.kernel)};
        } catch (const Error&) {
            throw ConfigError("--kernel: expected linear, poly3 or rbf");
        }
    }
    c.validate();
    c.experiment.seed = c.seed;
    c.experiment.jobs = c.jobs;
    c.experiment.config_digest = c.digest();
    return c;
}

std::string require_path(const std::string& value, const char* what) {
    if (value.empty()) throw ConfigError(std::string("no ") + what + " given (flag or config key)");
    return value;
}

void make_dirs(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

/// Regular *.csv files below `root`, sorted by relative path.
std::vector<fs::path> csv_files(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::string relative_name(const fs::path& p, const fs::path& root) { return fs::relative(p, root).generic_string(); }

int cmd_synth(const Flags& flags) {
    auto cfg = resolve(flags);
    const fs::path out = require_path(cfg.output, "output directory");
    std::vector<MotorArchetype> roster;
    if (!cfg.roster_file.empty()) {
        auto in = text::open_for_read(cfg.roster_file);
        roster = read_roster(in);
    } else {
        roster = default_roster(cfg.seed, cfg.roster);
    }
    make_dirs(out);
    {
        auto r = text::open_for_write((out / "roster.txt").string());
        write_roster(r, roster);
    }
    auto truth = text::open_for_write((out / "truth.csv").string());
    truth << "# config_digest=" << cfg.digest() << "\nevent_file,motor_id,switch_time,switch_phase,detected_time\n";
    std::size_t written = 0;
    for (std::size_t m = 0; m < roster.size(); ++m) {
        make_dirs(out / roster[m].motor_id);
        std::size_t count = cfg.synth_events_per_motor ? cfg.synth_events_per_motor : roster[m].events;
        std::vector<CorpusEvent> events(count);
        parallel_for(count, cfg.jobs, [&](std::size_t e) {
            events[e] = make_corpus_event(roster[m], m, e, cfg.seed, cfg.generator, cfg.detection);
        });
        for (const auto& ev : events) {
            char name[32];
            std::snprintf(name, sizeof name, "event_%03zu.csv", ev.event_index);
            auto rel = roster[m].motor_id + "/" + name;
            write_event_file((out / rel).string(), ev.record);
            truth << rel << ',' << roster[m].motor_id << ',' << text::format_double(ev.truth.switch_time) << ','
                  << text::format_double(ev.truth.switch_phase) << ',' << text::format_double(ev.record.event_time)
                  << '\n';
            ++written;
        }
    }
    std::cout << "synth: " << roster.size() << " motors, " << written << " events -> " << out.string() << '\n';
    return ok;
}

int cmd_detect(const Flags& flags) {
    auto cfg = resolve(flags);
    const fs::path in = require_path(cfg.input, "input directory");
    const fs::path out = require_path(cfg.output, "output directory");
    make_dirs(out);
    std::size_t files = 0, events = 0, failed = 0;
    for (const auto& path : csv_files(in)) {
        ++files;
        try {
            auto parsed = parse_waveform(path.string(), cfg.ingestion);
            for (const auto& w : parsed.warnings) std::cerr << path.string() << ": " << w << '\n';
            const auto& w = parsed.waveform;
            auto header = [&](const char* key, std::string fallback) {
                auto it = parsed.header.find(key);
                return it == parsed.header.end() ? fallback : it->second;
            };
            std::string motor = header("motor_id", path.parent_path() == in ? path.stem().string()
                                                                             : path.parent_path().filename().string());
            MechType mech = parse_mech_type(header("mech_type", "other"));
            auto times = detect_turn_on(w, cfg.detection);
            const double lead = static_cast<double>(cfg.detection.quiet_samples) / w.sample_rate;
            for (std::size_t k = 0; k < times.size(); ++k) {
                double begin = std::max(0.0, times[k] - lead);
                if (k > 0) begin = std::max(begin, times[k - 1]);
                std::size_t b = sample_at_or_after(begin, w.sample_rate);
                std::size_t e = k + 1 < times.size() ? sample_at_or_after(times[k + 1], w.sample_rate) : w.size();
                EventRecord rec;
                rec.waveform.sample_rate = w.sample_rate;
                rec.waveform.mains_freq = w.mains_freq;
                rec.waveform.current.assign(w.current.begin() + static_cast<std::ptrdiff_t>(b),
                                            w.current.begin() + static_cast<std::ptrdiff_t>(e));
                rec.waveform.voltage.assign(w.voltage.begin() + static_cast<std::ptrdiff_t>(b),
                                            w.voltage.begin() + static_cast<std::ptrdiff_t>(e));
                rec.event_time = times[k] - static_cast<double>(b) / w.sample_rate;
                rec.motor_id = motor;
                rec.mech_type = mech;
                try {
                    auto ev = preprocess_event(rec.waveform, rec.event_time, cfg.detection);
                    rec.polarity_flipped = ev.polarity_flipped;
                    rec.scale_factor = ev.scale_factor;
                } catch (const Error& err) {
                    std::cerr << path.string() << ": event at " << times[k] << " s skipped: " << err.what() << '\n';
                    continue;
                }
                make_dirs(out / motor);
                char name[32];
                std::snprintf(name, sizeof name, "_e%03zu.csv", k);
                write_event_file((out / motor / (path.stem().string() + name)).string(), rec);
                ++events;
            }
        } catch (const ParseError& err) {
            std::cerr << path.string() << ": skipped: " << err.what() << '\n';
            ++failed;
        }
    }
    std::cout << "detect: " << files << " records, " << events << " events -> " << out.string() << '\n';
    return files > 0 && failed == files ? io_error : ok;
}

std::string table_path(const std::string& out) {
    if (fs::is_directory(out) || out.empty() || out.back() == '/') return (fs::path(out) / "features.csv").string();
    return out;
}

int cmd_extract(const Flags& flags) {
    auto cfg = resolve(flags);
    const fs::path in = require_path(cfg.input, "event store");
    const auto out = table_path(require_path(cfg.output, "output path"));
    std::vector<EventRecord> records;
    std::vector<std::string> names;
    std::size_t failed = 0, total = 0;
    for (const auto& path : csv_files(in)) {
        ++total;
        try {
            auto rec = read_event_file(path.string(), cfg.ingestion);
            preprocess_record(rec, cfg.detection);
            records.push_back(std::move(rec));
            names.push_back(relative_name(path, in));
        } catch (const Error& err) {
            std::cerr << path.string() << ": skipped: " << err.what() << '\n';
            ++failed;
        }
    }
    auto corpus = build_corpus(records, names, cfg.detection, cfg.features, cfg.jobs);
    if (auto parent = fs::path(out).parent_path(); !parent.empty()) make_dirs(parent);
    auto stream = text::open_for_write(out);
    write_feature_table(stream, corpus, cfg.digest());
    std::cout << "extract: " << corpus.size() << " events, " << failed << " skipped -> " << out << '\n';
    return total > 0 && failed == total ? io_error : ok;
}

int cmd_experiment(const Flags& flags) {
    auto cfg = resolve(flags);
    auto in_path = require_path(cfg.input, "feature table");
    if (fs::is_directory(in_path)) in_path = (fs::path(in_path) / "features.csv").string();
    const auto out = require_path(cfg.output, "output directory");
    auto in = text::open_for_read(in_path);
    auto corpus = read_feature_table(in);
    if (corpus.feature_names.size() != kFeatureCount)
        throw ProtocolError("feature table has " + std::to_string(corpus.feature_names.size()) + " feature columns, expected 173");
    auto report = cfg.experiment.protocol == Protocol::mech ? run_mech_experiment(corpus, cfg.experiment)
                                                            : run_motor_experiment(corpus, cfg.experiment);
    std::cout << "experiment: protocol " << to_string(report.protocol) << ", " << report.rows.size() << " events, "
              << report.fold_count << " folds (" << report.fold_strategy << ")\n";
    make_dirs(out);
    {
        auto c = text::open_for_write((fs::path(out) / "config.txt").string());
        c << "# config_digest=" << cfg.digest() << '\n' << cfg.canonical();
    }
    render_report(report, out);
    for (const auto& [kernel, trace] : report.traces) {
        if (trace.steps.empty()) continue;
        const auto& last = trace.steps.back();
        std::printf("%s: k=%zu f1=%.4f (+/- %.4f)%s\n", to_string(kernel), last.k, last.f1_mean, last.f1_std,
                    trace.converged ? "" : " [solver hit iteration cap]");
    }
    return ok;
}

int cmd_report(const Flags& flags) {
    auto cfg = resolve(flags);
    const auto in = require_path(cfg.input, "report directory");
    const auto out = cfg.output.empty() ? in : cfg.output;
    auto json_path = fs::is_directory(in) ? (fs::path(in) / "report.json").string() : in;
    auto stream = text::open_for_read(json_path);
    nlohmann::json j;
    try {
        stream >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(json_path + ": " + e.what());
    }
    auto report = report_from_json(j);
    auto files = render_report(report, out);
    for (const auto& [kernel, trace] : report.traces) {
        std::cout << to_string(kernel) << '\n';
        for (const auto& s : trace.steps)
            std::printf("  %2zu  %-22s %s\n", s.k, s.feature_name.c_str(), detail::percent(s.f1_mean).c_str());
    }
    std::cout << "report: " << files.size() << " files -> " << out << '\n';
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motor identification from turn-on transients"};
    app.require_subcommand(1, 1);
    Flags flags;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "key=value config file");
        sub->add_option("--out", flags.out, "output directory or file");
        sub->add_option("--in", flags.input, "input directory or file");
        sub->add_option("--seed", flags.seed, "u64 seed");
        sub->add_option("--jobs", flags.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--kernel", flags.kernel, "linear|poly3|rbf");
    };
    std::map<std::string, int (*)(const Flags&)> commands = {
        {"synth", cmd_synth},           {"detect", cmd_detect}, {"extract", cmd_extract},
        {"experiment", cmd_experiment}, {"report", cmd_report},
    };
    const std::map<std::string, std::string> help = {
        {"synth", "generate a synthetic event store"},
        {"detect", "detect turn-ons in raw waveforms and write an event store"},
        {"extract", "write the 173-feature table of an event store"},
        {"experiment", "run greedy selection under the configured protocol"},
        {"report", "re-render a saved report"},
    };
    for (const auto& [name, fn] : commands) add_common(app.add_subcommand(name, help.at(name)));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }
    try {
        for (const auto& [name, fn] : commands)
            if (app.got_subcommand(name)) return fn(flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << '\n';
        return protocol_error;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return io_error;
    } catch (const ParseError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return io_error;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return protocol_error;
    }
    return config_error;
}
