#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "motorid/synth.hpp"

using namespace motorid;

namespace {

MotorArchetype sine_motor() {
    MotorArchetype a;
    a.motor_id = "S";
    a.steady_amplitude = 2.0;
    a.envelope_scale = 0.0;
    a.dc_fraction = 0.0;
    return a;
}

} // namespace

TEST_CASE("a degenerate archetype yields a pure sine after switch-on") {
    GeneratorOptions opt;
    auto ev = generate_event(sine_motor(), 1.0, opt, 1);
    const auto& w = ev.waveform;
    const double t0 = ev.truth.switch_time;
    double worst = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        double t = static_cast<double>(k) / w.sample_rate;
        double expect = t >= t0 ? 2.0 * std::sin(2.0 * std::numbers::pi * 50.0 * (t - t0) + 1.0) : 0.0;
        worst = std::max(worst, std::abs(w.current[k] - expect));
    }
    CHECK(worst < 1e-9);
    CHECK(std::fmod(2.0 * std::numbers::pi * 50.0 * t0, 2.0 * std::numbers::pi) == Catch::Approx(1.0).margin(1e-9));
    CHECK(t0 >= opt.nominal_switch_time);
    CHECK(t0 < opt.nominal_switch_time + 0.02);
}

TEST_CASE("envelope: first to fifth period peak ratio") {
    auto a = sine_motor();
    a.envelope_scale = 5.0;
    a.decay = 14.0;
    auto ev = generate_event(a, std::numbers::pi / 2.0, {}, 2);
    const auto& w = ev.waveform;
    auto k0 = static_cast<std::size_t>(std::ceil(ev.truth.switch_time * w.sample_rate));
    auto peak = [&](std::size_t p) {
        double m = 0.0;
        for (std::size_t k = k0 + 200 * p; k < k0 + 200 * (p + 1); ++k) m = std::max(m, std::abs(w.current[k]));
        return m;
    };
    double env1 = 1.0 + 5.0 * std::exp(-14.0 * 0.005);
    double env5 = 1.0 + 5.0 * std::exp(-14.0 * 0.085);
    CHECK(std::abs(peak(0) / peak(4) / (env1 / env5) - 1.0) < 0.05);
}

TEST_CASE("generation is deterministic per seed") {
    auto roster = default_roster(3);
    auto a = generate_event(roster[0], 0.4, {}, 77);
    auto b = generate_event(roster[0], 0.4, {}, 77);
    auto c = generate_event(roster[0], 0.4, {}, 78);
    CHECK(a.waveform.current == b.waveform.current);
    CHECK(a.waveform.current != c.waveform.current);
    auto ca = make_corpus_event(roster[2], 2, 5, 9);
    auto cb = make_corpus_event(roster[2], 2, 5, 9);
    CHECK(ca.record.waveform.current == cb.record.waveform.current);
    CHECK(ca.record.event_time == cb.record.event_time);
}

TEST_CASE("default roster and corpus sizes") {
    auto roster = default_roster(4);
    REQUIRE(roster.size() == 18);
    std::size_t total = 0;
    std::map<MechType, std::size_t> per_type;
    for (const auto& a : roster) {
        total += a.events;
        ++per_type[a.mech_type];
    }
    CHECK(total == 376);
    CHECK(per_type[MechType::pump] == 6);
    CHECK(per_type[MechType::compressor] == 4);
    CHECK(per_type[MechType::fan] == 5);
    CHECK(per_type[MechType::other] == 3);
    for (std::size_t i = 0; i < roster.size(); ++i)
        for (std::size_t j = i + 1; j < roster.size(); ++j) CHECK(profile_distance(roster[i], roster[j]) >= 0.05);

    std::vector<MotorArchetype> small(roster.begin(), roster.begin() + 3);
    auto corpus = generate_corpus(small, 4, 4);
    CHECK(corpus.size() == 12);
    for (const auto& ev : corpus) CHECK(ev.record.motor_id == small[ev.motor_index].motor_id);
}

TEST_CASE("type-keyed rosters share profiles within a type") {
    RosterOptions ro;
    ro.type_keyed = true;
    auto roster = default_roster(5, ro);
    for (const auto& a : roster)
        for (const auto& b : roster)
            if (a.mech_type == b.mech_type) CHECK(a.harmonic_magnitudes == b.harmonic_magnitudes);
}

TEST_CASE("a zero-noise event's harmonics match its archetype") {
    auto roster = default_roster(6, {.noise_level = 0.0});
    auto a = roster[1];
    a.envelope_scale = 0.0;
    a.dc_fraction = 0.0;
    GeneratorOptions opt;
    opt.duration = 1.5;
    auto ev = generate_event(a, 0.7, opt, 3);
    auto e = preprocess_event(ev.waveform, ev.truth.switch_time);
    auto mag = harmonic_magnitudes(e.periods[4], 20);
    for (std::size_t n = 2; n <= 20; ++n) {
        double truth = a.harmonic_magnitudes[n - 2];
        double got = mag[n - 1] / mag[0];
        CHECK(std::abs(got - truth) <= 0.02 * truth + 2e-3);
    }
}

TEST_CASE("detected events keep the period-6 maximum near unity") {
    auto roster = default_roster(7);
    std::size_t ok = 0, n = 0;
    for (std::size_t m = 0; m < roster.size(); ++m)
        for (std::size_t k = 0; k < 3; ++k, ++n) {
            auto e = preprocess_record(make_corpus_event(roster[m], m, k, 7).record);
            double mx = 0.0;
            for (double v : e.periods[4]) mx = std::max(mx, std::abs(v));
            ok += mx >= 0.9 && mx <= 1.1;
        }
    CHECK(ok == n);
}

TEST_CASE("roster file round trip") {
    auto roster = default_roster(8);
    std::stringstream buf;
    write_roster(buf, roster);
    auto back = read_roster(buf);
    REQUIRE(back.size() == roster.size());
    for (std::size_t k = 0; k < roster.size(); ++k) {
        CHECK(back[k].motor_id == roster[k].motor_id);
        CHECK(back[k].mech_type == roster[k].mech_type);
        CHECK(back[k].events == roster[k].events);
        CHECK(back[k].harmonic_magnitudes == roster[k].harmonic_magnitudes);
        CHECK(back[k].decay == roster[k].decay);
        CHECK(back[k].event_variability == roster[k].event_variability);
    }
    std::istringstream bad("[motor]\ncolour=red\n");
    CHECK_THROWS_AS(read_roster(bad), ParseError);
}

TEST_CASE("oracles") {
    SECTION("naive DFT of a cosine") {
        std::vector<double> c(64);
        for (std::size_t k = 0; k < 64; ++k) c[k] = std::cos(2.0 * std::numbers::pi * 3.0 * static_cast<double>(k) / 64.0);
        CHECK(naive_dft(c, 3) == Catch::Approx(32.0));
        CHECK(naive_dft(c, 2) < 1e-9);
    }
    SECTION("energy of constant channels") {
        std::vector<double> i(1001, 2.0), u(1001, 3.0);
        CHECK(oracle_energy(i, u, 10000.0) == Catch::Approx(6.0 * 0.1).epsilon(1e-9));
    }
    SECTION("oracle lambda on an exact model") {
        PeakSeries p;
        for (int k = 0; k < 10; ++k) {
            p.times.push_back(0.01 * k);
            p.values.push_back(3.0 * std::exp(-10.0 * 0.01 * k) + 1.0);
        }
        auto o = oracle_lambda(p);
        CHECK(std::abs(o.lambda / 10.0 - 1.0) < 0.002);
        CHECK(o.objective < 1e-6);
        CHECK(o.flat_objective > 0.1);
    }
}

TEST_CASE("archetype validation") {
    MotorArchetype a;
    a.steady_amplitude = 0.0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = {};
    a.harmonic_magnitudes.resize(3);
    CHECK_THROWS_AS(a.validate(), ConfigError);
    GeneratorOptions opt;
    opt.duration = 0.5;
    CHECK_THROWS_AS(generate_event(MotorArchetype{}, 0.0, opt, 1), ConfigError);
}
