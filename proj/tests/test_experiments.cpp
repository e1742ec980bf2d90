#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "motorid/experiments.hpp"
#include "motorid/synth.hpp"

using namespace motorid;
namespace fs = std::filesystem;

namespace {

std::vector<int> class_labels(const std::vector<std::size_t>& sizes) {
    std::vector<int> y;
    for (std::size_t c = 0; c < sizes.size(); ++c)
        for (std::size_t k = 0; k < sizes[c]; ++k) y.push_back(static_cast<int>(c));
    return y;
}

/// n_features random columns; `signal` columns get label-dependent offsets.
Matrix random_features(const std::vector<int>& y, std::size_t n_features, std::map<std::size_t, double> signal,
                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(y.size(), n_features);
    for (std::size_t r = 0; r < y.size(); ++r)
        for (std::size_t c = 0; c < n_features; ++c) {
            m(r, c) = g(rng);
            if (auto it = signal.find(c); it != signal.end()) m(r, c) += it->second * y[r];
        }
    return m;
}

std::vector<std::string> names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back("f" + std::to_string(k));
    return out;
}

/// Corpus of `per_type` motors for each of pump/compressor/fan plus one
/// 'other' motor, `events` events each, random features.
Corpus toy_corpus(std::size_t per_type, std::size_t events, std::size_t n_features, std::uint64_t seed) {
    Corpus c;
    const MechType types[] = {MechType::pump, MechType::compressor, MechType::fan};
    std::size_t id = 0;
    auto add_motor = [&](MechType t) {
        ++id;
        for (std::size_t e = 0; e < events; ++e) {
            c.motor_ids.push_back("M" + std::to_string(id));
            c.mech_types.push_back(t);
            c.event_files.push_back("M" + std::to_string(id) + "/event_" + std::to_string(e) + ".csv");
            c.order.push_back(static_cast<double>(c.order.size()));
        }
    };
    for (auto t : types)
        for (std::size_t m = 0; m < per_type; ++m) add_motor(t);
    add_motor(MechType::other);
    std::vector<int> y;
    for (auto t : c.mech_types) y.push_back(static_cast<int>(t));
    c.features = random_features(y, n_features, {{1, 3.0}}, seed);
    c.feature_names = names(n_features);
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("stratified k-fold") {
    SECTION("two balanced classes") {
        auto y = class_labels({8, 8});
        auto plan = stratified_kfold(y, 4, 1);
        REQUIRE(plan.folds.size() == 4);
        for (const auto& f : plan.folds) {
            CHECK(f.test.size() == 4);
            CHECK(f.train.size() == 12);
            std::size_t zeros = 0;
            for (auto r : f.test) zeros += y[r] == 0;
            CHECK(zeros == 2);
        }
    }
    SECTION("a class of exactly k members appears once per fold") {
        auto y = class_labels({8, 20});
        auto plan = stratified_kfold(y, 8, 3);
        for (const auto& f : plan.folds) {
            std::size_t n = 0;
            for (auto r : f.test) n += y[r] == 0;
            CHECK(n == 1);
        }
    }
    SECTION("study roster sizes") {
        std::vector<std::size_t> sizes;
        for (const auto& e : study_roster()) sizes.push_back(e.events);
        auto y = class_labels(sizes);
        REQUIRE(y.size() == 376);
        auto plan = stratified_kfold(y, 8, 7);
        std::set<std::size_t> seen;
        for (const auto& f : plan.folds) {
            CHECK(f.test.size() == 47);
            CHECK(f.train.size() + f.test.size() == 376);
            for (auto r : f.test) CHECK(seen.insert(r).second);
            std::map<int, std::size_t> per;
            for (auto r : f.test) ++per[y[r]];
            for (std::size_t c = 0; c < sizes.size(); ++c) {
                auto n = per[static_cast<int>(c)];
                CHECK(n >= sizes[c] / 8);
                CHECK(n <= (sizes[c] + 7) / 8);
            }
        }
        CHECK(seen.size() == 376);
    }
    SECTION("deterministic in the seed") {
        auto y = class_labels({10, 12, 9});
        CHECK(stratified_kfold(y, 3, 5).folds[0].test == stratified_kfold(y, 3, 5).folds[0].test);
    }
    SECTION("too-small class") {
        auto y = class_labels({8, 7});
        CHECK_THROWS_WITH(stratified_kfold(y, 8, 1), Catch::Matchers::ContainsSubstring("class 1 has 7 members"));
    }
}

TEST_CASE("motor holdout splits") {
    auto build = [](std::size_t p, std::size_t c, std::size_t f, std::size_t events) {
        std::vector<std::string> ids;
        std::vector<MechType> mech;
        std::size_t id = 0;
        for (auto [t, n] : {std::pair{MechType::pump, p}, {MechType::compressor, c}, {MechType::fan, f}})
            for (std::size_t m = 0; m < n; ++m, ++id)
                for (std::size_t e = 0; e < events; ++e) {
                    ids.push_back("M" + std::to_string(id));
                    mech.push_back(t);
                }
        return std::pair{ids, mech};
    };
    SECTION("study roster: 120 folds of 24 events") {
        auto [ids, mech] = build(6, 4, 5, 8);
        auto plan = motor_holdout_splits(ids, mech);
        CHECK(plan.folds.size() == 120);
        for (const auto& f : plan.folds) {
            CHECK(f.test.size() == 24);
            CHECK(f.train.size() == 96);
            std::set<std::string> test_motors, train_motors;
            for (auto r : f.test) test_motors.insert(ids[r]);
            for (auto r : f.train) train_motors.insert(ids[r]);
            CHECK(test_motors.size() == 3);
            for (const auto& m : test_motors) CHECK(train_motors.count(m) == 0);
        }
    }
    SECTION("one motor per type") {
        auto [ids, mech] = build(1, 1, 1, 8);
        CHECK(motor_holdout_splits(ids, mech).folds.size() == 1);
    }
    SECTION("two motors per type: each motor is held out four times") {
        auto [ids, mech] = build(2, 2, 2, 8);
        auto plan = motor_holdout_splits(ids, mech);
        CHECK(plan.folds.size() == 8);
        std::map<std::string, int> held;
        for (const auto& f : plan.folds) {
            std::set<std::string> m;
            for (auto r : f.test) m.insert(ids[r]);
            for (const auto& x : m) ++held[x];
        }
        for (const auto& [m, n] : held) CHECK(n == 4);
    }
    SECTION("errors") {
        auto [ids, mech] = build(1, 0, 1, 8);
        CHECK_THROWS_AS(motor_holdout_splits(ids, mech), ProtocolError);
        auto [ids2, mech2] = build(1, 1, 1, 8);
        mech2[0] = MechType::other;
        CHECK_THROWS_AS(motor_holdout_splits(ids2, mech2), ProtocolError);
    }
}

TEST_CASE("equalize_events") {
    std::vector<std::string> ids(47, "A");
    std::vector<double> order;
    for (int k = 46; k >= 0; --k) order.push_back(k);
    auto keep = equalize_events(ids, order);
    REQUIRE(keep.size() == 8);
    for (auto r : keep) CHECK(order[r] < 8.0);

    std::vector<std::string> many;
    std::vector<double> ord;
    for (int m = 0; m < 15; ++m)
        for (int e = 0; e < 8 + m; ++e) many.push_back("M" + std::to_string(m)), ord.push_back(ord.size());
    CHECK(equalize_events(many, ord).size() == 120);

    std::vector<std::string> few(5, "B");
    std::vector<double> fo{0, 1, 2, 3, 4};
    CHECK_THROWS_WITH(equalize_events(few, fo), Catch::Matchers::ContainsSubstring("motor B"));
}

TEST_CASE("greedy selection") {
    auto y = class_labels({16, 16, 16});
    auto plan = stratified_kfold(y, 4, 2);
    SvmParams p;
    p.kernel = Kernel::linear;

    SECTION("a single separating feature wins the first run") {
        auto x = random_features(y, 10, {{7, 6.0}}, 3);
        EvaluationContext ctx(x, y, plan, p);
        auto t = greedy_select(ctx, names(10), 1);
        REQUIRE(t.steps.size() == 1);
        CHECK(t.steps[0].feature == 7);
        CHECK(t.steps[0].feature_name == "f7");
        CHECK(t.steps[0].f1_mean > 0.95);
    }
    SECTION("training counts, nesting and the greedy optimality of each run") {
        auto x = random_features(y, 10, {{2, 1.0}, {5, 0.8}, {8, 0.6}}, 4);
        EvaluationContext ctx(x, y, plan, p);
        auto t5 = greedy_select(ctx, names(10), 5);
        auto t3 = greedy_select(ctx, names(10), 3);
        CHECK(t5.trainings == 4 * (10 + 9 + 8 + 7 + 6));
        CHECK(t3.trainings == 4 * (10 + 9 + 8));
        CHECK(t5.winners(3) == t3.winners(3));
        auto w = t5.winners(5);
        CHECK(std::set<std::size_t>(w.begin(), w.end()).size() == 5);
        for (std::size_t k = 1; k <= 5; ++k) {
            auto prev = t5.winners(k - 1);
            for (std::size_t c = 0; c < 10; ++c) {
                if (std::find(prev.begin(), prev.end(), c) != prev.end()) continue;
                auto set = prev;
                set.push_back(c);
                double f = ctx.evaluate(set).f1_mean;
                CHECK(t5.steps[k - 1].f1_mean >= f);
                if (c == t5.steps[k - 1].feature) CHECK(f == t5.steps[k - 1].f1_mean);
            }
        }
    }
    SECTION("k_max beyond the feature count stops at the feature count") {
        auto x = random_features(y, 3, {{0, 1.0}}, 5);
        EvaluationContext ctx(x, y, plan, p);
        CHECK(greedy_select(ctx, names(3), 15).steps.size() == 3);
    }
    SECTION("identical rows score at most chance") {
        Matrix x(y.size(), 4, 1.5);
        for (auto k : {Kernel::linear, Kernel::poly3, Kernel::rbf}) {
            p.kernel = k;
            EvaluationContext ctx(x, y, plan, p);
            auto t = greedy_select(ctx, names(4), 2);
            for (const auto& s : t.steps) CHECK(s.f1_mean <= 1.0 / 3.0 + 1e-12);
        }
    }
    SECTION("deterministic across job counts") {
        auto x = random_features(y, 12, {{3, 1.0}, {9, 0.7}}, 6);
        p.kernel = Kernel::rbf;
        EvaluationContext ctx(x, y, plan, p);
        auto a = greedy_select(ctx, names(12), 4, 1);
        auto b = greedy_select(ctx, names(12), 4, 4);
        auto c = greedy_select(ctx, names(12), 4, 1);
        REQUIRE(a.steps.size() == b.steps.size());
        for (std::size_t s = 0; s < a.steps.size(); ++s) {
            CHECK(a.steps[s].feature == b.steps[s].feature);
            CHECK(a.steps[s].f1_mean == b.steps[s].f1_mean);
            CHECK(a.steps[s].fold_f1 == b.steps[s].fold_f1);
            CHECK(a.steps[s].confusions == c.steps[s].confusions);
        }
    }
}

TEST_CASE("fold-local and global scaling agree when every fold sees the full range") {
    auto y = class_labels({10, 10});
    auto x = random_features(y, 3, {{0, 4.0}}, 8);
    auto plan = stratified_kfold(y, 2, 1);
    EvaluationContext a(x, y, plan, {}, ScalerMode::global);
    std::vector<std::size_t> set{0};
    auto r = a.evaluate(set);
    CHECK(r.fold_f1.size() == 2);
    CHECK(r.f1_mean > 0.9);
}

TEST_CASE("protocol runners and reports") {
    auto corpus = toy_corpus(2, 10, 6, 9);
    ExperimentConfig cfg;
    cfg.kernels = {Kernel::linear, Kernel::rbf};
    cfg.k_max = 3;
    cfg.folds = 4;
    cfg.config_digest = "00000000deadbeef";

    SECTION("mechanical output protocol") {
        auto r = run_mech_experiment(corpus, cfg);
        CHECK(r.protocol == Protocol::mech);
        CHECK(r.fold_count == 8);
        CHECK(r.rows.size() == 6 * 8);
        for (const auto& m : r.mech_types) CHECK(m != "other");
        CHECK(r.class_names == std::vector<std::string>{"pump", "compressor", "fan"});
        REQUIRE(r.traces.size() == 2);
        CHECK(r.traces[0].second.steps[0].feature == 1);
        CHECK(r.traces[0].second.scatter.size() == r.rows.size());
    }
    SECTION("motor protocol") {
        auto r = run_motor_experiment(corpus, cfg);
        CHECK(r.class_names.size() == 7);
        CHECK(r.rows.size() == 70);
        CHECK(r.fold_strategy == "stratified-4-fold");
    }
    SECTION("rendered files and json round trip") {
        auto r = run_mech_experiment(corpus, cfg);
        auto dir = fs::temp_directory_path() / "motorid_report_test";
        fs::remove_all(dir);
        auto files = render_report(r, dir.string());
        CHECK(files.size() == 1 + 3 * 2 + 1);
        for (const auto& f : files)
            if (fs::path(f).extension() == ".csv") CHECK(slurp(f).rfind("# config_digest=00000000deadbeef\n", 0) == 0);
        auto scatter = slurp(dir / "scatter_linear.csv");
        CHECK(static_cast<std::size_t>(std::count(scatter.begin(), scatter.end(), '\n')) == 2 + r.rows.size());
        auto winners = slurp(dir / "winners_rbf.csv");
        CHECK(winners.find("number of features,additional winning feature,f1-score") != std::string::npos);

        auto back = report_from_json(nlohmann::json::parse(slurp(dir / "report.json")));
        auto dir2 = fs::temp_directory_path() / "motorid_report_test2";
        fs::remove_all(dir2);
        render_report(back, dir2.string());
        for (const auto& f : files)
            CHECK(slurp(f) == slurp(dir2 / fs::path(f).filename()));
        fs::remove_all(dir);
        fs::remove_all(dir2);
    }
    SECTION("empty traces render header-only files") {
        ExperimentReport r;
        r.config_digest = "abc";
        r.traces.emplace_back(Kernel::linear, SelectionTrace{});
        auto dir = fs::temp_directory_path() / "motorid_report_empty";
        fs::remove_all(dir);
        render_report(r, dir.string());
        CHECK(slurp(dir / "scatter_linear.csv") == "# config_digest=abc\nmotor_id,mech_type,label,feature_1,feature_2\n");
        CHECK(slurp(dir / "results.csv") == "# config_digest=abc\nkernel,k,feature_added,f1_mean,f1_std\n");
        fs::remove_all(dir);
    }
    SECTION("malformed report json") {
        CHECK_THROWS_AS(report_from_json(nlohmann::json::parse("{\"protocol\": 3}")), ParseError);
    }
}

TEST_CASE("feature table round trip") {
    auto c = toy_corpus(1, 8, 4, 10);
    std::stringstream buf;
    write_feature_table(buf, c, "d1");
    auto back = read_feature_table(buf);
    CHECK(back.features == c.features);
    CHECK(back.motor_ids == c.motor_ids);
    CHECK(back.mech_types == c.mech_types);
    CHECK(back.event_files == c.event_files);
    CHECK(back.feature_names == c.feature_names);
    std::istringstream bad("a,b\n1,2\n");
    CHECK_THROWS_AS(read_feature_table(bad), ParseError);
}

TEST_CASE("build_corpus from generated events") {
    auto roster = default_roster(11);
    std::vector<EventRecord> records;
    for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t e = 0; e < 2; ++e) records.push_back(make_corpus_event(roster[m], m, e, 11).record);
    auto a = build_corpus(records, {}, {}, {}, 1);
    auto b = build_corpus(records, {}, {}, {}, 3);
    CHECK(a.size() == 4);
    CHECK(a.features.cols() == 173);
    CHECK(a.features == b.features);
    CHECK(a.motor_ids[0] == roster[0].motor_id);
}
