#ifndef MOTORID_EXPERIMENTS_HPP
#define MOTORID_EXPERIMENTS_HPP

// Evaluation protocols: motor discrimination with stratified k-fold CV and
// mechanical-output inference with leave-one-motor-per-class-out CV, both
// driven by greedy forward feature selection, plus report rendering.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <optional>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "motorid/error.hpp"
#include "motorid/features.hpp"
#include "motorid/ml.hpp"
#include "motorid/text_io.hpp"
#include "motorid/transient.hpp"

namespace motorid {

/// Feature table plus labels, one row per event.
struct Corpus {
    Matrix features;
    std::vector<std::string> feature_names;
    std::vector<std::string> motor_ids;
    std::vector<MechType> mech_types;
    std::vector<std::string> event_files;
    std::vector<double> order; // chronological key within a motor

    std::size_t size() const noexcept { return motor_ids.size(); }

    Corpus subset(std::span<const std::size_t> rows) const {
        Corpus c;
        c.features = features.select_rows(rows);
        c.feature_names = feature_names;
        for (auto r : rows) {
            c.motor_ids.push_back(motor_ids[r]);
            c.mech_types.push_back(mech_types[r]);
            c.event_files.push_back(event_files[r]);
            c.order.push_back(order[r]);
        }
        return c;
    }
};

inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Preprocesses and extracts every record. `event_files` names the rows
/// (empty: "event_<index>"); chronological order is the record order.
inline Corpus build_corpus(const std::vector<EventRecord>& records, std::vector<std::string> event_files = {},
                           const DetectionConfig& det = {}, const FeatureConfig& feat = {}, std::size_t jobs = 1) {
    Corpus c;
    c.feature_names = feature_names();
    std::vector<std::vector<double>> rows(records.size());
    parallel_for(records.size(), jobs,
                 [&](std::size_t k) { rows[k] = extract_all(preprocess_record(records[k], det), feat).values; });
    c.features = rows.empty() ? Matrix(0, kFeatureCount) : Matrix::from_rows(rows);
    for (std::size_t k = 0; k < records.size(); ++k) {
        c.motor_ids.push_back(records[k].motor_id);
        c.mech_types.push_back(records[k].mech_type);
        c.event_files.push_back(k < event_files.size() ? event_files[k] : "event_" + std::to_string(k));
        c.order.push_back(static_cast<double>(k));
    }
    return c;
}

/// Runs fn(0..n-1) on up to `jobs` threads; results must go to per-index slots.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
        pool.emplace_back([&] {
            for (std::size_t k; (k = next.fetch_add(1)) < n;) {
                try {
                    fn(k);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Fold plans
// ---------------------------------------------------------------------------

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct FoldPlan {
    std::vector<Fold> folds;
    std::string strategy;
    std::uint64_t seed = 0;
};

/// Shuffles each class with `seed`, concatenates the classes in label order
/// and deals the sequence round-robin onto k folds. Per-class fold counts
/// are floor or ceil of n_c / k and fold sizes differ by at most one.
inline FoldPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ProtocolError("stratified k-fold needs k >= 2");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> sequence;
    for (auto& [cls, members] : by_class) {
        if (members.size() < k)
            throw ProtocolError("class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                                " members, fewer than k = " + std::to_string(k));
        for (std::size_t i = members.size() - 1; i > 0; --i) std::swap(members[i], members[rng() % (i + 1)]);
        sequence.insert(sequence.end(), members.begin(), members.end());
    }
    FoldPlan plan{std::vector<Fold>(k), "stratified-" + std::to_string(k) + "-fold", seed};
    std::vector<std::size_t> fold_of(labels.size());
    for (std::size_t p = 0; p < sequence.size(); ++p) fold_of[sequence[p]] = p % k;
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t f = 0; f < k; ++f) (f == fold_of[i] ? plan.folds[f].test : plan.folds[f].train).push_back(i);
    return plan;
}

/// One fold per (pump, compressor, fan) motor triple: the test side holds
/// every event of the three motors, the train side everything else.
inline FoldPlan motor_holdout_splits(std::span<const std::string> motor_ids, std::span<const MechType> mech) {
    std::map<MechType, std::set<std::string>> motors;
    for (std::size_t i = 0; i < motor_ids.size(); ++i) {
        if (mech[i] == MechType::other)
            throw ProtocolError("motor " + motor_ids[i] + " has mech type 'other'; restrict the corpus first");
        motors[mech[i]].insert(motor_ids[i]);
    }
    const MechType types[] = {MechType::pump, MechType::compressor, MechType::fan};
    for (auto t : types)
        if (motors[t].empty()) throw ProtocolError(std::string("no motors of mech type ") + to_string(t));
    FoldPlan plan;
    plan.strategy = "motor-holdout";
    for (const auto& p : motors[MechType::pump])
        for (const auto& c : motors[MechType::compressor])
            for (const auto& f : motors[MechType::fan]) {
                Fold fold;
                for (std::size_t i = 0; i < motor_ids.size(); ++i) {
                    const auto& m = motor_ids[i];
                    (m == p || m == c || m == f ? fold.test : fold.train).push_back(i);
                }
                plan.folds.push_back(std::move(fold));
            }
    return plan;
}

/// Row indices keeping the chronologically first `per_motor` events of every
/// motor, in corpus order.
inline std::vector<std::size_t> equalize_events(std::span<const std::string> motor_ids, std::span<const double> order,
                                                std::size_t per_motor = 8) {
    std::map<std::string, std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < motor_ids.size(); ++i) rows[motor_ids[i]].push_back(i);
    std::vector<std::size_t> keep;
    for (auto& [motor, r] : rows) {
        if (r.size() < per_motor)
            throw ProtocolError("motor " + motor + " has " + std::to_string(r.size()) + " events, fewer than " +
                                std::to_string(per_motor));
        std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) { return order[a] < order[b]; });
        keep.insert(keep.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(per_motor));
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

// ---------------------------------------------------------------------------
// Feature-set evaluation
// ---------------------------------------------------------------------------

enum class ScalerMode { fold_local, global };

struct EvaluationResult {
    double f1_mean = 0.0;
    double f1_std = 0.0;
    std::vector<double> fold_f1;
    std::vector<ConfusionMatrix> confusions;
    bool converged = true;
};

/// Everything fixed across the candidate evaluations of one experiment:
/// the fold plan, fold-scaled features and per-fold class weights.
class EvaluationContext {
public:
    EvaluationContext(const Matrix& features, std::vector<int> labels, FoldPlan plan, SvmParams params,
                      ScalerMode mode = ScalerMode::fold_local)
        : labels_(std::move(labels)), plan_(std::move(plan)), params_(params) {
        if (features.rows() != labels_.size()) throw ConfigError("feature rows and labels differ in count");
        std::set<int> cls(labels_.begin(), labels_.end());
        classes_.assign(cls.begin(), cls.end());
        auto global = fit_scaler(features);
        for (const auto& fold : plan_.folds) {
            auto bounds = mode == ScalerMode::global ? global : fit_scaler(features.select_rows(fold.train));
            scaled_.push_back(apply_scaler(bounds, features));
            std::vector<int> train_labels;
            for (auto r : fold.train) train_labels.push_back(labels_[r]);
            weights_.push_back(balanced_weights(train_labels));
            fold_labels_.push_back(std::move(train_labels));
        }
    }

    std::size_t rows() const noexcept { return labels_.size(); }
    std::size_t feature_count() const noexcept { return scaled_.empty() ? 0 : scaled_.front().cols(); }
    const FoldPlan& plan() const noexcept { return plan_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const SvmParams& params() const noexcept { return params_; }

    /// Dot products and squared distances over `set` for fold f (N x N each).
    struct Parts {
        std::vector<double> dot, sq;
    };

    Parts parts(std::size_t f, std::span<const std::size_t> set) const {
        const auto n = rows();
        Parts p{std::vector<double>(n * n, 0.0), std::vector<double>(n * n, 0.0)};
        for (auto c : set) add_feature(p, f, c);
        return p;
    }

    void add_feature(Parts& p, std::size_t f, std::size_t c) const {
        const auto n = rows();
        const auto& X = scaled_[f];
        for (std::size_t i = 0; i < n; ++i) {
            const double xi = X(i, c);
            for (std::size_t j = 0; j < n; ++j) {
                const double xj = X(j, c);
                p.dot[i * n + j] += xi * xj;
                p.sq[i * n + j] += (xi - xj) * (xi - xj);
            }
        }
    }

    /// Train on fold f's training rows with kernel parts `base` plus the
    /// optional extra feature, and score the test rows.
    ConfusionMatrix evaluate_fold(std::size_t f, const Parts& base, std::size_t n_features,
                                  std::optional<std::size_t> extra, KernelMatrix& K, bool& converged) const {
        const auto n = rows();
        const auto& X = scaled_[f];
        const double gamma = params_.effective_gamma(n_features);
        K.n = n;
        K.values.resize(n * n);
        const auto& fold = plan_.folds[f];
        auto fill = [&](std::size_t i, std::size_t j) {
            double dot = base.dot[i * n + j], sq = base.sq[i * n + j];
            if (extra) {
                double a = X(i, *extra), b = X(j, *extra);
                dot += a * b;
                sq += (a - b) * (a - b);
            }
            K.values[i * n + j] = kernel_from_parts(params_, gamma, dot, sq);
        };
        for (auto i : fold.train)
            for (auto j : fold.train) fill(i, j);
        for (auto i : fold.test)
            for (auto j : fold.train) fill(i, j);

        auto sol = ovo_train(K, fold.train, fold_labels_[f], params_, weights_[f]);
        converged = converged && sol.converged;
        ConfusionMatrix cm(classes_.size());
        std::vector<double> decision;
        for (auto r : fold.test) {
            int pred = ovo_predict(sol, K, r, decision);
            cm.at(class_pos(labels_[r]), class_pos(pred)) += 1;
        }
        return cm;
    }

    EvaluationResult summarize(std::vector<ConfusionMatrix> cms, bool converged) const {
        EvaluationResult r;
        r.converged = converged;
        for (const auto& cm : cms) r.fold_f1.push_back(macro_f1(cm));
        double sum = 0.0;
        for (double v : r.fold_f1) sum += v;
        r.f1_mean = r.fold_f1.empty() ? 0.0 : sum / static_cast<double>(r.fold_f1.size());
        double var = 0.0;
        for (double v : r.fold_f1) var += (v - r.f1_mean) * (v - r.f1_mean);
        r.f1_std = r.fold_f1.empty() ? 0.0 : std::sqrt(var / static_cast<double>(r.fold_f1.size()));
        r.confusions = std::move(cms);
        return r;
    }

    /// Cross-validated macro-f1 of one feature set (column indices).
    EvaluationResult evaluate(std::span<const std::size_t> set) const {
        std::vector<ConfusionMatrix> cms;
        bool converged = true;
        KernelMatrix K;
        for (std::size_t f = 0; f < plan_.folds.size(); ++f)
            cms.push_back(evaluate_fold(f, parts(f, set), set.size(), std::nullopt, K, converged));
        return summarize(std::move(cms), converged);
    }

    std::size_t class_pos(int label) const {
        return static_cast<std::size_t>(std::lower_bound(classes_.begin(), classes_.end(), label) - classes_.begin());
    }
    const std::vector<int>& classes() const noexcept { return classes_; }

private:
    std::vector<int> labels_;
    std::vector<int> classes_;
    FoldPlan plan_;
    SvmParams params_;
    std::vector<Matrix> scaled_;
    std::vector<ClassWeights> weights_;
    std::vector<std::vector<int>> fold_labels_;
};

// ---------------------------------------------------------------------------
// Greedy forward selection
// ---------------------------------------------------------------------------

struct SelectionStep {
    std::size_t k = 0;
    std::size_t feature = 0;
    std::string feature_name;
    double f1_mean = 0.0;
    double f1_std = 0.0;
    std::vector<double> fold_f1;
    std::vector<ConfusionMatrix> confusions;
};

struct SelectionTrace {
    std::vector<SelectionStep> steps;
    std::size_t trainings = 0; // multi-class classifiers fitted
    bool converged = true;
    std::vector<std::array<double, 2>> scatter; // raw values of the first two winners per evaluated event

    std::vector<std::size_t> winners(std::size_t k) const {
        std::vector<std::size_t> w;
        for (std::size_t s = 0; s < std::min(k, steps.size()); ++s) w.push_back(steps[s].feature);
        return w;
    }
};

/// Adds, run by run, the candidate with the highest mean cross-validated
/// macro-f1 (ties: lowest feature index) to the winners of the earlier runs.
inline SelectionTrace greedy_select(const EvaluationContext& ctx, const std::vector<std::string>& names,
                                    std::size_t k_max = 15, std::size_t jobs = 1) {
    SelectionTrace trace;
    const std::size_t nf = ctx.feature_count();
    const std::size_t nfolds = ctx.plan().folds.size();
    std::vector<std::size_t> chosen;
    std::vector<EvaluationContext::Parts> base(nfolds);
    for (std::size_t f = 0; f < nfolds; ++f) base[f] = ctx.parts(f, chosen);

    for (std::size_t k = 1; k <= std::min(k_max, nf); ++k) {
        std::vector<std::size_t> candidates;
        for (std::size_t c = 0; c < nf; ++c)
            if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) candidates.push_back(c);
        std::vector<EvaluationResult> results(candidates.size());
        parallel_for(candidates.size(), jobs, [&](std::size_t idx) {
            std::vector<ConfusionMatrix> cms;
            bool converged = true;
            KernelMatrix K;
            for (std::size_t f = 0; f < nfolds; ++f)
                cms.push_back(ctx.evaluate_fold(f, base[f], k, candidates[idx], K, converged));
            results[idx] = ctx.summarize(std::move(cms), converged);
        });
        trace.trainings += candidates.size() * nfolds;
        std::size_t best = 0;
        for (std::size_t idx = 1; idx < candidates.size(); ++idx)
            if (results[idx].f1_mean > results[best].f1_mean) best = idx;
        for (const auto& r : results) trace.converged = trace.converged && r.converged;

        const std::size_t winner = candidates[best];
        chosen.push_back(winner);
        for (std::size_t f = 0; f < nfolds; ++f) ctx.add_feature(base[f], f, winner);
        auto& r = results[best];
        trace.steps.push_back({k, winner, winner < names.size() ? names[winner] : std::to_string(winner), r.f1_mean,
                               r.f1_std, std::move(r.fold_f1), std::move(r.confusions)});
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

enum class Protocol { motors, mech };

inline const char* to_string(Protocol p) { return p == Protocol::motors ? "motors" : "mech"; }

struct ExperimentConfig {
    Protocol protocol = Protocol::motors;
    std::vector<Kernel> kernels{Kernel::linear, Kernel::poly3, Kernel::rbf};
    std::size_t k_max = 15;
    std::size_t folds = 8;          // stratified protocol
    std::size_t events_per_motor = 8; // mech protocol equalization
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    ScalerMode scaler = ScalerMode::fold_local;
    SvmParams svm;
    std::string config_digest;
};

struct ExperimentReport {
    Protocol protocol = Protocol::motors;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string fold_strategy;
    std::size_t fold_count = 0;
    std::vector<std::string> class_names;
    std::vector<std::size_t> rows;  // corpus rows that were evaluated
    std::vector<int> labels;        // parallel to rows
    std::vector<std::string> motor_ids; // parallel to rows
    std::vector<std::string> mech_types;
    std::vector<std::pair<Kernel, SelectionTrace>> traces;
};

namespace detail {

inline ExperimentReport run_protocol(const Corpus& corpus, std::vector<std::size_t> rows, std::vector<int> labels,
                                     std::vector<std::string> class_names, FoldPlan plan, const ExperimentConfig& cfg) {
    ExperimentReport report;
    report.protocol = cfg.protocol;
    report.seed = cfg.seed;
    report.config_digest = cfg.config_digest;
    report.fold_strategy = plan.strategy;
    report.fold_count = plan.folds.size();
    report.class_names = std::move(class_names);
    auto features = corpus.features.select_rows(rows);
    for (auto kernel : cfg.kernels) {
        auto params = cfg.svm;
        params.kernel = kernel;
        EvaluationContext ctx(features, labels, plan, params, cfg.scaler);
        auto trace = greedy_select(ctx, corpus.feature_names, cfg.k_max, cfg.jobs);
        if (trace.steps.size() >= 2)
            for (std::size_t i = 0; i < rows.size(); ++i)
                trace.scatter.push_back({features(i, trace.steps[0].feature), features(i, trace.steps[1].feature)});
        report.traces.emplace_back(kernel, std::move(trace));
    }
    for (auto r : rows) {
        report.motor_ids.push_back(corpus.motor_ids[r]);
        report.mech_types.emplace_back(to_string(corpus.mech_types[r]));
    }
    report.rows = std::move(rows);
    report.labels = std::move(labels);
    return report;
}

} // namespace detail

/// Motor discrimination: one label per motor_id, stratified k-fold.
inline ExperimentReport run_motor_experiment(const Corpus& corpus, const ExperimentConfig& cfg) {
    std::set<std::string> ids(corpus.motor_ids.begin(), corpus.motor_ids.end());
    if (ids.size() < 2) throw ProtocolError("motor protocol needs at least two motors");
    std::vector<std::string> names(ids.begin(), ids.end());
    std::vector<int> labels;
    for (const auto& m : corpus.motor_ids)
        labels.push_back(static_cast<int>(std::lower_bound(names.begin(), names.end(), m) - names.begin()));
    std::vector<std::size_t> rows(corpus.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    auto plan = stratified_kfold(labels, cfg.folds, cfg.seed);
    auto c = cfg;
    c.protocol = Protocol::motors;
    return detail::run_protocol(corpus, std::move(rows), std::move(labels), std::move(names), std::move(plan), c);
}

/// Mechanical output: pump/compressor/fan events only, equalized per motor,
/// motor-holdout folds; the score is the mean over folds.
inline ExperimentReport run_mech_experiment(const Corpus& corpus, const ExperimentConfig& cfg) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        if (corpus.mech_types[i] != MechType::other) eligible.push_back(i);
    std::vector<std::string> ids;
    std::vector<double> order;
    for (auto i : eligible) ids.push_back(corpus.motor_ids[i]), order.push_back(corpus.order[i]);
    std::vector<std::size_t> rows;
    for (auto k : equalize_events(ids, order, cfg.events_per_motor)) rows.push_back(eligible[k]);

    std::vector<std::string> motor_ids;
    std::vector<MechType> mech;
    std::vector<int> labels;
    for (auto r : rows) {
        motor_ids.push_back(corpus.motor_ids[r]);
        mech.push_back(corpus.mech_types[r]);
        labels.push_back(static_cast<int>(corpus.mech_types[r]));
    }
    auto plan = motor_holdout_splits(motor_ids, mech);
    plan.seed = cfg.seed;
    auto c = cfg;
    c.protocol = Protocol::mech;
    return detail::run_protocol(corpus, std::move(rows), std::move(labels), {"pump", "compressor", "fan"},
                                std::move(plan), c);
}

// ---------------------------------------------------------------------------
// Feature table
// ---------------------------------------------------------------------------

inline void write_feature_table(std::ostream& out, const Corpus& c, const std::string& digest = {}) {
    if (!digest.empty()) out << "# config_digest=" << digest << '\n';
    out << text::join(c.feature_names) << ",motor_id,mech_type,event_file\n";
    for (std::size_t r = 0; r < c.size(); ++r) {
        for (std::size_t k = 0; k < c.features.cols(); ++k) out << text::format_double(c.features(r, k)) << ',';
        out << c.motor_ids[r] << ',' << to_string(c.mech_types[r]) << ',' << c.event_files[r] << '\n';
    }
}

inline Corpus read_feature_table(std::istream& in) {
    Corpus c;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::vector<double>> rows;
    std::size_t nfeat = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto v = text::trim(line);
        if (v.empty() || v.front() == '#') continue;
        auto fields = text::split(v);
        if (!header) {
            if (fields.size() < 4 || fields[fields.size() - 3] != "motor_id" || fields[fields.size() - 2] != "mech_type" ||
                fields.back() != "event_file")
                throw ParseError("feature table header must end with motor_id,mech_type,event_file", lineno);
            nfeat = fields.size() - 3;
            for (std::size_t k = 0; k < nfeat; ++k) c.feature_names.emplace_back(fields[k]);
            header = true;
            continue;
        }
        if (fields.size() != nfeat + 3) throw ParseError("wrong field count", lineno);
        std::vector<double> row(nfeat);
        for (std::size_t k = 0; k < nfeat; ++k) {
            auto d = text::parse_double(fields[k]);
            if (!d) throw ParseError("malformed feature value", lineno);
            row[k] = *d;
        }
        rows.push_back(std::move(row));
        c.motor_ids.emplace_back(fields[nfeat]);
        c.mech_types.push_back(parse_mech_type(fields[nfeat + 1]));
        c.event_files.emplace_back(fields[nfeat + 2]);
        c.order.push_back(static_cast<double>(c.order.size()));
    }
    if (!header) throw ParseError("feature table has no header", 0);
    c.features = rows.empty() ? Matrix(0, nfeat) : Matrix::from_rows(rows);
    return c;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ExperimentReport& r) {
    nlohmann::json j;
    j["format"] = "motorid-report 1";
    j["protocol"] = to_string(r.protocol);
    j["seed"] = r.seed;
    j["config_digest"] = r.config_digest;
    j["fold_strategy"] = r.fold_strategy;
    j["fold_count"] = r.fold_count;
    j["class_names"] = r.class_names;
    j["rows"] = r.rows;
    j["labels"] = r.labels;
    j["motor_ids"] = r.motor_ids;
    j["mech_types"] = r.mech_types;
    j["traces"] = nlohmann::json::array();
    for (const auto& [kernel, trace] : r.traces) {
        nlohmann::json t;
        t["kernel"] = to_string(kernel);
        t["trainings"] = trace.trainings;
        t["converged"] = trace.converged;
        t["scatter"] = trace.scatter;
        t["steps"] = nlohmann::json::array();
        for (const auto& s : trace.steps) {
            nlohmann::json js;
            js["k"] = s.k;
            js["feature"] = s.feature;
            js["feature_name"] = s.feature_name;
            js["f1_mean"] = s.f1_mean;
            js["f1_std"] = s.f1_std;
            js["fold_f1"] = s.fold_f1;
            auto& cms = js["confusions"] = nlohmann::json::array();
            for (const auto& cm : s.confusions) cms.push_back(cm.counts);
            t["steps"].push_back(std::move(js));
        }
        j["traces"].push_back(std::move(t));
    }
    return j;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
    try {
        ExperimentReport r;
        r.protocol = j.at("protocol").get<std::string>() == "mech" ? Protocol::mech : Protocol::motors;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_digest = j.at("config_digest").get<std::string>();
        r.fold_strategy = j.at("fold_strategy").get<std::string>();
        r.fold_count = j.at("fold_count").get<std::size_t>();
        r.class_names = j.at("class_names").get<std::vector<std::string>>();
        r.rows = j.at("rows").get<std::vector<std::size_t>>();
        r.labels = j.at("labels").get<std::vector<int>>();
        r.motor_ids = j.at("motor_ids").get<std::vector<std::string>>();
        r.mech_types = j.at("mech_types").get<std::vector<std::string>>();
        const std::size_t K = r.class_names.size();
        for (const auto& t : j.at("traces")) {
            SelectionTrace trace;
            trace.trainings = t.at("trainings").get<std::size_t>();
            trace.converged = t.at("converged").get<bool>();
            trace.scatter = t.at("scatter").get<std::vector<std::array<double, 2>>>();
            for (const auto& js : t.at("steps")) {
                SelectionStep s;
                s.k = js.at("k").get<std::size_t>();
                s.feature = js.at("feature").get<std::size_t>();
                s.feature_name = js.at("feature_name").get<std::string>();
                s.f1_mean = js.at("f1_mean").get<double>();
                s.f1_std = js.at("f1_std").get<double>();
                s.fold_f1 = js.at("fold_f1").get<std::vector<double>>();
                for (const auto& cm : js.at("confusions")) {
                    ConfusionMatrix m(K);
                    m.counts = cm.get<std::vector<std::size_t>>();
                    s.confusions.push_back(std::move(m));
                }
                trace.steps.push_back(std::move(s));
            }
            r.traces.emplace_back(parse_kernel(t.at("kernel").get<std::string>()), std::move(trace));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed report: ") + e.what(), 0);
    }
}

namespace detail {
inline std::string percent(double f1) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f %%", 100.0 * f1);
    return buf;
}
} // namespace detail

/// Writes results.csv, and per kernel winners_<kernel>.csv (number of
/// features, additional winning feature, f1-score), scatter_<kernel>.csv
/// (evaluated events along the first two winners) and confusion_<kernel>.csv.
/// Every file starts with the config digest line.
inline std::vector<std::string> render_report(const ExperimentReport& r, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    std::vector<std::string> written;
    const std::string digest_line = "# config_digest=" + r.config_digest + '\n';
    auto open = [&](const std::string& name) {
        auto path = (fs::path(out_dir) / name).string();
        written.push_back(path);
        auto out = text::open_for_write(path);
        out << digest_line;
        return out;
    };

    {
        auto out = open("results.csv");
        out << "kernel,k,feature_added,f1_mean,f1_std\n";
        for (const auto& [kernel, trace] : r.traces)
            for (const auto& s : trace.steps)
                out << to_string(kernel) << ',' << s.k << ',' << s.feature_name << ',' << text::format_double(s.f1_mean)
                    << ',' << text::format_double(s.f1_std) << '\n';
    }
    for (const auto& [kernel, trace] : r.traces) {
        const std::string kname = to_string(kernel);
        {
            auto out = open("winners_" + kname + ".csv");
            out << "number of features,additional winning feature,f1-score\n";
            for (const auto& s : trace.steps) out << s.k << ',' << s.feature_name << ',' << detail::percent(s.f1_mean) << '\n';
        }
        {
            auto out = open("scatter_" + kname + ".csv");
            if (trace.steps.size() >= 2) {
                out << "motor_id,mech_type,label," << trace.steps[0].feature_name << ',' << trace.steps[1].feature_name << '\n';
                for (std::size_t i = 0; i < trace.scatter.size(); ++i)
                    out << r.motor_ids.at(i) << ',' << r.mech_types.at(i) << ','
                        << r.class_names.at(static_cast<std::size_t>(r.labels.at(i))) << ','
                        << text::format_double(trace.scatter[i][0]) << ',' << text::format_double(trace.scatter[i][1])
                        << '\n';
            } else {
                out << "motor_id,mech_type,label,feature_1,feature_2\n";
            }
        }
        {
            auto out = open("confusion_" + kname + ".csv");
            out << "k,fold,counts\n";
            for (const auto& s : trace.steps)
                for (std::size_t f = 0; f < s.confusions.size(); ++f) {
                    out << s.k << ',' << f << ',';
                    const auto& c = s.confusions[f].counts;
                    for (std::size_t q = 0; q < c.size(); ++q) out << (q ? " " : "") << c[q];
                    out << '\n';
                }
        }
    }
    {
        auto path = (fs::path(out_dir) / "report.json").string();
        written.push_back(path);
        auto out = text::open_for_write(path);
        out << to_json(r).dump(1) << '\n';
    }
    return written;
}

} // namespace motorid

#endif
