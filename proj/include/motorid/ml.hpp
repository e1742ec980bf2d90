#ifndef MOTORID_ML_HPP
#define MOTORID_ML_HPP

// Min-max scaling, class-weighted one-vs-one soft-margin SVM (linear, cubic
// polynomial and RBF kernels) and confusion-matrix metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "motorid/error.hpp"
#include "motorid/text_io.hpp"

namespace motorid {

/// Dense row-major matrix of feature values.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols_) throw ConfigError("ragged feature rows");
            std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    /// Copy restricted to the given columns, in that order.
    Matrix select_columns(std::span<const std::size_t> columns) const {
        Matrix m(rows_, columns.size());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < columns.size(); ++c) m(r, c) = (*this)(r, columns[c]);
        return m;
    }

    Matrix select_rows(std::span<const std::size_t> rows) const {
        Matrix m(rows.size(), cols_);
        for (std::size_t r = 0; r < rows.size(); ++r) std::copy(row(rows[r]).begin(), row(rows[r]).end(), m.row(r).begin());
        return m;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

struct ScalerBounds {
    std::vector<double> min;
    std::vector<double> max;
};

inline ScalerBounds fit_scaler(const Matrix& rows) {
    if (rows.rows() == 0) throw ConfigError("fit_scaler needs at least one row");
    ScalerBounds b{std::vector<double>(rows.row(0).begin(), rows.row(0).end()),
                   std::vector<double>(rows.row(0).begin(), rows.row(0).end())};
    for (std::size_t r = 1; r < rows.rows(); ++r)
        for (std::size_t c = 0; c < rows.cols(); ++c) {
            b.min[c] = std::min(b.min[c], rows(r, c));
            b.max[c] = std::max(b.max[c], rows(r, c));
        }
    return b;
}

/// (x - min) / (max - min) per column, unclamped; constant columns map to 0.5.
inline double scale_value(const ScalerBounds& b, std::size_t c, double x) {
    double range = b.max[c] - b.min[c];
    return range > 0.0 ? (x - b.min[c]) / range : 0.5;
}

inline Matrix apply_scaler(const ScalerBounds& b, const Matrix& rows) {
    if (rows.cols() != b.min.size()) throw ConfigError("scaler dimensionality mismatch");
    Matrix out(rows.rows(), rows.cols());
    for (std::size_t r = 0; r < rows.rows(); ++r)
        for (std::size_t c = 0; c < rows.cols(); ++c) out(r, c) = scale_value(b, c, rows(r, c));
    return out;
}

inline Matrix invert_scaler(const ScalerBounds& b, const Matrix& scaled) {
    Matrix out(scaled.rows(), scaled.cols());
    for (std::size_t r = 0; r < scaled.rows(); ++r)
        for (std::size_t c = 0; c < scaled.cols(); ++c) {
            double range = b.max[c] - b.min[c];
            out(r, c) = range > 0.0 ? b.min[c] + scaled(r, c) * range : b.min[c];
        }
    return out;
}

// ---------------------------------------------------------------------------
// Class weights
// ---------------------------------------------------------------------------

struct ClassWeights {
    std::vector<int> classes; // ascending
    std::vector<double> weights;
    std::vector<std::size_t> counts;

    double weight_of(int label) const {
        auto it = std::lower_bound(classes.begin(), classes.end(), label);
        if (it == classes.end() || *it != label) throw ConfigError("label without a class weight");
        return weights[static_cast<std::size_t>(it - classes.begin())];
    }
};

/// weight_c = N / (K * n_c).
inline ClassWeights balanced_weights(std::span<const int> labels) {
    if (labels.empty()) throw ConfigError("balanced_weights needs at least one label");
    std::map<int, std::size_t> counts;
    for (int l : labels) ++counts[l];
    ClassWeights w;
    const double total = static_cast<double>(labels.size());
    const double K = static_cast<double>(counts.size());
    for (auto [cls, n] : counts) {
        w.classes.push_back(cls);
        w.counts.push_back(n);
        w.weights.push_back(total / (K * static_cast<double>(n)));
    }
    return w;
}

inline ClassWeights unit_weights(std::span<const int> labels) {
    auto w = balanced_weights(labels);
    std::fill(w.weights.begin(), w.weights.end(), 1.0);
    return w;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

enum class Kernel { linear, poly3, rbf };

inline const char* to_string(Kernel k) {
    switch (k) {
    case Kernel::linear: return "linear";
    case Kernel::poly3: return "poly3";
    case Kernel::rbf: return "rbf";
    }
    return "linear";
}

inline Kernel parse_kernel(std::string_view s) {
    s = text::trim(s);
    if (s == "linear") return Kernel::linear;
    if (s == "poly3" || s == "poly") return Kernel::poly3;
    if (s == "rbf") return Kernel::rbf;
    throw ConfigError("unknown kernel '" + std::string(s) + "'");
}

struct SvmParams {
    Kernel kernel = Kernel::linear;
    double C = 1.0;
    double gamma = 0.0; // <= 0: 1 / n_features
    int degree = 3;
    double coef0 = 0.0;
    double tolerance = 1e-3;
    std::size_t max_iterations = 100000;

    double effective_gamma(std::size_t n_features) const {
        return gamma > 0.0 ? gamma : 1.0 / static_cast<double>(std::max<std::size_t>(1, n_features));
    }
};

/// Kernel value from the dot product and squared distance of two rows.
inline double kernel_from_parts(const SvmParams& p, double gamma, double dot, double sqdist) {
    switch (p.kernel) {
    case Kernel::linear: return dot;
    case Kernel::poly3: {
        double base = gamma * dot + p.coef0;
        double r = 1.0;
        for (int k = 0; k < p.degree; ++k) r *= base;
        return r;
    }
    case Kernel::rbf: return std::exp(-gamma * sqdist);
    }
    return dot;
}

inline double kernel_value(const SvmParams& p, double gamma, std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        double d = a[k] - b[k];
        sq += d * d;
    }
    return kernel_from_parts(p, gamma, dot, sq);
}

/// Square kernel matrix over a set of rows addressed by global index.
struct KernelMatrix {
    std::size_t n = 0;
    std::vector<double> values;
    double operator()(std::size_t i, std::size_t j) const noexcept { return values[i * n + j]; }
};

inline KernelMatrix compute_kernel_matrix(const SvmParams& p, const Matrix& rows) {
    const double gamma = p.effective_gamma(rows.cols());
    KernelMatrix K{rows.rows(), std::vector<double>(rows.rows() * rows.rows())};
    for (std::size_t i = 0; i < K.n; ++i)
        for (std::size_t j = i; j < K.n; ++j) {
            double v = kernel_value(p, gamma, rows.row(i), rows.row(j));
            K.values[i * K.n + j] = v;
            K.values[j * K.n + i] = v;
        }
    return K;
}

// ---------------------------------------------------------------------------
// Binary solver
// ---------------------------------------------------------------------------

struct BinarySolution {
    std::vector<double> alpha;
    double rho = 0.0;
    std::size_t iterations = 0;
    bool converged = true;
};

/// Sequential minimal optimization with second-order working-set selection
/// for min 1/2 a'Qa - e'a, y'a = 0, 0 <= a_t <= C_t, Q_tu = y_t y_u K_tu.
/// `idx` maps local samples to rows of K. Stops when the maximal KKT
/// violation falls below `tolerance` or after `max_iterations`.
inline BinarySolution solve_binary(const KernelMatrix& K, std::span<const std::size_t> idx, std::span<const int> y,
                                   std::span<const double> C, double tolerance, std::size_t max_iterations) {
    const std::size_t l = idx.size();
    constexpr double tau = 1e-12;
    BinarySolution sol;
    sol.alpha.assign(l, 0.0);
    std::vector<double> G(l, -1.0);
    auto& a = sol.alpha;
    auto Q = [&](std::size_t i, std::size_t j) { return static_cast<double>(y[i] * y[j]) * K(idx[i], idx[j]); };
    auto upper = [&](std::size_t t) { return a[t] >= C[t]; };
    auto lower = [&](std::size_t t) { return a[t] <= 0.0; };

    sol.converged = false;
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity(), gmax2 = gmax;
        std::ptrdiff_t i = -1, j = -1;
        for (std::size_t t = 0; t < l; ++t) {
            if (y[t] == 1) {
                if (!upper(t) && -G[t] >= gmax) gmax = -G[t], i = static_cast<std::ptrdiff_t>(t);
            } else if (!lower(t) && G[t] >= gmax) {
                gmax = G[t], i = static_cast<std::ptrdiff_t>(t);
            }
        }
        double obj_min = std::numeric_limits<double>::infinity();
        if (i >= 0) {
            auto ui = static_cast<std::size_t>(i);
            double Kii = K(idx[ui], idx[ui]);
            for (std::size_t t = 0; t < l; ++t) {
                double Kit = K(idx[ui], idx[t]), Ktt = K(idx[t], idx[t]);
                if (y[t] == 1) {
                    if (lower(t)) continue;
                    gmax2 = std::max(gmax2, G[t]);
                    double diff = gmax + G[t];
                    if (diff > 0.0) {
                        double quad = Kii + Ktt - 2.0 * y[ui] * Kit;
                        double obj = -(diff * diff) / (quad > 0.0 ? quad : tau);
                        if (obj <= obj_min) obj_min = obj, j = static_cast<std::ptrdiff_t>(t);
                    }
                } else {
                    if (upper(t)) continue;
                    gmax2 = std::max(gmax2, -G[t]);
                    double diff = gmax - G[t];
                    if (diff > 0.0) {
                        double quad = Kii + Ktt + 2.0 * y[ui] * Kit;
                        double obj = -(diff * diff) / (quad > 0.0 ? quad : tau);
                        if (obj <= obj_min) obj_min = obj, j = static_cast<std::ptrdiff_t>(t);
                    }
                }
            }
        }
        sol.iterations = iter;
        if (i < 0 || j < 0 || gmax + gmax2 < tolerance) {
            sol.converged = true;
            break;
        }
        auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
        const double Ci = C[ui], Cj = C[uj];
        const double old_i = a[ui], old_j = a[uj];
        const double Qij = Q(ui, uj), Qii = Q(ui, ui), Qjj = Q(uj, uj);
        if (y[ui] != y[uj]) {
            double quad = Qii + Qjj + 2.0 * Qij;
            if (quad <= 0.0) quad = tau;
            double delta = (-G[ui] - G[uj]) / quad;
            double diff = a[ui] - a[uj];
            a[ui] += delta;
            a[uj] += delta;
            if (diff > 0.0) {
                if (a[uj] < 0.0) a[uj] = 0.0, a[ui] = diff;
            } else if (a[ui] < 0.0) {
                a[ui] = 0.0, a[uj] = -diff;
            }
            if (diff > Ci - Cj) {
                if (a[ui] > Ci) a[ui] = Ci, a[uj] = Ci - diff;
            } else if (a[uj] > Cj) {
                a[uj] = Cj, a[ui] = Cj + diff;
            }
        } else {
            double quad = Qii + Qjj - 2.0 * Qij;
            if (quad <= 0.0) quad = tau;
            double delta = (G[ui] - G[uj]) / quad;
            double sum = a[ui] + a[uj];
            a[ui] -= delta;
            a[uj] += delta;
            if (sum > Ci) {
                if (a[ui] > Ci) a[ui] = Ci, a[uj] = sum - Ci;
            } else if (a[uj] < 0.0) {
                a[uj] = 0.0, a[ui] = sum;
            }
            if (sum > Cj) {
                if (a[uj] > Cj) a[uj] = Cj, a[ui] = sum - Cj;
            } else if (a[ui] < 0.0) {
                a[ui] = 0.0, a[uj] = sum;
            }
        }
        const double di = a[ui] - old_i, dj = a[uj] - old_j;
        for (std::size_t t = 0; t < l; ++t) G[t] += Q(ui, t) * di + Q(uj, t) * dj;
        sol.iterations = iter + 1;
    }

    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t nr_free = 0;
    for (std::size_t t = 0; t < l; ++t) {
        double yG = y[t] * G[t];
        if (upper(t)) {
            if (y[t] == -1) ub = std::min(ub, yG);
            else lb = std::max(lb, yG);
        } else if (lower(t)) {
            if (y[t] == 1) ub = std::min(ub, yG);
            else lb = std::max(lb, yG);
        } else {
            ++nr_free;
            sum_free += yG;
        }
    }
    sol.rho = nr_free > 0 ? sum_free / static_cast<double>(nr_free) : (ub + lb) / 2.0;
    return sol;
}

// ---------------------------------------------------------------------------
// One-vs-one multi-class on a precomputed kernel matrix
// ---------------------------------------------------------------------------

struct PairSolution {
    std::size_t first, second;     // class positions; `first` receives +1
    std::vector<std::size_t> rows; // rows of the kernel matrix with nonzero coefficients
    std::vector<double> coef;      // alpha * y
    double rho = 0.0;
};

struct OvoSolution {
    std::vector<int> classes; // ascending
    std::vector<PairSolution> pairs; // (0,1), (0,2), ..., (K-2,K-1)
    bool converged = true;
};

/// Trains one binary SVM per class pair on the rows `train` of `K`; the
/// penalty of each sample is C times the weight of its class.
inline OvoSolution ovo_train(const KernelMatrix& K, std::span<const std::size_t> train, std::span<const int> labels,
                             const SvmParams& params, const ClassWeights& weights) {
    OvoSolution out;
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t k = 0; k < train.size(); ++k) by_class[labels[k]].push_back(train[k]);
    if (by_class.size() < 2) throw ConfigError("svm training needs at least two classes");
    std::vector<std::vector<std::size_t>> members;
    for (auto& [cls, rows] : by_class) {
        out.classes.push_back(cls);
        members.push_back(std::move(rows));
    }
    const std::size_t nc = out.classes.size();
    std::vector<std::size_t> idx;
    std::vector<int> y;
    std::vector<double> C;
    for (std::size_t a = 0; a < nc; ++a)
        for (std::size_t b = a + 1; b < nc; ++b) {
            idx.clear(), y.clear(), C.clear();
            const double Ca = params.C * weights.weight_of(out.classes[a]);
            const double Cb = params.C * weights.weight_of(out.classes[b]);
            for (auto r : members[a]) idx.push_back(r), y.push_back(1), C.push_back(Ca);
            for (auto r : members[b]) idx.push_back(r), y.push_back(-1), C.push_back(Cb);
            auto sol = solve_binary(K, idx, y, C, params.tolerance, params.max_iterations);
            out.converged = out.converged && sol.converged;
            PairSolution ps{a, b, {}, {}, sol.rho};
            for (std::size_t t = 0; t < idx.size(); ++t)
                if (sol.alpha[t] > 0.0) {
                    ps.rows.push_back(idx[t]);
                    ps.coef.push_back(sol.alpha[t] * y[t]);
                }
            out.pairs.push_back(std::move(ps));
        }
    return out;
}

/// Pairwise voting; ties go to the lowest class position.
inline int vote(const std::vector<int>& classes, const std::vector<PairSolution>& pairs,
                std::span<const double> decision) {
    std::vector<int> votes(classes.size(), 0);
    for (std::size_t k = 0; k < pairs.size(); ++k) ++votes[decision[k] > 0.0 ? pairs[k].first : pairs[k].second];
    auto best = std::max_element(votes.begin(), votes.end()); // first maximum
    return classes[static_cast<std::size_t>(best - votes.begin())];
}

/// Prediction for row `r` of K, a row outside the training set is fine.
inline int ovo_predict(const OvoSolution& s, const KernelMatrix& K, std::size_t r, std::vector<double>& decision) {
    decision.resize(s.pairs.size());
    for (std::size_t k = 0; k < s.pairs.size(); ++k) {
        const auto& ps = s.pairs[k];
        double sum = 0.0;
        for (std::size_t t = 0; t < ps.rows.size(); ++t) sum += ps.coef[t] * K(r, ps.rows[t]);
        decision[k] = sum - ps.rho;
    }
    return vote(s.classes, s.pairs, decision);
}

// ---------------------------------------------------------------------------
// Stand-alone model
// ---------------------------------------------------------------------------

struct SvmModel {
    SvmParams params;
    double gamma = 0.0; // resolved
    std::size_t n_features = 0;
    std::vector<int> classes;
    std::vector<double> class_weights;
    Matrix support_vectors;
    std::vector<PairSolution> pairs; // rows index support_vectors
    bool converged = true;
};

/// Trains on scaled rows. Training is deterministic: `seed` is accepted for
/// interface stability and does not influence the solver.
inline SvmModel svm_train(const Matrix& rows, std::span<const int> labels, const SvmParams& params,
                          const ClassWeights* weights = nullptr, std::uint64_t seed = 0) {
    (void)seed;
    if (rows.rows() != labels.size()) throw ConfigError("row and label counts differ");
    auto unit = unit_weights(labels);
    const ClassWeights& w = weights ? *weights : unit;
    auto K = compute_kernel_matrix(params, rows);
    std::vector<std::size_t> all(rows.rows());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    auto sol = ovo_train(K, all, labels, params, w);

    SvmModel m;
    m.params = params;
    m.gamma = params.effective_gamma(rows.cols());
    m.n_features = rows.cols();
    m.classes = sol.classes;
    for (int c : m.classes) m.class_weights.push_back(w.weight_of(c));
    m.converged = sol.converged;
    std::map<std::size_t, std::size_t> sv_pos;
    for (auto& ps : sol.pairs)
        for (auto r : ps.rows) sv_pos.emplace(r, 0);
    std::vector<std::size_t> sv_rows;
    for (auto& [r, pos] : sv_pos) {
        pos = sv_rows.size();
        sv_rows.push_back(r);
    }
    m.support_vectors = rows.select_rows(sv_rows);
    for (auto& ps : sol.pairs) {
        for (auto& r : ps.rows) r = sv_pos[r];
        m.pairs.push_back(std::move(ps));
    }
    return m;
}

inline std::vector<double> decision_values(const SvmModel& m, std::span<const double> x) {
    if (x.size() != m.n_features) throw ConfigError("feature dimensionality mismatch");
    std::vector<double> kv(m.support_vectors.rows());
    for (std::size_t s = 0; s < kv.size(); ++s) kv[s] = kernel_value(m.params, m.gamma, m.support_vectors.row(s), x);
    std::vector<double> dec(m.pairs.size());
    for (std::size_t k = 0; k < m.pairs.size(); ++k) {
        double sum = 0.0;
        for (std::size_t t = 0; t < m.pairs[k].rows.size(); ++t) sum += m.pairs[k].coef[t] * kv[m.pairs[k].rows[t]];
        dec[k] = sum - m.pairs[k].rho;
    }
    return dec;
}

inline std::vector<int> svm_predict(const SvmModel& m, const Matrix& rows) {
    if (rows.cols() != m.n_features) throw ConfigError("feature dimensionality mismatch");
    std::vector<int> out;
    out.reserve(rows.rows());
    for (std::size_t r = 0; r < rows.rows(); ++r) out.push_back(vote(m.classes, m.pairs, decision_values(m, rows.row(r))));
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::size_t> counts; // row = true class, column = predicted

    explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0) {}

    std::size_t& at(std::size_t truth, std::size_t pred) { return counts[truth * k + pred]; }
    std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
    std::size_t total() const {
        std::size_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Unweighted mean of per-class f1; a class with precision + recall = 0
/// scores 0.
inline double macro_f1(const ConfusionMatrix& cm) {
    if (cm.k == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t c = 0; c < cm.k; ++c) {
        double tp = static_cast<double>(cm.at(c, c));
        double row = 0.0, col = 0.0;
        for (std::size_t o = 0; o < cm.k; ++o) {
            row += static_cast<double>(cm.at(c, o));
            col += static_cast<double>(cm.at(o, c));
        }
        double precision = col > 0.0 ? tp / col : 0.0;
        double recall = row > 0.0 ? tp / row : 0.0;
        if (precision + recall > 0.0) sum += 2.0 * precision * recall / (precision + recall);
    }
    return sum / static_cast<double>(cm.k);
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

/// Persisted model: scaler bounds and selected features with the SVM.
struct TrainedModel {
    ScalerBounds scaler;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names; // parallel to svm.classes
    SvmModel svm;
};

namespace detail {
inline std::string join_doubles(std::span<const double> v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) s.push_back(' ');
        s += text::format_double(v[k]);
    }
    return s;
}
inline std::vector<double> split_doubles(std::string_view s) {
    std::vector<double> out;
    for (auto tok : text::split(text::trim(s), ' ')) {
        if (tok.empty()) continue;
        auto v = text::parse_double(tok);
        if (!v) throw ParseError("malformed number in model file", 0);
        out.push_back(*v);
    }
    return out;
}
} // namespace detail

inline constexpr const char* kModelFormat = "motorid-model 1";

inline void write_model(std::ostream& out, const TrainedModel& m) {
    const auto& s = m.svm;
    out << kModelFormat << '\n';
    out << "kernel=" << to_string(s.params.kernel) << '\n';
    out << "C=" << text::format_double(s.params.C) << '\n';
    out << "gamma=" << text::format_double(s.gamma) << '\n';
    out << "degree=" << s.params.degree << '\n';
    out << "coef0=" << text::format_double(s.params.coef0) << '\n';
    out << "tolerance=" << text::format_double(s.params.tolerance) << '\n';
    out << "features=" << text::join(m.feature_names) << '\n';
    out << "scaler.min=" << detail::join_doubles(m.scaler.min) << '\n';
    out << "scaler.max=" << detail::join_doubles(m.scaler.max) << '\n';
    std::vector<std::string> cls;
    for (int c : s.classes) cls.push_back(std::to_string(c));
    out << "classes=" << text::join(cls) << '\n';
    out << "class_names=" << text::join(m.class_names) << '\n';
    out << "class_weights=" << detail::join_doubles(s.class_weights) << '\n';
    out << "support_vectors=" << s.support_vectors.rows() << '\n';
    for (std::size_t r = 0; r < s.support_vectors.rows(); ++r)
        out << "sv." << r << '=' << detail::join_doubles(s.support_vectors.row(r)) << '\n';
    for (const auto& p : s.pairs) {
        std::string key = "pair." + std::to_string(p.first) + '.' + std::to_string(p.second);
        out << key << ".rho=" << text::format_double(p.rho) << '\n';
        std::vector<double> rows(p.rows.begin(), p.rows.end());
        out << key << ".rows=" << detail::join_doubles(rows) << '\n';
        out << key << ".coef=" << detail::join_doubles(p.coef) << '\n';
    }
}

inline TrainedModel read_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != kModelFormat) throw ParseError("not a model file", 1);
    std::map<std::string, std::string> kv;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto v = text::trim(line);
        if (v.empty()) continue;
        auto eq = v.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value", lineno);
        kv[std::string(v.substr(0, eq))] = std::string(v.substr(eq + 1));
    }
    auto get = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw ParseError("model file lacks " + k, 0);
        return it->second;
    };
    auto num = [&](const std::string& k) {
        auto v = text::parse_double(get(k));
        if (!v) throw ParseError("malformed " + k, 0);
        return *v;
    };
    TrainedModel m;
    auto& s = m.svm;
    s.params.kernel = parse_kernel(get("kernel"));
    s.params.C = num("C");
    s.gamma = num("gamma");
    s.params.gamma = s.gamma;
    s.params.degree = static_cast<int>(num("degree"));
    s.params.coef0 = num("coef0");
    s.params.tolerance = num("tolerance");
    for (auto f : text::split(get("features")))
        if (!f.empty()) m.feature_names.emplace_back(f);
    s.n_features = m.feature_names.size();
    m.scaler.min = detail::split_doubles(get("scaler.min"));
    m.scaler.max = detail::split_doubles(get("scaler.max"));
    for (auto c : text::split(get("classes"))) {
        auto v = text::parse_int(c);
        if (!v) throw ParseError("malformed classes", 0);
        s.classes.push_back(static_cast<int>(*v));
    }
    for (auto c : text::split(get("class_names"))) m.class_names.emplace_back(c);
    s.class_weights = detail::split_doubles(get("class_weights"));
    auto nsv = static_cast<std::size_t>(num("support_vectors"));
    s.support_vectors = Matrix(nsv, s.n_features);
    for (std::size_t r = 0; r < nsv; ++r) {
        auto row = detail::split_doubles(get("sv." + std::to_string(r)));
        if (row.size() != s.n_features) throw ParseError("support vector dimensionality mismatch", 0);
        std::copy(row.begin(), row.end(), s.support_vectors.row(r).begin());
    }
    for (std::size_t a = 0; a < s.classes.size(); ++a)
        for (std::size_t b = a + 1; b < s.classes.size(); ++b) {
            std::string key = "pair." + std::to_string(a) + '.' + std::to_string(b);
            PairSolution p{a, b, {}, {}, num(key + ".rho")};
            for (double r : detail::split_doubles(get(key + ".rows"))) p.rows.push_back(static_cast<std::size_t>(r));
            p.coef = detail::split_doubles(get(key + ".coef"));
            if (p.coef.size() != p.rows.size()) throw ParseError("pair coefficient count mismatch", 0);
            s.pairs.push_back(std::move(p));
        }
    return m;
}

} // namespace motorid

#endif
