#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "motorid/ml.hpp"

using namespace motorid;
using Catch::Approx;

namespace {

struct Dataset {
    Matrix x;
    std::vector<int> y;
};

Dataset blobs(std::size_t per_class, const std::vector<std::array<double, 2>>& centers, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    Dataset d{Matrix(per_class * centers.size(), 2), {}};
    std::size_t r = 0;
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t k = 0; k < per_class; ++k, ++r) {
            d.x(r, 0) = centers[c][0] + g(rng);
            d.x(r, 1) = centers[c][1] + g(rng);
            d.y.push_back(static_cast<int>(c));
        }
    return d;
}

Dataset xor_set(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Dataset d{Matrix(n, 2), {}};
    for (std::size_t r = 0; r < n; ++r) {
        double a = u(rng), b = u(rng);
        d.x(r, 0) = a;
        d.x(r, 1) = b;
        d.y.push_back((a > 0) == (b > 0) ? 1 : 0);
    }
    return d;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t ok = 0;
    for (std::size_t k = 0; k < a.size(); ++k) ok += a[k] == b[k];
    return static_cast<double>(ok) / static_cast<double>(a.size());
}

/// f1_c = 2 tp / (2 tp + fp + fn), averaged over classes.
double f1_oracle(const ConfusionMatrix& cm) {
    double s = 0.0;
    for (std::size_t c = 0; c < cm.k; ++c) {
        double tp = static_cast<double>(cm.at(c, c)), fp = 0.0, fn = 0.0;
        for (std::size_t o = 0; o < cm.k; ++o)
            if (o != c) fp += static_cast<double>(cm.at(o, c)), fn += static_cast<double>(cm.at(c, o));
        if (tp > 0.0) s += 2.0 * tp / (2.0 * tp + fp + fn);
    }
    return s / static_cast<double>(cm.k);
}

} // namespace

TEST_CASE("min-max scaler") {
    auto m = Matrix::from_rows({{0, 10, 7}, {5, 20, 7}, {10, 30, 7}});
    auto b = fit_scaler(m);
    auto s = apply_scaler(b, m);
    const double expect[3][3] = {{0, 0, 0.5}, {0.5, 0.5, 0.5}, {1, 1, 0.5}};
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(s(r, c) == Approx(expect[r][c]).margin(1e-15));

    auto probe = Matrix::from_rows({{20, 0, 9}});
    auto p = apply_scaler(b, probe);
    CHECK(p(0, 0) == Approx(2.0)); // unclamped
    CHECK(p(0, 1) == Approx(-0.5));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    Matrix r(30, 5);
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t j = 0; j < 5; ++j) r(i, j) = u(rng);
    auto rb = fit_scaler(r);
    auto back = invert_scaler(rb, apply_scaler(rb, r));
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(std::abs(back(i, j) - r(i, j)) <= 1e-12 * std::max(1.0, std::abs(r(i, j))));
            double v = apply_scaler(rb, r)(i, j);
            CHECK((v >= 0.0 && v <= 1.0));
        }
}

TEST_CASE("balanced class weights") {
    std::vector<int> y{0, 0, 0, 1};
    auto w = balanced_weights(y);
    CHECK(w.weight_of(0) == Approx(4.0 / 6.0));
    CHECK(w.weight_of(1) == Approx(2.0));

    // 376 events over 18 classes, one class of 8
    std::vector<int> big;
    for (int c = 0; c < 16; ++c)
        for (int k = 0; k < 22; ++k) big.push_back(c);
    for (int k = 0; k < 16; ++k) big.push_back(16);
    for (int k = 0; k < 8; ++k) big.push_back(17);
    REQUIRE(big.size() == 376);
    auto wb = balanced_weights(big);
    CHECK(wb.weight_of(17) == Approx(376.0 / (18.0 * 8.0)));

    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> labels;
        std::uniform_int_distribution<int> cls(0, 6);
        for (int k = 0; k < 200; ++k) labels.push_back(cls(rng));
        auto wr = balanced_weights(labels);
        double s = 0.0;
        for (std::size_t c = 0; c < wr.classes.size(); ++c) s += wr.weights[c] * static_cast<double>(wr.counts[c]);
        CHECK(s == Approx(200.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(w.weight_of(5), ConfigError);
}

TEST_CASE("separable blobs are classified perfectly by every kernel") {
    auto d = blobs(30, {{0.0, 0.0}, {1.0, 1.0}}, 0.08, 3);
    auto s = apply_scaler(fit_scaler(d.x), d.x);
    for (auto k : {Kernel::linear, Kernel::poly3, Kernel::rbf}) {
        SvmParams p;
        p.kernel = k;
        p.C = 10.0;
        if (k == Kernel::poly3) p.coef0 = 1.0;
        auto m = svm_train(s, d.y, p);
        CHECK(m.converged);
        CHECK(accuracy(svm_predict(m, s), d.y) == 1.0);
    }
}

TEST_CASE("XOR needs a nonlinear kernel") {
    auto d = xor_set(200, 4);
    auto s = apply_scaler(fit_scaler(d.x), d.x);
    SvmParams rbf{Kernel::rbf, 100.0, 10.0};
    SvmParams lin{Kernel::linear, 1.0};
    CHECK(accuracy(svm_predict(svm_train(s, d.y, rbf), s), d.y) >= 0.95);
    CHECK(accuracy(svm_predict(svm_train(s, d.y, lin), s), d.y) <= 0.80);
}

TEST_CASE("three classes: prediction equals the majority of pairwise decisions") {
    auto d = blobs(25, {{0, 0}, {1, 0}, {0.5, 1}}, 0.25, 5);
    auto s = apply_scaler(fit_scaler(d.x), d.x);
    SvmParams p{Kernel::rbf, 5.0};
    auto m = svm_train(s, d.y, p);
    REQUIRE(m.pairs.size() == 3);
    auto pred = svm_predict(m, s);
    for (std::size_t r = 0; r < s.rows(); ++r) {
        auto dec = decision_values(m, s.row(r));
        int votes[3] = {0, 0, 0};
        for (std::size_t k = 0; k < 3; ++k) ++votes[dec[k] > 0.0 ? m.pairs[k].first : m.pairs[k].second];
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (votes[c] > votes[best]) best = c;
        CHECK(pred[r] == m.classes[static_cast<std::size_t>(best)]);
    }
    CHECK(accuracy(pred, d.y) > 0.8);
}

TEST_CASE("unit weights equal omitted weights") {
    auto d = blobs(20, {{0, 0}, {0.6, 0.4}}, 0.3, 6);
    auto s = apply_scaler(fit_scaler(d.x), d.x);
    SvmParams p{Kernel::rbf, 2.0};
    auto unit = unit_weights(d.y);
    auto a = svm_train(s, d.y, p);
    auto b = svm_train(s, d.y, p, &unit);
    CHECK(svm_predict(a, s) == svm_predict(b, s));
    CHECK(a.pairs[0].coef == b.pairs[0].coef);
    CHECK(a.pairs[0].rho == b.pairs[0].rho);
}

TEST_CASE("balanced weights move the boundary towards the majority class") {
    auto d = blobs(60, {{0, 0}}, 0.3, 7);
    auto minority = blobs(6, {{0.7, 0.7}}, 0.3, 8);
    Matrix x(66, 2);
    std::vector<int> y;
    for (std::size_t r = 0; r < 60; ++r) x(r, 0) = d.x(r, 0), x(r, 1) = d.x(r, 1), y.push_back(0);
    for (std::size_t r = 0; r < 6; ++r) x(60 + r, 0) = minority.x(r, 0), x(60 + r, 1) = minority.x(r, 1), y.push_back(1);
    auto s = apply_scaler(fit_scaler(x), x);
    SvmParams p{Kernel::linear, 1.0};
    auto w = balanced_weights(y);
    auto plain = svm_predict(svm_train(s, y, p), s);
    auto bal = svm_predict(svm_train(s, y, p, &w), s);
    auto recall1 = [&](const std::vector<int>& pr) {
        int tp = 0;
        for (std::size_t r = 60; r < 66; ++r) tp += pr[r] == 1;
        return tp;
    };
    CHECK(recall1(bal) >= recall1(plain));
}

TEST_CASE("macro f1") {
    ConfusionMatrix cm(2);
    cm.counts = {5, 1, 2, 4};
    CHECK(macro_f1(cm) == Approx((10.0 / 13.0 + 8.0 / 11.0) / 2.0).epsilon(1e-12));

    ConfusionMatrix diag(4);
    for (std::size_t c = 0; c < 4; ++c) diag.at(c, c) = 3 + c;
    CHECK(macro_f1(diag) == 1.0);

    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> n(0, 12);
    for (int trial = 0; trial < 50; ++trial) {
        ConfusionMatrix r(4);
        for (auto& v : r.counts) v = n(rng);
        CHECK(macro_f1(r) == Approx(f1_oracle(r)).epsilon(1e-12));
        std::array<std::size_t, 4> perm{0, 1, 2, 3};
        std::shuffle(perm.begin(), perm.end(), rng);
        ConfusionMatrix q(4);
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b) q.at(perm[a], perm[b]) = r.at(a, b);
        CHECK(macro_f1(q) == Approx(macro_f1(r)).epsilon(1e-12));
        CHECK(macro_f1(r) >= 0.0);
        CHECK(macro_f1(r) <= 1.0);
    }
}

TEST_CASE("predictions are invariant under a per-feature affine map with a refitted scaler") {
    auto d = blobs(30, {{0, 0}, {1, 0.3}, {0.2, 1}}, 0.3, 10);
    Matrix t = d.x;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        t(r, 0) = 3.5 * t(r, 0) - 2.0;
        t(r, 1) = 0.01 * t(r, 1) + 100.0;
    }
    for (auto k : {Kernel::linear, Kernel::poly3, Kernel::rbf}) {
        SvmParams p;
        p.kernel = k;
        p.C = 3.0;
        auto a = svm_predict(svm_train(apply_scaler(fit_scaler(d.x), d.x), d.y, p), apply_scaler(fit_scaler(d.x), d.x));
        auto b = svm_predict(svm_train(apply_scaler(fit_scaler(t), t), d.y, p), apply_scaler(fit_scaler(t), t));
        CHECK(a == b);
    }
}

TEST_CASE("model file round trip") {
    auto d = blobs(15, {{0, 0}, {1, 0}, {0, 1}}, 0.2, 11);
    TrainedModel tm;
    tm.scaler = fit_scaler(d.x);
    auto s = apply_scaler(tm.scaler, d.x);
    auto w = balanced_weights(d.y);
    tm.svm = svm_train(s, d.y, SvmParams{Kernel::rbf, 4.0}, &w);
    tm.feature_names = {"h03_p5", "lambda_abs"};
    tm.class_names = {"M01", "M02", "M03"};
    std::stringstream buf;
    write_model(buf, tm);
    auto back = read_model(buf);
    CHECK(back.feature_names == tm.feature_names);
    CHECK(back.class_names == tm.class_names);
    CHECK(back.scaler.min == tm.scaler.min);
    CHECK(back.svm.support_vectors == tm.svm.support_vectors);
    CHECK(svm_predict(back.svm, s) == svm_predict(tm.svm, s));
    for (std::size_t r = 0; r < s.rows(); ++r) CHECK(decision_values(back.svm, s.row(r)) == decision_values(tm.svm, s.row(r)));

    std::istringstream junk("not a model\n");
    CHECK_THROWS_AS(read_model(junk), ParseError);
}

TEST_CASE("training needs two classes") {
    auto m = Matrix::from_rows({{0.0}, {1.0}});
    std::vector<int> y{3, 3};
    CHECK_THROWS_AS(svm_train(m, y, {}), ConfigError);
}

TEST_CASE("kernel values") {
    std::vector<double> a{1, 2}, b{3, -1};
    SvmParams lin{Kernel::linear};
    CHECK(kernel_value(lin, 0.5, a, b) == 1.0);
    SvmParams poly{Kernel::poly3};
    poly.coef0 = 1.0;
    CHECK(kernel_value(poly, 0.5, a, b) == Approx(std::pow(0.5 * 1.0 + 1.0, 3)));
    SvmParams rbf{Kernel::rbf};
    CHECK(kernel_value(rbf, 0.5, a, b) == Approx(std::exp(-0.5 * 13.0)));
    CHECK(parse_kernel("rbf") == Kernel::rbf);
    CHECK_THROWS_AS(parse_kernel("sigmoid"), ConfigError);
}
