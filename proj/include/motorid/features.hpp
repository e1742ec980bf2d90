#ifndef MOTORID_FEATURES_HPP
#define MOTORID_FEATURES_HPP

// The 173-feature catalog computed from a preprocessed turn-on event.
//
// Canonical order (counts in brackets):
//   exponential decay constants [4]  lambda_{max,min,abs,power}
//   linear slope constants      [4]  slope_{max,min,abs,power}
//   peak values                 [20] peak_max_pP, peak_min_pP, relpeak_max_pP, relpeak_min_pP
//   energy                      [10] energy_pP, relenergy_pP
//   energy sums                 [10] energysum_pP, relenergysum_pP
//   harmonic magnitudes         [100] hNN_pP, period-major, NN = 1..20
//   total harmonic distortion   [5]  thd_pP
//   local-extrema flags         [10] extrema_pPa / extrema_pPb (half-periods)
//   inflection flags            [10] inflection_pPa / inflection_pPb
// P runs over the mains periods 2..6 after switch-on.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "motorid/transient.hpp"

namespace motorid {

enum class PeakVariant { max, min, abs, power };

struct PeakSeries {
    std::vector<double> times; // s, relative to the event
    std::vector<double> values;
};

struct FeatureConfig {
    double extrema_prominence = 0.01; // fraction of the period peak
    std::size_t smoothing_width = 5;  // moving average before the second difference
    double inflection_band = 0.1;     // |i| below this fraction of the period peak is ignored
};

inline constexpr std::size_t kFeatureCount = 173;
inline constexpr std::size_t kHarmonics = 20;

struct FeatureCategory {
    const char* name;
    std::size_t count;
};

inline constexpr std::array<FeatureCategory, 9> kFeatureCategories{{
    {"exponential decay constant", 4},
    {"linear slope constant", 4},
    {"peak values", 20},
    {"energy", 10},
    {"energy sum", 10},
    {"harmonic magnitudes", 100},
    {"total harmonic distortion", 5},
    {"local extrema flags", 10},
    {"inflection flags", 10},
}};

struct FeatureVector {
    std::vector<double> values;
    /// Degenerate sub-computations (zero divisors); the values are still defined.
    std::vector<std::string> flags;
};

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        const char* variants[] = {"max", "min", "abs", "power"};
        for (auto v : variants) n.push_back(std::string("lambda_") + v);
        for (auto v : variants) n.push_back(std::string("slope_") + v);
        auto per_period = [&](const std::string& stem) {
            for (int p = 2; p <= 6; ++p) n.push_back(stem + "_p" + std::to_string(p));
        };
        per_period("peak_max");
        per_period("peak_min");
        per_period("relpeak_max");
        per_period("relpeak_min");
        per_period("energy");
        per_period("relenergy");
        per_period("energysum");
        per_period("relenergysum");
        for (int p = 2; p <= 6; ++p)
            for (int h = 1; h <= 20; ++h) {
                char buf[16];
                std::snprintf(buf, sizeof buf, "h%02d_p%d", h, p);
                n.emplace_back(buf);
            }
        per_period("thd");
        for (const char* stem : {"extrema", "inflection"})
            for (int p = 2; p <= 6; ++p)
                for (char half : {'a', 'b'}) n.push_back(std::string(stem) + "_p" + std::to_string(p) + half);
        return n;
    }();
    return names;
}

/// Index of a canonical feature name, or -1.
inline int feature_index(std::string_view name) {
    const auto& n = feature_names();
    auto it = std::find(n.begin(), n.end(), name);
    return it == n.end() ? -1 : static_cast<int>(it - n.begin());
}

// ---------------------------------------------------------------------------
// Peaks and curve fits
// ---------------------------------------------------------------------------

inline PeakSeries extract_peaks(const TurnOnEvent& e, PeakVariant variant) {
    PeakSeries out;
    auto take = [&](std::size_t p, const std::vector<double>& x, std::size_t b, std::size_t end, bool want_max,
                    bool absolute) {
        std::size_t best = b;
        auto val = [&](std::size_t j) { return absolute ? std::abs(x[j]) : x[j]; };
        for (std::size_t j = b + 1; j < end; ++j)
            if (want_max ? val(j) > val(best) : val(j) < val(best)) best = j;
        out.times.push_back(e.time_of(p, best));
        out.values.push_back(val(best));
    };
    for (std::size_t p = 0; p < TurnOnEvent::kPeriods; ++p) {
        const auto& cur = e.periods[p];
        switch (variant) {
        case PeakVariant::max: take(p, cur, 0, cur.size(), true, false); break;
        case PeakVariant::min: take(p, cur, 0, cur.size(), false, false); break;
        case PeakVariant::abs:
            take(p, cur, 0, e.mid_index(p), true, true);
            take(p, cur, e.mid_index(p), cur.size(), true, true);
            break;
        case PeakVariant::power:
            take(p, e.power_periods[p], 0, e.mid_index(p), true, false);
            take(p, e.power_periods[p], e.mid_index(p), cur.size(), true, false);
            break;
        }
    }
    return out;
}

/// Ordinary least-squares slope of values against times.
inline double fit_linear(const PeakSeries& p) {
    const auto n = p.times.size();
    if (n < 2) return 0.0;
    double tm = 0.0, vm = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        tm += p.times[k];
        vm += p.values[k];
    }
    tm /= static_cast<double>(n);
    vm /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxy += (p.times[k] - tm) * (p.values[k] - vm);
        sxx += (p.times[k] - tm) * (p.times[k] - tm);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

struct ExponentialFit {
    double amplitude = 0.0; // at the first peak time
    double lambda = 0.0;    // 1/s
    double offset = 0.0;
    double cost = 0.0;      // sum of squared residuals
    bool converged = false;
};

namespace detail {

inline double exp_cost(const PeakSeries& p, double a, double lambda, double c) {
    double s = 0.0;
    const double t0 = p.times.front();
    for (std::size_t k = 0; k < p.times.size(); ++k) {
        double r = a * std::exp(-lambda * (p.times[k] - t0)) + c - p.values[k];
        s += r * r;
    }
    return s;
}

/// Least-squares a, c for fixed lambda, and d(cost)/d(lambda) there.
struct Profile {
    double a = 0.0, c = 0.0, grad = 0.0;
    bool ok = false;
};

inline Profile exp_profile(const PeakSeries& p, double lambda) {
    Profile out;
    const std::size_t n = p.times.size();
    const double t0 = p.times.front();
    double se = 0.0, see = 0.0, sv = 0.0, sev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double e = std::exp(-lambda * (p.times[k] - t0));
        se += e, see += e * e, sv += p.values[k], sev += e * p.values[k];
    }
    const double N = static_cast<double>(n);
    const double det = N * see - se * se;
    if (!(std::abs(det) > 1e-300)) return out;
    out.a = (N * sev - se * sv) / det;
    out.c = (sv - out.a * se) / N;
    for (std::size_t k = 0; k < n; ++k) {
        double tau = p.times[k] - t0;
        double e = std::exp(-lambda * tau);
        out.grad += 2.0 * (out.a * e + out.c - p.values[k]) * (-out.a * tau * e);
    }
    out.ok = std::isfinite(out.grad);
    return out;
}

/// Solves the 3x3 system A x = b by Gaussian elimination with partial pivoting.
inline bool solve3(std::array<std::array<double, 3>, 3> A, std::array<double, 3> b, std::array<double, 3>& x) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (!(std::abs(A[piv][col]) > 0.0)) return false;
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < 3; ++r) {
            double f = A[r][col] / A[col][col];
            for (int c = col; c < 3; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    for (int r = 2; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < 3; ++c) s -= A[r][c] * x[c];
        x[r] = s / A[r][r];
    }
    return true;
}

} // namespace detail

/// Levenberg-Marquardt fit of v(t) = a*exp(-lambda*(t - t_first)) + c.
/// The time shift leaves lambda unchanged and makes `a` the excess at the
/// first peak. Flat, non-decaying or non-converging data yield lambda = 0.
inline ExponentialFit fit_exponential_model(const PeakSeries& p, int max_iterations = 500) {
    ExponentialFit fit;
    const auto n = p.times.size();
    if (n < 4) return fit;
    const double t0 = p.times.front();
    const double first = p.values.front(), last = p.values.back();
    auto [lo, hi] = std::minmax_element(p.values.begin(), p.values.end());
    const double span = *hi - *lo;
    if (!(span > 1e-12 * std::max(1.0, std::abs(*hi)))) return fit;

    double a = first - last, c = last;
    double lambda = 0.0;
    double r = (p.values[0] - last) / (p.values[1] - last);
    if (r > 1.0 && std::isfinite(r) && p.times[1] > p.times[0]) lambda = std::log(r) / (p.times[1] - p.times[0]);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) lambda = 1.0 / std::max(p.times.back() - t0, 1e-9);

    double cost = detail::exp_cost(p, a, lambda, c);
    double mu = 1e-3;
    for (int it = 0; it < max_iterations; ++it) {
        std::array<std::array<double, 3>, 3> JtJ{};
        std::array<double, 3> Jtr{};
        for (std::size_t k = 0; k < n; ++k) {
            double tau = p.times[k] - t0;
            double e = std::exp(-lambda * tau);
            double res = a * e + c - p.values[k];
            std::array<double, 3> J{e, -a * tau * e, 1.0};
            for (int i = 0; i < 3; ++i) {
                Jtr[i] += J[i] * res;
                for (int j = 0; j < 3; ++j) JtJ[i][j] += J[i] * J[j];
            }
        }
        double grad = std::max({std::abs(Jtr[0]), std::abs(Jtr[1]), std::abs(Jtr[2])});
        if (grad < 1e-15 * std::max(1.0, span) || cost < 1e-30) {
            fit.converged = true;
            break;
        }
        bool improved = false;
        while (mu < 1e12) {
            auto A = JtJ;
            for (int i = 0; i < 3; ++i) A[i][i] += mu * std::max(JtJ[i][i], 1e-12);
            std::array<double, 3> step{};
            if (!detail::solve3(A, {-Jtr[0], -Jtr[1], -Jtr[2]}, step)) {
                mu *= 10.0;
                continue;
            }
            double na = a + step[0], nl = lambda + step[1], nc = c + step[2];
            double ncost = detail::exp_cost(p, na, nl, nc);
            if (std::isfinite(ncost) && ncost < cost) {
                double rel = std::abs(step[1]) / std::max(std::abs(lambda), 1e-12);
                double drop = cost - ncost;
                a = na, lambda = nl, c = nc, cost = ncost;
                mu = std::max(mu * 0.3, 1e-12);
                improved = true;
                if (rel < 1e-12 || drop <= 1e-14 * cost) fit.converged = true;
                break;
            }
            mu *= 10.0;
        }
        if (!improved) {
            // no descent direction left: a (possibly flat) minimum
            fit.converged = true;
            break;
        }
        if (fit.converged) break;
    }
    // secant on the profile gradient: pins lambda to the stationary point
    // rather than to wherever the cost stopped decreasing
    if (fit.converged && lambda > 0.0 && std::isfinite(lambda)) {
        double l0 = lambda, l1 = lambda * (1.0 + 1e-6);
        auto g0 = detail::exp_profile(p, l0), g1 = detail::exp_profile(p, l1);
        for (int it = 0; it < 60 && g0.ok && g1.ok && g1.grad != g0.grad; ++it) {
            double l2 = l1 - g1.grad * (l1 - l0) / (g1.grad - g0.grad);
            if (!(l2 > 0.0) || !std::isfinite(l2) || std::abs(l2 - lambda) > 0.01 * lambda) break;
            l0 = l1, g0 = g1;
            l1 = l2, g1 = detail::exp_profile(p, l1);
            if (std::abs(l1 - l0) <= 1e-15 * l1) break;
        }
        if (g1.ok) {
            double polished = detail::exp_cost(p, g1.a, l1, g1.c);
            if (std::isfinite(polished) && polished <= cost * (1.0 + 1e-9) + 1e-300)
                a = g1.a, c = g1.c, lambda = l1, cost = polished;
        }
    }
    fit.amplitude = a;
    fit.offset = c;
    fit.cost = cost;
    fit.lambda = lambda;
    // a decay already complete at the second peak is not resolved by the samples
    const double resolved = std::exp(-lambda * (p.times[1] - t0));
    if (!fit.converged || !(lambda > 0.0) || !std::isfinite(lambda) || resolved < 1e-6) fit.lambda = 0.0;
    return fit;
}

inline double fit_exponential(const PeakSeries& p) { return fit_exponential_model(p).lambda; }

// ---------------------------------------------------------------------------
// Peak and energy features
// ---------------------------------------------------------------------------

/// 5 maxima, 5 minima, then both divided by the maximum of mains period 3.
inline std::vector<double> peak_features(const TurnOnEvent& e, std::vector<std::string>* flags = nullptr) {
    auto mx = extract_peaks(e, PeakVariant::max).values;
    auto mn = extract_peaks(e, PeakVariant::min).values;
    std::vector<double> out;
    out.insert(out.end(), mx.begin(), mx.end());
    out.insert(out.end(), mn.begin(), mn.end());
    const double divisor = mx[1];
    if (divisor == 0.0 && flags) flags->push_back("period-3 maximum is zero");
    for (std::size_t k = 0; k < 10; ++k) out.push_back(divisor != 0.0 ? out[k] / divisor : 0.0);
    return out;
}

/// Energy of one resampled power period by the closed trapezoid rule. The
/// period starts and ends on a current zero crossing, so the closing sample is
/// taken equal to the opening one.
inline double period_energy(std::span<const double> power, double duration) {
    const double dt = duration / static_cast<double>(power.size());
    double s = 0.0;
    for (std::size_t j = 0; j < power.size(); ++j) {
        double next = j + 1 < power.size() ? power[j + 1] : power[0];
        s += 0.5 * (power[j] + next);
    }
    return s * dt;
}

/// Per-period energies, their values relative to period 6, cumulative sums
/// from period 2, and those relative to period 6 (5 values each).
inline std::vector<double> energy_features(const TurnOnEvent& e, std::vector<std::string>* flags = nullptr) {
    std::array<double, TurnOnEvent::kPeriods> en{}, cum{};
    for (std::size_t p = 0; p < TurnOnEvent::kPeriods; ++p) {
        en[p] = period_energy(e.power_periods[p], e.period_duration[p]);
        cum[p] = en[p] + (p ? cum[p - 1] : 0.0);
    }
    const double ref = en.back();
    if (ref == 0.0 && flags) flags->push_back("period-6 energy is zero");
    auto rel = [&](double v) { return ref != 0.0 ? v / ref : 0.0; };
    std::vector<double> out;
    for (double v : en) out.push_back(v);
    for (double v : en) out.push_back(rel(v));
    for (double v : cum) out.push_back(v);
    for (double v : cum) out.push_back(rel(v));
    return out;
}

// ---------------------------------------------------------------------------
// Harmonics
// ---------------------------------------------------------------------------

namespace detail {

/// Recursive mixed-radix decimation-in-time FFT for any length; prime
/// factors are handled by direct butterflies of that radix.
inline void fft_recursive(std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    if (n <= 1) return;
    std::size_t radix = n;
    for (std::size_t f = 2; f * f <= n; ++f)
        if (n % f == 0) {
            radix = f;
            break;
        }
    const std::size_t m = n / radix;
    std::vector<std::vector<std::complex<double>>> sub(radix, std::vector<std::complex<double>>(m));
    for (std::size_t q = 0; q < radix; ++q)
        for (std::size_t k = 0; k < m; ++k) sub[q][k] = x[k * radix + q];
    if (m > 1)
        for (auto& s : sub) fft_recursive(s);
    const double w = -2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t q = 0; q < radix; ++q) {
            std::size_t e = (q * k) % n;
            acc += sub[q][k % m] * std::polar(1.0, w * static_cast<double>(e));
        }
        x[k] = acc;
    }
}

} // namespace detail

inline std::vector<std::complex<double>> fft(std::span<const double> x) {
    std::vector<std::complex<double>> c(x.begin(), x.end());
    detail::fft_recursive(c);
    return c;
}

/// |X_n| for n = 1..count of one period's discrete Fourier transform.
inline std::vector<double> harmonic_magnitudes(std::span<const double> period, std::size_t count = kHarmonics) {
    if (count > period.size() / 2) throw ConfigError("too many harmonics for the period length");
    auto spec = fft(period);
    std::vector<double> out(count);
    for (std::size_t n = 1; n <= count; ++n) out[n - 1] = std::abs(spec[n]);
    return out;
}

/// 100 relative harmonic magnitudes (period-major) followed by 5 THD values
/// (|I2| + ... + |I20|) / |I1|.
inline std::vector<double> harmonic_features(const TurnOnEvent& e, std::vector<std::string>* flags = nullptr) {
    std::vector<double> rel, thd;
    for (std::size_t p = 0; p < TurnOnEvent::kPeriods; ++p) {
        auto mag = harmonic_magnitudes(e.periods[p], kHarmonics);
        const double fundamental = mag[0];
        if (!(fundamental > 0.0)) {
            if (flags) flags->push_back("zero fundamental in period " + std::to_string(p + 2));
            rel.insert(rel.end(), kHarmonics, 0.0);
            thd.push_back(0.0);
            continue;
        }
        double sum = 0.0;
        for (std::size_t n = 0; n < kHarmonics; ++n) {
            rel.push_back(mag[n] / fundamental);
            if (n) sum += mag[n];
        }
        thd.push_back(sum / fundamental);
    }
    rel.insert(rel.end(), thd.begin(), thd.end());
    return rel;
}

// ---------------------------------------------------------------------------
// Shape flags
// ---------------------------------------------------------------------------

namespace detail {

/// Local maxima of y[b, e) whose topographic prominence reaches `min_prom`.
inline std::size_t count_prominent_maxima(std::span<const double> y, double min_prom) {
    std::size_t count = 0;
    const std::size_t n = y.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(y[i] > y[i - 1])) continue;
        // plateau: advance to its end
        std::size_t j = i;
        while (j + 1 < n && y[j + 1] == y[i]) ++j;
        if (j + 1 >= n || !(y[j + 1] < y[i])) {
            i = j;
            continue;
        }
        double left_min = y[i];
        std::size_t l = i;
        while (l > 0 && y[l - 1] <= y[i]) left_min = std::min(left_min, y[--l]);
        double right_min = y[j];
        std::size_t r = j;
        while (r + 1 < n && y[r + 1] <= y[i]) right_min = std::min(right_min, y[++r]);
        double prominence = y[i] - std::max(left_min, right_min);
        if (prominence >= min_prom) ++count;
        i = j;
    }
    return count;
}

} // namespace detail

/// 10 local-extrema flags then 10 inflection flags, one per half-period.
inline std::vector<double> shape_flags(const TurnOnEvent& e, const FeatureConfig& cfg = {}) {
    std::vector<double> extrema, inflect;
    for (std::size_t p = 0; p < TurnOnEvent::kPeriods; ++p) {
        const auto& x = e.periods[p];
        const std::size_t n = x.size();
        double amp = 0.0;
        for (double v : x) amp = std::max(amp, std::abs(v));

        // circular moving average and its second difference
        std::vector<double> smooth(n), d2(n);
        const auto w = static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, cfg.smoothing_width));
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::ptrdiff_t o = -(w / 2); o < w - w / 2; ++o) {
                auto idx = (static_cast<std::ptrdiff_t>(j) + o + static_cast<std::ptrdiff_t>(n)) %
                           static_cast<std::ptrdiff_t>(n);
                s += x[static_cast<std::size_t>(idx)];
            }
            smooth[j] = s / static_cast<double>(w);
        }
        for (std::size_t j = 0; j < n; ++j)
            d2[j] = smooth[(j + n - 1) % n] - 2.0 * smooth[j] + smooth[(j + 1) % n];

        const std::size_t mid = e.mid_index(p);
        for (int half = 0; half < 2; ++half) {
            std::size_t b = half ? mid : 0, end = half ? n : mid;
            if (!(amp > 0.0)) {
                extrema.push_back(0.0);
                inflect.push_back(0.0);
                continue;
            }
            std::vector<double> y(x.begin() + static_cast<std::ptrdiff_t>(b),
                                  x.begin() + static_cast<std::ptrdiff_t>(end));
            if (half) // canonical polarity: second half-period is negative
                for (double& v : y) v = -v;
            auto maxima = detail::count_prominent_maxima(y, cfg.extrema_prominence * amp);
            extrema.push_back(maxima > 1 ? 1.0 : 0.0);

            bool found = false;
            double prev = 0.0;
            for (std::size_t j = b; j < end && !found; ++j) {
                if (std::abs(x[j]) < cfg.inflection_band * amp) {
                    prev = 0.0;
                    continue;
                }
                if (d2[j] == 0.0) continue;
                if (prev != 0.0 && (prev < 0.0) != (d2[j] < 0.0)) found = true;
                prev = d2[j];
            }
            inflect.push_back(found ? 1.0 : 0.0);
        }
    }
    extrema.insert(extrema.end(), inflect.begin(), inflect.end());
    return extrema;
}

// ---------------------------------------------------------------------------
// Full catalog
// ---------------------------------------------------------------------------

inline FeatureVector extract_all(const TurnOnEvent& e, const FeatureConfig& cfg = {}) {
    FeatureVector fv;
    fv.values.reserve(kFeatureCount);
    const PeakVariant variants[] = {PeakVariant::max, PeakVariant::min, PeakVariant::abs, PeakVariant::power};
    std::array<PeakSeries, 4> series;
    for (std::size_t k = 0; k < 4; ++k) series[k] = extract_peaks(e, variants[k]);
    for (const auto& s : series) fv.values.push_back(fit_exponential(s));
    for (const auto& s : series) fv.values.push_back(fit_linear(s));
    auto append = [&](const std::vector<double>& v) { fv.values.insert(fv.values.end(), v.begin(), v.end()); };
    append(peak_features(e, &fv.flags));
    append(energy_features(e, &fv.flags));
    append(harmonic_features(e, &fv.flags));
    append(shape_flags(e, cfg));
    return fv;
}

} // namespace motorid

#endif
