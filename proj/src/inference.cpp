#include "stabsel/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stabsel/errors.hpp"

namespace stabsel {

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw NumericError("betacf: continued fraction did not converge");
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw ArgumentError("regularized_incomplete_beta: a, b must be > 0");
    if (x < 0.0 || x > 1.0) throw ArgumentError("regularized_incomplete_beta: x must be in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int df) {
    if (df < 1) throw ArgumentError("student_t_two_sided_p: df must be >= 1");
    if (!std::isfinite(t)) throw NumericError("student_t_two_sided_p: nonfinite t");
    const double nu = static_cast<double>(df);
    const double x = nu / (nu + t * t);
    double p = regularized_incomplete_beta(nu / 2.0, 0.5, x);
    // keep within (0, 1]
    return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

std::pair<std::vector<double>, std::vector<double>> paired_t_map(const Matrix& diffs) {
    const std::size_t n = diffs.rows, p = diffs.cols;
    if (n < 2) throw ArgumentError("paired_t_map: need at least 2 samples");
    std::vector<double> t(p, 0.0), pv(p, 1.0);
    for (std::size_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += diffs(i, j);
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = diffs(i, j) - mean;
            ss += d * d;
        }
        const double var = ss / static_cast<double>(n - 1);
        if (var <= 0.0) continue; // zero-variance convention: t = 0, p = 1
        t[j] = mean / std::sqrt(var / static_cast<double>(n));
        pv[j] = student_t_two_sided_p(t[j], static_cast<int>(n) - 1);
    }
    return {std::move(t), std::move(pv)};
}

std::vector<std::uint8_t> bonferroni(const std::vector<double>& p_values, double q) {
    if (q <= 0.0 || q >= 1.0) throw ArgumentError("bonferroni: q must be in (0,1)");
    std::vector<std::uint8_t> flags(p_values.size(), 0);
    if (p_values.empty()) return flags;
    const double threshold = q / static_cast<double>(p_values.size());
    for (std::size_t j = 0; j < p_values.size(); ++j) flags[j] = p_values[j] <= threshold;
    return flags;
}

std::vector<std::uint8_t> bh_fdr(const std::vector<double>& p_values, double q) {
    if (q <= 0.0 || q >= 1.0) throw ArgumentError("bh_fdr: q must be in (0,1)");
    const std::size_t n = p_values.size();
    std::vector<std::uint8_t> flags(n, 0);
    if (n == 0) return flags;
    std::vector<double> sorted = p_values;
    std::sort(sorted.begin(), sorted.end());
    double cutoff = -1.0;
    for (std::size_t i = n; i >= 1; --i) {
        if (sorted[i - 1] <= static_cast<double>(i) / static_cast<double>(n) * q) {
            cutoff = sorted[i - 1];
            break;
        }
    }
    if (cutoff < 0.0) return flags;
    for (std::size_t j = 0; j < n; ++j) flags[j] = p_values[j] <= cutoff;
    return flags;
}

std::vector<double> anova_f_map(const Matrix& X, const std::vector<int>& y) {
    const std::size_t n = X.rows, p = X.cols;
    if (y.size() != n) throw ShapeError("anova_f_map: label count != row count");
    std::size_t n1 = 0, n2 = 0;
    for (int v : y)
        (v > 0 ? n1 : n2) += 1;
    if (n1 == 0 || n2 == 0) throw DegenerateLabels("anova_f_map: both classes required");
    if (n < 3) throw ArgumentError("anova_f_map: need n >= 3");

    std::vector<double> f(p, 0.0);
    std::vector<double> m1(p, 0.0), m2(p, 0.0), ss(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = X.row(i);
        std::vector<double>& m = y[i] > 0 ? m1 : m2;
        for (std::size_t j = 0; j < p; ++j) m[j] += row[j];
    }
    for (std::size_t j = 0; j < p; ++j) {
        m1[j] /= static_cast<double>(n1);
        m2[j] /= static_cast<double>(n2);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = X.row(i);
        const std::vector<double>& m = y[i] > 0 ? m1 : m2;
        for (std::size_t j = 0; j < p; ++j) {
            const double d = row[j] - m[j];
            ss[j] += d * d;
        }
    }
    const double inv_pool = 1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2);
    for (std::size_t j = 0; j < p; ++j) {
        const double within = ss[j] / static_cast<double>(n - 2);
        if (within <= 0.0) continue; // identical groups => F = 0
        const double diff = m1[j] - m2[j];
        f[j] = diff * diff / (within * inv_pool);
    }
    return f;
}

std::vector<std::int32_t> anova_screen(const Matrix& X, const std::vector<int>& y, std::size_t n_keep) {
    const std::vector<double> f = anova_f_map(X, y);
    n_keep = std::min(n_keep, f.size());
    std::vector<std::int32_t> idx(f.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&f](std::int32_t a, std::int32_t b) { return f[static_cast<std::size_t>(a)] > f[static_cast<std::size_t>(b)]; });
    idx.resize(n_keep);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<std::int32_t> anova_screen_alpha(const Matrix& X, const std::vector<int>& y, double alpha) {
    if (alpha <= 0.0 || alpha >= 1.0) throw ArgumentError("anova_screen_alpha: alpha must be in (0,1)");
    const std::vector<double> f = anova_f_map(X, y);
    const int df = static_cast<int>(X.rows) - 2;
    std::vector<std::int32_t> out;
    for (std::size_t j = 0; j < f.size(); ++j) {
        // two-group F(1, n-2) equals t^2 with n-2 df
        const double p = student_t_two_sided_p(std::sqrt(f[j]), df);
        if (p < alpha) out.push_back(static_cast<std::int32_t>(j));
    }
    return out;
}

namespace {

InferenceReport make_report(const Matrix& diffs, const std::vector<std::int32_t>& indices, double q) {
    InferenceReport report;
    report.q = q;
    report.tested_indices = indices;
    if (indices.empty()) {
        report.empty_selection = true;
        return report;
    }
    Matrix sub(diffs.rows, indices.size());
    for (std::size_t i = 0; i < diffs.rows; ++i) {
        const double* src = diffs.row(i);
        double* dst = sub.row(i);
        for (std::size_t k = 0; k < indices.size(); ++k) dst[k] = src[static_cast<std::size_t>(indices[k])];
    }
    auto [t, p] = paired_t_map(sub);
    report.t_stats = std::move(t);
    report.p_values = std::move(p);
    const auto fwer = bonferroni(report.p_values, q);
    const auto fdr = bh_fdr(report.p_values, q);
    report.n_detect_fwer = static_cast<int>(std::count(fwer.begin(), fwer.end(), std::uint8_t{1}));
    report.n_detect_fdr = static_cast<int>(std::count(fdr.begin(), fdr.end(), std::uint8_t{1}));
    report.rate_fwer = static_cast<double>(report.n_detect_fwer) / static_cast<double>(indices.size());
    report.rate_fdr = static_cast<double>(report.n_detect_fdr) / static_cast<double>(indices.size());
    report.qq = qq_series(report.p_values);
    return report;
}

} // namespace

ScreenedAnalysis screened_inference(const Matrix& target_diffs, const std::vector<std::int32_t>& selection,
                                    double q) {
    for (std::int32_t j : selection)
        if (j < 0 || static_cast<std::size_t>(j) >= target_diffs.cols)
            throw ArgumentError("screened_inference: selection index out of range");
    ScreenedAnalysis out;
    out.selection = make_report(target_diffs, selection, q);
    std::vector<std::int32_t> all(target_diffs.cols);
    std::iota(all.begin(), all.end(), 0);
    out.all = make_report(target_diffs, all, q);
    return out;
}

std::vector<std::pair<double, double>> qq_series(const std::vector<double>& p_values) {
    if (p_values.empty()) throw ArgumentError("qq_series: empty input");
    std::vector<double> sorted = p_values;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    std::vector<std::pair<double, double>> out;
    out.reserve(sorted.size());
    for (std::size_t i = 1; i <= sorted.size(); ++i)
        out.emplace_back(-std::log10((static_cast<double>(i) - 0.5) / n), -std::log10(sorted[i - 1]));
    return out;
}

} // namespace stabsel
