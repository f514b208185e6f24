#ifndef STABSEL_INFERENCE_HPP
#define STABSEL_INFERENCE_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "stabsel/matrix.hpp"

namespace stabsel {

struct InferenceReport {
    std::vector<std::int32_t> tested_indices;
    std::vector<double> t_stats;
    std::vector<double> p_values; // two-sided, in (0, 1]
    double q = 0.05;
    int n_detect_fwer = 0;
    int n_detect_fdr = 0;
    double rate_fwer = 0.0; // detections / tested
    double rate_fdr = 0.0;
    std::vector<std::pair<double, double>> qq; // (-log10 expected, -log10 observed)
    bool empty_selection = false;
};

// Two-sided p-value of a Student-t statistic with df degrees of freedom,
// via the regularized incomplete beta function.
double student_t_two_sided_p(double t, int df);

// Regularized incomplete beta I_x(a, b) (continued fraction evaluation).
double regularized_incomplete_beta(double a, double b, double x);

// One-sample t-test per column of a difference matrix: t = mean/(sd/sqrt(n)),
// sd with n-1 denominator. Zero-variance columns get t = 0, p = 1.
std::pair<std::vector<double>, std::vector<double>> paired_t_map(const Matrix& diffs);

// flag_j = (p_j <= q / n_tests)
std::vector<std::uint8_t> bonferroni(const std::vector<double>& p_values, double q);

// Benjamini-Hochberg step-up at level q; ties share fate.
std::vector<std::uint8_t> bh_fdr(const std::vector<double>& p_values, double q);

// Two-group one-way ANOVA F per feature (equals the squared pooled-variance
// two-sample t); returns the n_keep features with largest F, ties broken by
// lower index.
std::vector<double> anova_f_map(const Matrix& X, const std::vector<int>& y);
std::vector<std::int32_t> anova_screen(const Matrix& X, const std::vector<int>& y, std::size_t n_keep);
std::vector<std::int32_t> anova_screen_alpha(const Matrix& X, const std::vector<int>& y, double alpha);

struct ScreenedAnalysis {
    InferenceReport selection; // tests restricted to the screened voxels
    InferenceReport all;       // companion full run over every voxel
};

// Group analysis of the target differences restricted to a frozen selection,
// with the all-voxel companion; both corrections applied with
// n_tests = |selection|.
ScreenedAnalysis screened_inference(const Matrix& target_diffs, const std::vector<std::int32_t>& selection,
                                    double q = 0.05);

// (-log10((i - 0.5)/n), -log10(p_(i))) for ascending sorted p-values.
std::vector<std::pair<double, double>> qq_series(const std::vector<double>& p_values);

} // namespace stabsel

#endif
