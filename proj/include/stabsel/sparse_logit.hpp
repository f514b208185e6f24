#ifndef STABSEL_SPARSE_LOGIT_HPP
#define STABSEL_SPARSE_LOGIT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "stabsel/matrix.hpp"
#include "stabsel/volume.hpp"

namespace stabsel {

struct FitConfig {
    double lambda = 0.0;
    int max_iter = 1000;   // sweeps
    double tol = 1e-6;     // max absolute coordinate update per sweep
    std::vector<double> feature_scales;    // optional; penalty on feature j is lambda * s_j
    std::vector<std::int32_t> coord_order; // optional visiting order of coordinates
};

struct LogitModel {
    std::vector<double> weights;
    double intercept = 0.0;
    double lambda = 0.0;
    bool converged = false;
    int n_iter = 0;
};

// Minimizes sum_i log(1 + exp(-y_i (x_i.w + b))) + lambda * sum_j s_j |w_j|
// with an unpenalized intercept, by cyclic coordinate descent on the
// quadratic majorization with curvature bound 1/4 and soft-thresholding.
LogitModel fit(const Matrix& X, const std::vector<int>& y, const FitConfig& config);
LogitModel fit(const Dataset& dataset, const FitConfig& config);

std::vector<double> decision_function(const LogitModel& model, const Matrix& X);
// sign of the decision value; sign(0) = +1
std::vector<int> predict(const LogitModel& model, const Matrix& X);

// Smallest lambda for which the all-zero weight vector satisfies the KKT
// conditions, evaluated at the optimal intercept log(n+/n-).
double lambda_max(const Matrix& X, const std::vector<int>& y,
                  const std::vector<double>& feature_scales = {});
double lambda_max(const Dataset& dataset);

// 30 log-spaced points over [lmax * 1e-3, lmax], descending.
std::vector<double> lambda_grid(double lmax, int n_points = 30);

// Per-feature zero-mean unit-variance scaling fitted on training data.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale; // 1.0 for constant features

    void fit(const Matrix& X);
    Matrix apply(const Matrix& X) const;
};

nlohmann::json model_to_json(const LogitModel& model, const Standardizer* standardizer = nullptr);
LogitModel model_from_json(const nlohmann::json& j, Standardizer* standardizer = nullptr);

} // namespace stabsel

#endif
