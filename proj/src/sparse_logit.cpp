#include "stabsel/sparse_logit.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

#include "stabsel/errors.hpp"

namespace stabsel {

namespace {

double soft_threshold(double u, double t) {
    if (u > t) return u - t;
    if (u < -t) return u + t;
    return 0.0;
}

void check_labels(const std::vector<int>& y) {
    bool pos = false, neg = false;
    for (int v : y) {
        if (v == 1) pos = true;
        else if (v == -1) neg = true;
        else throw ArgumentError("labels must be -1 or +1");
    }
    if (!pos || !neg) throw DegenerateLabels("both label classes must be present");
}

double intercept_at_zero(const std::vector<int>& y) {
    std::size_t pos = 0;
    for (int v : y) pos += (v == 1);
    return std::log(static_cast<double>(pos) / static_cast<double>(y.size() - pos));
}

#ifndef NDEBUG
double objective(const std::vector<double>& z, const std::vector<double>& w,
                 const std::vector<double>& penalty) {
    double obj = 0.0;
    for (double zi : z) obj += zi > 35.0 ? 0.0 : std::log1p(std::exp(-zi));
    for (std::size_t j = 0; j < w.size(); ++j) obj += penalty[j] * std::abs(w[j]);
    return obj;
}
#endif

} // namespace

LogitModel fit(const Matrix& X, const std::vector<int>& y, const FitConfig& config) {
    const std::size_t n = X.rows;
    const std::size_t p = X.cols;
    if (y.size() != n) throw ShapeError("fit: label count != row count");
    check_labels(y);
    if (config.lambda < 0) throw ArgumentError("fit: lambda must be >= 0");
    if (config.tol <= 0 || config.max_iter <= 0) throw ArgumentError("fit: bad tol or max_iter");
    if (!config.feature_scales.empty() && config.feature_scales.size() != p)
        throw ShapeError("fit: feature_scales length != p");
    for (double v : X.data)
        if (!std::isfinite(v)) throw NumericError("fit: nonfinite value in X");

    // column-major copy of y_i * x_ij so the per-coordinate loops are contiguous
    std::vector<double> yx(p * n);
    std::vector<double> curvature(p, 0.0); // 1/4 * ||x_j||^2
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = X.row(i);
        const double yi = y[i];
        for (std::size_t j = 0; j < p; ++j) {
            const double v = row[j];
            yx[j * n + i] = yi * v;
            curvature[j] += 0.25 * v * v;
        }
    }

    std::vector<double> penalty(p);
    for (std::size_t j = 0; j < p; ++j) {
        const double s = config.feature_scales.empty() ? 1.0 : config.feature_scales[j];
        if (s <= 0) throw ArgumentError("fit: feature scales must be positive");
        penalty[j] = config.lambda * s;
    }

    std::vector<std::int32_t> order(p);
    if (config.coord_order.empty()) {
        std::iota(order.begin(), order.end(), 0);
    } else {
        if (config.coord_order.size() != p) throw ShapeError("fit: coord_order length != p");
        order = config.coord_order;
    }

    LogitModel model;
    model.lambda = config.lambda;
    model.weights.assign(p, 0.0);
    model.intercept = intercept_at_zero(y);

    std::vector<double> z(n); // margins y_i (x_i.w + b)
    std::vector<double> q(n); // sigma(-z_i)
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = y[i] * model.intercept;
        q[i] = 1.0 / (1.0 + std::exp(z[i]));
    }

    auto update_coord = [&](std::size_t j) -> double {
        const double h = curvature[j];
        if (h <= 0.0) return 0.0; // all-zero column stays at zero
        const double* col = &yx[j * n];
        double grad = 0.0; // d loss / d w_j = -sum_i y_i x_ij q_i
        for (std::size_t i = 0; i < n; ++i) grad -= col[i] * q[i];
        const double w_old = model.weights[j];
        const double w_new = soft_threshold(h * w_old - grad, penalty[j]) / h;
        const double delta = w_new - w_old;
        if (delta != 0.0) {
            model.weights[j] = w_new;
            for (std::size_t i = 0; i < n; ++i) z[i] += col[i] * delta;
            for (std::size_t i = 0; i < n; ++i) q[i] = 1.0 / (1.0 + std::exp(z[i]));
        }
        return std::abs(delta);
    };
    auto update_intercept = [&]() -> double {
        double grad = 0.0;
        for (std::size_t i = 0; i < n; ++i) grad -= y[i] * q[i];
        const double delta = -grad / (0.25 * static_cast<double>(n));
        if (delta != 0.0) {
            model.intercept += delta;
            for (std::size_t i = 0; i < n; ++i) z[i] += y[i] * delta;
            for (std::size_t i = 0; i < n; ++i) q[i] = 1.0 / (1.0 + std::exp(z[i]));
        }
        return std::abs(delta);
    };

#ifndef NDEBUG
    double prev_obj = objective(z, model.weights, penalty);
#endif

    int sweeps = 0;
    bool converged = false;
    while (sweeps < config.max_iter && !converged) {
        // full sweep; coordinates first so the w = 0 start sees gradients
        // computed at the exact closed-form intercept (KKT at lambda_max)
        double max_delta = 0.0;
        for (std::int32_t j : order) max_delta = std::max(max_delta, update_coord(static_cast<std::size_t>(j)));
        max_delta = std::max(max_delta, update_intercept());
        ++sweeps;
#ifndef NDEBUG
        {
            const double obj = objective(z, model.weights, penalty);
            assert(obj <= prev_obj + 1e-9 * (1.0 + std::abs(prev_obj)));
            prev_obj = obj;
        }
#endif
        if (max_delta < config.tol) {
            converged = true;
            break;
        }
        // iterate on the current active set until it stabilizes
        std::vector<std::int32_t> active;
        for (std::int32_t j : order)
            if (model.weights[static_cast<std::size_t>(j)] != 0.0) active.push_back(j);
        while (sweeps < config.max_iter) {
            double d = 0.0;
            for (std::int32_t j : active) d = std::max(d, update_coord(static_cast<std::size_t>(j)));
            d = std::max(d, update_intercept());
            ++sweeps;
            if (d < config.tol) break;
        }
    }

    // The l1 objective is flat along weight splits between exactly identical
    // columns, and coordinate descent can converge anywhere on that face. Pick
    // the extreme point deterministically: move all weight in such a group to
    // the coordinate with the smallest penalty (ties: earliest in visit order),
    // which never increases the objective and leaves the margins unchanged.
    {
        std::vector<std::size_t> active;
        for (std::int32_t j : order)
            if (model.weights[static_cast<std::size_t>(j)] != 0.0) active.push_back(static_cast<std::size_t>(j));
        std::vector<bool> done(active.size(), false);
        for (std::size_t a = 0; a < active.size(); ++a) {
            if (done[a]) continue;
            std::vector<std::size_t> group{active[a]};
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                if (done[b]) continue;
                if (std::equal(&yx[active[a] * n], &yx[active[a] * n] + n, &yx[active[b] * n])) {
                    group.push_back(active[b]);
                    done[b] = true;
                }
            }
            if (group.size() < 2) continue;
            std::size_t winner = group[0];
            for (std::size_t j : group)
                if (penalty[j] < penalty[winner]) winner = j;
            double total = 0.0;
            for (std::size_t j : group) {
                total += model.weights[j];
                model.weights[j] = 0.0;
            }
            model.weights[winner] = total;
        }
    }

    model.converged = converged;
    model.n_iter = sweeps;
    return model;
}

LogitModel fit(const Dataset& dataset, const FitConfig& config) {
    return fit(dataset.X, dataset.y, config);
}

std::vector<double> decision_function(const LogitModel& model, const Matrix& X) {
    if (X.cols != model.weights.size()) throw ShapeError("decision_function: column count != p");
    std::vector<double> out(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double* row = X.row(i);
        double acc = model.intercept;
        for (std::size_t j = 0; j < X.cols; ++j) acc += row[j] * model.weights[j];
        out[i] = acc;
    }
    return out;
}

std::vector<int> predict(const LogitModel& model, const Matrix& X) {
    std::vector<double> scores = decision_function(model, X);
    std::vector<int> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= 0.0 ? 1 : -1;
    return out;
}

double lambda_max(const Matrix& X, const std::vector<int>& y, const std::vector<double>& feature_scales) {
    const std::size_t n = X.rows;
    const std::size_t p = X.cols;
    if (y.size() != n) throw ShapeError("lambda_max: label count != row count");
    check_labels(y);
    if (!feature_scales.empty() && feature_scales.size() != p)
        throw ShapeError("lambda_max: feature_scales length != p");

    const double b = intercept_at_zero(y);
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = 1.0 / (1.0 + std::exp(y[i] * b));

    double lmax = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        double grad = 0.0;
        for (std::size_t i = 0; i < n; ++i) grad -= y[i] * X(i, j) * q[i];
        const double s = feature_scales.empty() ? 1.0 : feature_scales[j];
        lmax = std::max(lmax, std::abs(grad) / s);
    }
    return lmax;
}

double lambda_max(const Dataset& dataset) { return lambda_max(dataset.X, dataset.y); }

std::vector<double> lambda_grid(double lmax, int n_points) {
    if (n_points < 1) throw ArgumentError("lambda_grid: need at least one point");
    std::vector<double> grid(static_cast<std::size_t>(n_points));
    if (lmax <= 0.0) return grid; // all zeros
    const double lo = std::log(lmax * 1e-3), hi = std::log(lmax);
    for (int i = 0; i < n_points; ++i) {
        const double t = n_points == 1 ? 0.0 : static_cast<double>(i) / (n_points - 1);
        grid[static_cast<std::size_t>(i)] = std::exp(hi + t * (lo - hi));
    }
    grid.front() = lmax; // exact endpoint
    return grid;
}

void Standardizer::fit(const Matrix& X) {
    const std::size_t n = X.rows, p = X.cols;
    if (n == 0) throw ShapeError("Standardizer::fit: empty matrix");
    mean.assign(p, 0.0);
    scale.assign(p, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = X.row(i);
        for (std::size_t j = 0; j < p; ++j) mean[j] += row[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<double> var(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = X.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            const double d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < p; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(n));
        scale[j] = sd > 0.0 ? sd : 1.0;
    }
}

Matrix Standardizer::apply(const Matrix& X) const {
    if (X.cols != mean.size()) throw ShapeError("Standardizer::apply: column mismatch");
    Matrix out(X.rows, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double* src = X.row(i);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < X.cols; ++j) dst[j] = (src[j] - mean[j]) / scale[j];
    }
    return out;
}

nlohmann::json model_to_json(const LogitModel& model, const Standardizer* standardizer) {
    nlohmann::json j;
    j["lambda"] = model.lambda;
    j["intercept"] = model.intercept;
    j["n_features"] = model.weights.size();
    auto weights = nlohmann::json::array();
    for (std::size_t k = 0; k < model.weights.size(); ++k)
        if (model.weights[k] != 0.0) weights.push_back({k, model.weights[k]});
    j["weights"] = std::move(weights);
    if (standardizer) {
        j["standardization"] = {{"mean", standardizer->mean}, {"scale", standardizer->scale}};
    }
    return j;
}

LogitModel model_from_json(const nlohmann::json& j, Standardizer* standardizer) {
    LogitModel model;
    model.lambda = j.at("lambda").get<double>();
    model.intercept = j.at("intercept").get<double>();
    model.weights.assign(j.at("n_features").get<std::size_t>(), 0.0);
    for (const auto& pair : j.at("weights"))
        model.weights.at(pair.at(0).get<std::size_t>()) = pair.at(1).get<double>();
    if (standardizer && j.contains("standardization")) {
        standardizer->mean = j["standardization"].at("mean").get<std::vector<double>>();
        standardizer->scale = j["standardization"].at("scale").get<std::vector<double>>();
    }
    return model;
}

} // namespace stabsel
