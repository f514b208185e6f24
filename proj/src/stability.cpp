#include "stabsel/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stabsel/errors.hpp"
#include "stabsel/parallel.hpp"
#include "stabsel/rng.hpp"
#include "stabsel/sparse_logit.hpp"

namespace stabsel {

int max_recoverable_group(double tau) {
    if (tau <= 0.0) throw ArgumentError("max_recoverable_group: tau must be > 0");
    if (tau > 1.0) throw ArgumentError("max_recoverable_group: tau must be <= 1");
    // nudge past representation error so 1/0.01 lands on 100, not 99
    return static_cast<int>(std::floor(1.0 / tau + 1e-9));
}

int k_max_heuristic(int n, int p) {
    if (n < 1) throw ArgumentError("k_max_heuristic: n must be >= 1");
    if (p < 2) throw ArgumentError("k_max_heuristic: p must be >= 2");
    return static_cast<int>(std::lround(static_cast<double>(n) / std::log(static_cast<double>(p))));
}

std::vector<std::int32_t> select(const SelectionProfile& profile, double tau) {
    if (tau < 0.0 || tau > 1.0) throw ArgumentError("select: tau must be in [0,1]");
    std::vector<std::int32_t> out;
    for (std::size_t j = 0; j < profile.frequencies.size(); ++j)
        if (profile.frequencies[j] >= tau) out.push_back(static_cast<std::int32_t>(j));
    return out;
}

namespace {

// without-replacement draw of k items from pool (partial Fisher-Yates)
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_index(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

double pilot_lambda(const Matrix& X, const std::vector<int>& y, const StabilityConfig& config,
                    int k_target) {
    Standardizer std_full;
    std_full.fit(X);
    const Matrix Xs = std_full.apply(X);
    const double lmax = lambda_max(Xs, y);
    const std::vector<double> grid = lambda_grid(lmax);

    double best_lambda = grid.front();
    long best_dist = -1;
    for (double lambda : grid) { // descending, so ties keep the larger lambda
        FitConfig fc;
        fc.lambda = lambda;
        fc.max_iter = config.max_iter;
        fc.tol = config.tol;
        const LogitModel model = fit(Xs, y, fc);
        long nnz = 0;
        for (double w : model.weights) nnz += (w != 0.0);
        const long dist = std::labs(nnz - k_target);
        if (best_dist < 0 || dist < best_dist) {
            best_dist = dist;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

} // namespace

SelectionProfile run_stability(const Matrix& X, const std::vector<int>& y, const StabilityConfig& config) {
    const std::size_t n = X.rows;
    const std::size_t p = X.cols;
    if (y.size() != n) throw ShapeError("run_stability: label count != row count");
    if (config.m < 1) throw ArgumentError("run_stability: m must be >= 1");
    if (config.subsample_fraction <= 0.0 || config.subsample_fraction > 1.0)
        throw ArgumentError("run_stability: subsample_fraction must be in (0,1]");
    if (config.alpha_weakness <= 0.0 || config.alpha_weakness > 1.0)
        throw ArgumentError("run_stability: alpha_weakness must be in (0,1]");

    std::vector<std::size_t> plus, minus;
    for (std::size_t i = 0; i < n; ++i)
        (y[i] > 0 ? plus : minus).push_back(i);
    if (plus.empty() || minus.empty()) throw DegenerateLabels("run_stability: both classes required");

    const std::size_t n_sub = static_cast<std::size_t>(std::floor(config.subsample_fraction * static_cast<double>(n)));
    if (n_sub < 2) throw ArgumentError("run_stability: dataset too small for a stratified subsample");
    std::size_t n_plus = static_cast<std::size_t>(std::lround(static_cast<double>(n_sub) * static_cast<double>(plus.size()) / static_cast<double>(n)));
    n_plus = std::clamp<std::size_t>(n_plus, 1, n_sub - 1);
    const std::size_t n_minus = n_sub - n_plus;
    if (n_plus > plus.size() || n_minus > minus.size())
        throw ArgumentError("run_stability: dataset too small for a stratified subsample");

    const int k_target = std::max(1, k_max_heuristic(static_cast<int>(n_sub), static_cast<int>(p)));
    const double lambda = config.fixed_lambda ? *config.fixed_lambda : pilot_lambda(X, y, config, k_target);

    const Rng base(config.seed);
    std::vector<std::vector<std::int32_t>> supports(static_cast<std::size_t>(config.m));

    parallel_for(static_cast<std::size_t>(config.m), config.jobs, [&](std::size_t iter) {
        Rng rng = base.derive(iter + 1);

        std::vector<std::size_t> rows = draw(plus, n_plus, rng);
        {
            std::vector<std::size_t> neg = draw(minus, n_minus, rng);
            rows.insert(rows.end(), neg.begin(), neg.end());
        }

        Matrix Xi(rows.size(), p);
        std::vector<int> yi(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            std::copy(X.row(rows[r]), X.row(rows[r]) + p, Xi.row(r));
            yi[r] = y[rows[r]];
        }
        Standardizer std_sub;
        std_sub.fit(Xi);
        Xi = std_sub.apply(Xi);

        FitConfig fc;
        fc.lambda = lambda;
        fc.max_iter = config.max_iter;
        fc.tol = config.tol;
        fc.feature_scales.resize(p);
        for (double& s : fc.feature_scales) s = rng.uniform() < 0.5 ? config.alpha_weakness : 1.0;
        // random visiting order so exactly tied coordinates win uniformly
        fc.coord_order.resize(p);
        std::iota(fc.coord_order.begin(), fc.coord_order.end(), 0);
        rng.shuffle(fc.coord_order);

        const LogitModel model = fit(Xi, yi, fc);
        for (std::size_t j = 0; j < p; ++j)
            if (model.weights[j] != 0.0) supports[iter].push_back(static_cast<std::int32_t>(j));
    });

    SelectionProfile profile;
    profile.m = config.m;
    profile.config = config;
    profile.lambda_used = lambda;
    std::vector<int> counts(p, 0);
    for (const auto& support : supports)
        for (std::int32_t j : support) ++counts[static_cast<std::size_t>(j)];
    profile.frequencies.resize(p);
    for (std::size_t j = 0; j < p; ++j)
        profile.frequencies[j] = static_cast<double>(counts[j]) / static_cast<double>(config.m);
    return profile;
}

nlohmann::json profile_to_json(const SelectionProfile& profile) {
    nlohmann::json j;
    j["m"] = profile.m;
    j["lambda_used"] = profile.lambda_used;
    j["frequencies"] = profile.frequencies;
    j["config"] = {{"m", profile.config.m},
                   {"subsample_fraction", profile.config.subsample_fraction},
                   {"alpha_weakness", profile.config.alpha_weakness},
                   {"tau", profile.config.tau},
                   {"seed", profile.config.seed}};
    return j;
}

SelectionProfile profile_from_json(const nlohmann::json& j) {
    SelectionProfile profile;
    profile.m = j.at("m").get<int>();
    profile.lambda_used = j.at("lambda_used").get<double>();
    profile.frequencies = j.at("frequencies").get<std::vector<double>>();
    const auto& c = j.at("config");
    profile.config.m = c.at("m").get<int>();
    profile.config.subsample_fraction = c.at("subsample_fraction").get<double>();
    profile.config.alpha_weakness = c.at("alpha_weakness").get<double>();
    profile.config.tau = c.at("tau").get<double>();
    profile.config.seed = c.at("seed").get<std::uint64_t>();
    return profile;
}

} // namespace stabsel
