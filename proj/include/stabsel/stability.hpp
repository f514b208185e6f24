#ifndef STABSEL_STABILITY_HPP
#define STABSEL_STABILITY_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "stabsel/matrix.hpp"

namespace stabsel {

struct StabilityConfig {
    int m = 200;                      // randomized iterations
    double subsample_fraction = 0.5;  // (0, 1]
    double alpha_weakness = 0.5;      // per-feature scale drawn from {alpha, 1}
    double tau = 0.01;                // selection threshold on frequencies
    std::uint64_t seed = 0;
    int jobs = 1;
    std::optional<double> fixed_lambda; // if unset, the k_max pilot rule picks it
    int max_iter = 1000;
    double tol = 1e-6;
};

struct SelectionProfile {
    std::vector<double> frequencies; // multiples of 1/m
    int m = 0;
    StabilityConfig config;
    double lambda_used = 0.0;
};

// Randomized logistic regression: m class-stratified subsampled fits with
// per-feature penalty scales drawn from {alpha, 1}; each feature is scored
// by the fraction of fits in which its weight was nonzero. Deterministic
// given the seed, independent of the worker count.
SelectionProfile run_stability(const Matrix& X, const std::vector<int>& y, const StabilityConfig& config);

std::vector<std::int32_t> select(const SelectionProfile& profile, double tau);

// floor(1/tau): the largest group of perfectly correlated features whose
// members can all clear the frequency threshold tau.
int max_recoverable_group(double tau);

// round(n / ln p): how many variables one sparse logistic fit can select
// reliably; used to pick the per-iteration penalty.
int k_max_heuristic(int n, int p);

nlohmann::json profile_to_json(const SelectionProfile& profile);
SelectionProfile profile_from_json(const nlohmann::json& j);

} // namespace stabsel

#endif
