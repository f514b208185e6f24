#ifndef STABSEL_TRANSFER_HPP
#define STABSEL_TRANSFER_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stabsel/ale.hpp"
#include "stabsel/matrix.hpp"
#include "stabsel/parcellation.hpp"
#include "stabsel/sparse_logit.hpp"
#include "stabsel/volume.hpp"

namespace stabsel {

enum class SpaceKind { Peaks, Raw, ParcelsSpecific, ParcelsMeta };

std::string to_string(SpaceKind kind);
SpaceKind space_kind_from_string(const std::string& name);

struct FeatureSpace {
    SpaceKind kind = SpaceKind::Raw;
    int K = 100;   // parcel count for the parcel kinds
    AleParams ale; // for SpaceKind::Peaks
};

// Everything needed to featurize new data exactly as at training time.
struct FeaturePipeline {
    FeatureSpace space;
    std::optional<Parcellation> parcellation;
    Standardizer standardizer;

    Matrix featurize(const Dataset& dataset) const;
};

struct InlineResult {
    double accuracy = 0.0;            // pooled outer-test accuracy
    std::vector<double> fold_scores;  // per outer fold
    double chosen_lambda = 0.0;       // lambda of the final refit
    LogitModel model;                 // refit on all data
    FeaturePipeline pipeline;
};

struct InlineOptions {
    int cv_folds = 6;
    int inner_folds = 5;
    std::uint64_t seed = 0;
    // fixed parcellation for SpaceKind::ParcelsMeta
    const Parcellation* meta_parcellation = nullptr;
    double tol = 1e-6;
    int max_iter = 1000;
};

// Outer stratified CV with nested inner CV picking the penalty from the
// 30-point grid (ties toward larger lambda); final model refit on all data
// at the grid index chosen most often across outer folds.
InlineResult inline_learn(const Dataset& dataset, const FeatureSpace& space, const InlineOptions& options);

// Mean 0/1 accuracy of the trained model on a target dataset featurized
// through the stored pipeline.
double transfer_apply(const InlineResult& trained, const Dataset& target);

struct StudyConfig {
    std::vector<std::string> dataset_ids; // report ordering
    std::vector<std::pair<std::string, std::string>> transfer_pairs; // expanded both ways
    std::vector<FeatureSpace> spaces;
    std::vector<std::string> meta_reference_ids; // datasets used to build meta parcels
    int cv_folds = 6;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct StudyReport {
    std::vector<std::string> rows;    // "A->B"
    std::vector<std::string> columns; // "<space>_trans", "<space>_in"
    Matrix values;                    // rows x columns accuracies
    nlohmann::json summary;           // per-column means, gap to best, sign tests

    std::string to_csv() const;
};

StudyReport run_study(const std::map<std::string, Dataset>& datasets, const StudyConfig& config);

} // namespace stabsel

#endif
