#include "stabsel/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "stabsel/errors.hpp"
#include "stabsel/parallel.hpp"
#include "stabsel/rng.hpp"

namespace stabsel {

std::string to_string(SpaceKind kind) {
    switch (kind) {
        case SpaceKind::Peaks: return "peaks";
        case SpaceKind::Raw: return "raw";
        case SpaceKind::ParcelsSpecific: return "parcels_specific";
        case SpaceKind::ParcelsMeta: return "parcels_meta";
    }
    throw ArgumentError("unknown space kind");
}

SpaceKind space_kind_from_string(const std::string& name) {
    if (name == "peaks") return SpaceKind::Peaks;
    if (name == "raw") return SpaceKind::Raw;
    if (name == "parcels_specific") return SpaceKind::ParcelsSpecific;
    if (name == "parcels_meta") return SpaceKind::ParcelsMeta;
    throw ArgumentError("unknown space kind: " + name);
}

Matrix FeaturePipeline::featurize(const Dataset& dataset) const {
    Matrix features;
    switch (space.kind) {
        case SpaceKind::Raw:
            features = dataset.X;
            break;
        case SpaceKind::Peaks:
            features = ale_featurize(dataset, space.ale).X;
            break;
        case SpaceKind::ParcelsSpecific:
        case SpaceKind::ParcelsMeta:
            if (!parcellation) throw ArgumentError("pipeline: parcellation missing");
            features = transform(*parcellation, dataset.X);
            break;
    }
    return standardizer.apply(features);
}

namespace {

// Deterministic stratified fold assignment; every sample lands in exactly
// one fold and each fold carries both classes.
std::vector<int> stratified_folds(const std::vector<int>& y, int folds, Rng rng) {
    std::vector<std::size_t> plus, minus;
    for (std::size_t i = 0; i < y.size(); ++i)
        (y[i] > 0 ? plus : minus).push_back(i);
    if (static_cast<int>(plus.size()) < folds || static_cast<int>(minus.size()) < folds)
        throw ArgumentError("stratified_folds: each class needs at least one sample per fold");
    std::vector<int> assignment(y.size(), -1);
    rng.shuffle(plus);
    rng.shuffle(minus);
    for (std::size_t i = 0; i < plus.size(); ++i) assignment[plus[i]] = static_cast<int>(i % folds);
    for (std::size_t i = 0; i < minus.size(); ++i) assignment[minus[i]] = static_cast<int>(i % folds);
    return assignment;
}

Matrix take_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), X.cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(X.row(rows[r]), X.row(rows[r]) + X.cols, out.row(r));
    return out;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += (pred[i] == truth[i]);
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// Mean inner-CV accuracy per grid point; returns the best grid index with
// ties resolved toward the larger lambda (lower index, grid is descending).
std::size_t pick_lambda_index(const Matrix& features, const std::vector<int>& y, int inner_folds,
                              const InlineOptions& options, Rng rng) {
    const std::vector<int> assignment = stratified_folds(y, inner_folds, rng);
    Standardizer std_all;
    std_all.fit(features);
    const std::vector<double> grid = lambda_grid(lambda_max(std_all.apply(features), y));

    std::vector<double> score(grid.size(), 0.0);
    for (int f = 0; f < inner_folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < y.size(); ++i)
            (assignment[i] == f ? test : train).push_back(i);
        std::vector<int> y_train, y_test;
        for (std::size_t i : train) y_train.push_back(y[i]);
        for (std::size_t i : test) y_test.push_back(y[i]);

        Standardizer std_fold;
        Matrix f_train = take_rows(features, train);
        std_fold.fit(f_train);
        f_train = std_fold.apply(f_train);
        const Matrix f_test = std_fold.apply(take_rows(features, test));

        for (std::size_t g = 0; g < grid.size(); ++g) {
            FitConfig fc;
            fc.lambda = grid[g];
            fc.tol = options.tol;
            fc.max_iter = options.max_iter;
            const LogitModel model = fit(f_train, y_train, fc);
            score[g] += accuracy(predict(model, f_test), y_test);
        }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (score[g] > score[best]) best = g;
    return best;
}

} // namespace

InlineResult inline_learn(const Dataset& dataset, const FeatureSpace& space, const InlineOptions& options) {
    const std::size_t n = dataset.n();
    if (options.cv_folds < 2 || static_cast<std::size_t>(options.cv_folds) > n)
        throw ArgumentError("inline_learn: cv_folds out of range");
    if (space.kind == SpaceKind::ParcelsMeta && options.meta_parcellation == nullptr)
        throw ArgumentError("inline_learn: parcels_meta needs a prebuilt parcellation");
    if ((space.kind == SpaceKind::ParcelsSpecific || space.kind == SpaceKind::ParcelsMeta) && space.K < 1)
        throw ArgumentError("inline_learn: parcel count must be >= 1");

    const Rng base = Rng(options.seed).derive(0x1A71);
    const std::vector<int> assignment = stratified_folds(dataset.y, options.cv_folds, base.derive(0));

    // label-free featurization shared by all folds
    Matrix base_features;
    if (space.kind == SpaceKind::Peaks)
        base_features = ale_featurize(dataset, space.ale).X;
    else
        base_features = dataset.X;

    AdjacencyGraph graph;
    if (space.kind == SpaceKind::ParcelsSpecific) graph = adjacency(*dataset.space);

    InlineResult result;
    result.pipeline.space = space;
    std::vector<std::size_t> lambda_votes(static_cast<std::size_t>(options.cv_folds));
    std::size_t pooled_hits = 0;

    for (int f = 0; f < options.cv_folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i)
            (assignment[i] == f ? test : train).push_back(i);
        std::vector<int> y_train, y_test;
        for (std::size_t i : train) y_train.push_back(dataset.y[i]);
        for (std::size_t i : test) y_test.push_back(dataset.y[i]);

        Matrix f_train, f_test;
        if (space.kind == SpaceKind::ParcelsSpecific) {
            const ParcellationTree tree = build_tree(take_rows(dataset.X, train), graph);
            const Parcellation parc = cut(tree, space.K);
            f_train = transform(parc, take_rows(dataset.X, train));
            f_test = transform(parc, take_rows(dataset.X, test));
        } else if (space.kind == SpaceKind::ParcelsMeta) {
            f_train = transform(*options.meta_parcellation, take_rows(dataset.X, train));
            f_test = transform(*options.meta_parcellation, take_rows(dataset.X, test));
        } else {
            f_train = take_rows(base_features, train);
            f_test = take_rows(base_features, test);
        }

        const std::size_t lambda_idx =
            pick_lambda_index(f_train, y_train, options.inner_folds, options, base.derive(100 + static_cast<std::uint64_t>(f)));
        lambda_votes[static_cast<std::size_t>(f)] = lambda_idx;

        Standardizer std_fold;
        std_fold.fit(f_train);
        const Matrix f_train_std = std_fold.apply(f_train);
        const std::vector<double> grid = lambda_grid(lambda_max(f_train_std, y_train));

        FitConfig fc;
        fc.lambda = grid[lambda_idx];
        fc.tol = options.tol;
        fc.max_iter = options.max_iter;
        const LogitModel model = fit(f_train_std, y_train, fc);
        const std::vector<int> pred = predict(model, std_fold.apply(f_test));
        result.fold_scores.push_back(accuracy(pred, y_test));
        for (std::size_t i = 0; i < pred.size(); ++i) pooled_hits += (pred[i] == y_test[i]);
    }
    result.accuracy = static_cast<double>(pooled_hits) / static_cast<double>(n);

    // modal grid index across outer folds; ties toward the larger lambda
    std::size_t final_idx = 0, best_count = 0;
    for (std::size_t g = 0; g < lambda_grid(1.0).size(); ++g) {
        const std::size_t count = static_cast<std::size_t>(std::count(lambda_votes.begin(), lambda_votes.end(), g));
        if (count > best_count) {
            best_count = count;
            final_idx = g;
        }
    }

    // refit on all data
    Matrix all_features;
    if (space.kind == SpaceKind::ParcelsSpecific) {
        const ParcellationTree tree = build_tree(dataset.X, graph);
        result.pipeline.parcellation = cut(tree, space.K);
        all_features = transform(*result.pipeline.parcellation, dataset.X);
    } else if (space.kind == SpaceKind::ParcelsMeta) {
        result.pipeline.parcellation = *options.meta_parcellation;
        all_features = transform(*result.pipeline.parcellation, dataset.X);
    } else {
        all_features = base_features;
    }
    result.pipeline.standardizer.fit(all_features);
    all_features = result.pipeline.standardizer.apply(all_features);
    const std::vector<double> grid = lambda_grid(lambda_max(all_features, dataset.y));
    FitConfig fc;
    fc.lambda = grid[final_idx];
    fc.tol = options.tol;
    fc.max_iter = options.max_iter;
    result.chosen_lambda = fc.lambda;
    result.model = fit(all_features, dataset.y, fc);
    return result;
}

double transfer_apply(const InlineResult& trained, const Dataset& target) {
    const Matrix features = trained.pipeline.featurize(target);
    if (features.cols != trained.model.weights.size())
        throw ShapeError("transfer_apply: feature dimension mismatch");
    return accuracy(predict(trained.model, features), target.y);
}

std::string StudyReport::to_csv() const {
    std::string out = "transfer";
    for (const std::string& c : columns) out += "," + c;
    out += "\n";
    char cell[64];
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out += rows[r];
        for (std::size_t c = 0; c < columns.size(); ++c) {
            std::snprintf(cell, sizeof(cell), ",%.10g", values(r, c));
            out += cell;
        }
        out += "\n";
    }
    return out;
}

namespace {

// one-sided sign test: probability of the best column beating this column
// at least as often under a fair coin
double sign_test_p(std::size_t best_wins, std::size_t n_effective) {
    if (n_effective == 0) return 1.0;
    double p = 0.0;
    for (std::size_t k = best_wins; k <= n_effective; ++k) {
        double log_term = -std::log(2.0) * static_cast<double>(n_effective) + std::lgamma(n_effective + 1.0) -
                          std::lgamma(k + 1.0) - std::lgamma(n_effective - k + 1.0);
        p += std::exp(log_term);
    }
    return std::min(p, 1.0);
}

} // namespace

StudyReport run_study(const std::map<std::string, Dataset>& datasets, const StudyConfig& config) {
    if (config.spaces.empty() || config.transfer_pairs.empty())
        throw ArgumentError("run_study: need at least one space and one transfer pair");
    for (const auto& [a, b] : config.transfer_pairs) {
        if (!datasets.count(a) || !datasets.count(b)) throw ArgumentError("run_study: unknown dataset id in pair");
        if (!datasets.at(a).space->same_grid(*datasets.at(b).space))
            throw ShapeError("run_study: all datasets must share one volume space");
    }

    // datasets feeding the meta-analytic parcellation; never a transfer target
    std::vector<std::string> meta_ids = config.meta_reference_ids;
    const bool need_meta = std::any_of(config.spaces.begin(), config.spaces.end(),
                                       [](const FeatureSpace& s) { return s.kind == SpaceKind::ParcelsMeta; });
    if (need_meta && meta_ids.empty()) {
        std::set<std::string> targets;
        for (const auto& [a, b] : config.transfer_pairs) {
            targets.insert(b);
            targets.insert(a); // pairs run both ways, so both sides are targets
        }
        for (const std::string& id : config.dataset_ids)
            if (!targets.count(id)) meta_ids.push_back(id);
        if (meta_ids.empty())
            throw ArgumentError("run_study: parcels_meta needs meta_reference_ids (every dataset is a transfer target)");
    }

    std::map<int, Parcellation> meta_parcels; // per K
    if (need_meta) {
        std::vector<const Matrix*> parts;
        for (const std::string& id : meta_ids) {
            if (!datasets.count(id)) throw ArgumentError("run_study: unknown meta reference id " + id);
            parts.push_back(&datasets.at(id).X);
        }
        const Matrix stacked = vstack(parts);
        const AdjacencyGraph graph = adjacency(*datasets.at(meta_ids.front()).space);
        const ParcellationTree tree = build_tree(stacked, graph);
        for (const FeatureSpace& s : config.spaces)
            if (s.kind == SpaceKind::ParcelsMeta && !meta_parcels.count(s.K)) meta_parcels.emplace(s.K, cut(tree, s.K));
    }

    // every (dataset, space) inline fit, parallel over independent slots
    std::set<std::string> used_ids;
    for (const auto& [a, b] : config.transfer_pairs) {
        used_ids.insert(a);
        used_ids.insert(b);
    }
    std::vector<std::string> inline_ids(used_ids.begin(), used_ids.end());
    std::vector<InlineResult> inline_results(inline_ids.size() * config.spaces.size());
    parallel_for(inline_results.size(), config.jobs, [&](std::size_t unit) {
        const std::size_t d = unit / config.spaces.size();
        const std::size_t s = unit % config.spaces.size();
        InlineOptions opt;
        opt.cv_folds = config.cv_folds;
        opt.seed = Rng(config.seed).derive(0x57D7 + unit).next_u64();
        const FeatureSpace& space = config.spaces[s];
        if (space.kind == SpaceKind::ParcelsMeta) opt.meta_parcellation = &meta_parcels.at(space.K);
        inline_results[unit] = inline_learn(datasets.at(inline_ids[d]), space, opt);
    });
    auto inline_of = [&](const std::string& id, std::size_t space_idx) -> const InlineResult& {
        const std::size_t d = static_cast<std::size_t>(
            std::find(inline_ids.begin(), inline_ids.end(), id) - inline_ids.begin());
        return inline_results[d * config.spaces.size() + space_idx];
    };

    StudyReport report;
    for (const FeatureSpace& s : config.spaces) {
        report.columns.push_back(to_string(s.kind) + "_trans");
        report.columns.push_back(to_string(s.kind) + "_in");
    }
    std::vector<std::pair<std::string, std::string>> directed;
    for (const auto& [a, b] : config.transfer_pairs) {
        directed.emplace_back(a, b);
        directed.emplace_back(b, a);
    }
    report.values = Matrix(directed.size(), report.columns.size());
    for (std::size_t r = 0; r < directed.size(); ++r) {
        const auto& [src, dst] = directed[r];
        report.rows.push_back(src + "->" + dst);
        for (std::size_t s = 0; s < config.spaces.size(); ++s) {
            report.values(r, 2 * s) = transfer_apply(inline_of(src, s), datasets.at(dst));
            report.values(r, 2 * s + 1) = inline_of(dst, s).accuracy;
        }
    }

    // relative-performance summary vs the best column
    std::vector<double> means(report.columns.size(), 0.0);
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
        for (std::size_t r = 0; r < directed.size(); ++r) means[c] += report.values(r, c);
        means[c] /= static_cast<double>(directed.size());
    }
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(means.begin(), means.end()) - means.begin());
    auto methods = nlohmann::json::array();
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
        std::size_t best_wins = 0, n_eff = 0;
        for (std::size_t r = 0; r < directed.size(); ++r) {
            if (report.values(r, best) == report.values(r, c)) continue;
            ++n_eff;
            best_wins += report.values(r, best) > report.values(r, c);
        }
        methods.push_back({{"column", report.columns[c]},
                           {"mean_accuracy", means[c]},
                           {"gap_to_best", means[c] - means[best]},
                           {"sign_test_p_vs_best", sign_test_p(best_wins, n_eff)}});
    }
    report.summary = {{"best_column", report.columns[best]}, {"methods", methods}};
    return report;
}

} // namespace stabsel
