#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "stabsel/errors.hpp"
#include "stabsel/parcellation.hpp"
#include "stabsel/synth.hpp"
#include "stabsel/volume.hpp"

using namespace stabsel;

namespace {

SpacePtr box_space(int nx, int ny, int nz, double vox = 3.0) {
    return build_space({nx, ny, nz}, {vox, vox, vox}, full_mask({nx, ny, nz}));
}

GroundTruth default_truth(const SpacePtr& sp, int block_side, std::int32_t active, double effect,
                          std::uint64_t seed) {
    const Parcellation parc = grid_parcellation(*sp, {block_side, block_side, block_side});
    return make_ground_truth(*sp, parc, active, effect, seed);
}

double column_mean(const Matrix& X, std::size_t j, std::size_t row_begin, std::size_t row_end) {
    double s = 0.0;
    for (std::size_t i = row_begin; i < row_end; ++i) s += X(i, j);
    return s / static_cast<double>(row_end - row_begin);
}

double paired_t(const Matrix& diffs, std::size_t j) {
    const std::size_t n = diffs.rows;
    double mean = column_mean(diffs, j, 0, n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (diffs(i, j) - mean) * (diffs(i, j) - mean);
    var /= static_cast<double>(n - 1);
    return mean / std::sqrt(var / static_cast<double>(n));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

} // namespace

TEST_CASE("ground truth support is the union of the requested number of parcels") {
    auto sp = box_space(6, 6, 6);
    const Parcellation parc = grid_parcellation(*sp, {3, 3, 3}); // 8 parcels of 27 voxels
    const GroundTruth truth = make_ground_truth(*sp, parc, 3, 0.8, 42);

    CHECK(truth.active_parcels.size() == 3);
    CHECK(truth.n_parcels == parc.n_parcels);
    CHECK(truth.effect_size == 0.8);
    CHECK(std::is_sorted(truth.support.begin(), truth.support.end()));

    std::set<std::int32_t> active(truth.active_parcels.begin(), truth.active_parcels.end());
    std::vector<std::int32_t> expected;
    for (std::size_t j = 0; j < sp->p(); ++j)
        if (active.count(parc.labels[j])) expected.push_back(static_cast<std::int32_t>(j));
    CHECK(truth.support == expected);
    CHECK(truth.support.size() == 3 * 27);

    CHECK_THROWS_AS(make_ground_truth(*sp, parc, 9, 0.8, 42), ArgumentError);
}

TEST_CASE("identical seeds give identical datasets, different seeds differ") {
    auto sp = box_space(5, 4, 4);
    const GroundTruth truth = default_truth(sp, 2, 2, 0.5, 7);
    ScannerModel scanner;
    scanner.smooth_fwhm_mm = 6.0;

    const Dataset a = sample_dataset(sp, truth, scanner, 6, 11);
    const Dataset b = sample_dataset(sp, truth, scanner, 6, 11);
    const Dataset c = sample_dataset(sp, truth, scanner, 6, 12);
    CHECK(a.X == b.X);
    CHECK(a.y == b.y);
    CHECK(a.X.data != c.X.data);
}

TEST_CASE("label layout is +1 block then -1 block") {
    auto sp = box_space(3, 3, 3);
    const GroundTruth truth = default_truth(sp, 1, 1, 0.5, 1);
    const Dataset ds = sample_dataset(sp, truth, ScannerModel{}, 4, 3);
    REQUIRE(ds.y.size() == 8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ds.y[i] == 1);
    for (std::size_t i = 4; i < 8; ++i) CHECK(ds.y[i] == -1);
    CHECK(ds.X.rows == 8);
    CHECK(ds.X.cols == sp->p());
}

TEST_CASE("noise-free class means differ by gain * effect on support only") {
    auto sp = box_space(4, 4, 4);
    const GroundTruth truth = default_truth(sp, 2, 2, 0.9, 21);
    ScannerModel scanner;
    scanner.gain = 1.7;
    scanner.offset = 0.3;
    scanner.noise_sigma = 1e-12; // noise-free limit
    const Dataset ds = sample_dataset(sp, truth, scanner, 3, 5);

    std::set<std::int32_t> support(truth.support.begin(), truth.support.end());
    for (std::size_t j = 0; j < sp->p(); ++j) {
        const double pos = column_mean(ds.X, j, 0, 3);
        const double neg = column_mean(ds.X, j, 3, 6);
        if (support.count(static_cast<std::int32_t>(j))) {
            CHECK(pos - neg == doctest::Approx(1.7 * 0.9).epsilon(1e-9));
            CHECK(pos + neg == doctest::Approx(2 * 0.3).epsilon(1e-9));
        } else {
            CHECK(pos == doctest::Approx(0.3).epsilon(1e-9));
            CHECK(neg == doctest::Approx(0.3).epsilon(1e-9));
        }
    }
}

TEST_CASE("noise standard deviation is preserved under smoothing") {
    auto sp = box_space(12, 12, 12, 3.0);
    const GroundTruth truth = default_truth(sp, 2, 1, 0.0, 2);
    for (double fwhm : {0.0, 9.0}) {
        ScannerModel scanner;
        scanner.noise_sigma = 2.0;
        scanner.smooth_fwhm_mm = fwhm;
        const Dataset ds = sample_dataset(sp, truth, scanner, 20, 31);
        double ss = 0.0;
        for (double v : ds.X.data) ss += v * v;
        const double sd = std::sqrt(ss / static_cast<double>(ds.X.data.size()));
        // interior voxels keep sigma exactly; boundary voxels lose a little
        // energy under smoothing, so allow a modest downward band
        CHECK(sd > 1.5);
        CHECK(sd < 2.1);
    }
}

TEST_CASE("smoothing raises neighbor correlation") {
    auto sp = box_space(10, 10, 10, 3.0);
    const GroundTruth truth = default_truth(sp, 2, 1, 0.0, 3);
    const std::int32_t a = sp->flat_index(4, 5, 5);
    const std::int32_t b = sp->flat_index(5, 5, 5);
    REQUIRE(a >= 0);
    REQUIRE(b >= 0);

    double r_by_fwhm[2];
    int idx = 0;
    for (double fwhm : {0.0, 9.0}) {
        ScannerModel scanner;
        scanner.smooth_fwhm_mm = fwhm;
        const Dataset ds = sample_dataset(sp, truth, scanner, 150, 17);
        std::vector<double> va, vb;
        for (std::size_t i = 0; i < ds.X.rows; ++i) {
            va.push_back(ds.X(i, a));
            vb.push_back(ds.X(i, b));
        }
        r_by_fwhm[idx++] = pearson(va, vb);
    }
    CHECK(std::abs(r_by_fwhm[0]) < 0.15); // white noise: neighbors uncorrelated
    CHECK(r_by_fwhm[1] > 0.5);            // smoothed: strongly correlated
}

TEST_CASE("paired t statistics grow with effect size") {
    auto sp = box_space(6, 6, 6);
    const GroundTruth truth_small = default_truth(sp, 2, 2, 0.3, 9);
    GroundTruth truth_big = truth_small;
    truth_big.effect_size = 1.2;

    double mean_t[2];
    int idx = 0;
    for (const GroundTruth* truth : std::vector<const GroundTruth*>{&truth_small, &truth_big}) {
        const Dataset ds = sample_dataset(sp, *truth, ScannerModel{}, 40, 27);
        const Matrix diffs = paired_differences(ds);
        double total = 0.0;
        for (std::int32_t j : truth->support) total += paired_t(diffs, static_cast<std::size_t>(j));
        mean_t[idx++] = total / static_cast<double>(truth->support.size());
    }
    CHECK(mean_t[0] > 0.5);
    CHECK(mean_t[1] > 2.0 * mean_t[0]);
}

TEST_CASE("null p-values are close to uniform") {
    auto sp = box_space(8, 8, 8);
    const GroundTruth truth = default_truth(sp, 2, 1, 0.0, 4);
    const Dataset ds = sample_dataset(sp, truth, ScannerModel{}, 60, 101);
    const Matrix diffs = paired_differences(ds);

    // two-sided p from the t statistic via a normal approximation is fine
    // for n = 60; we only check gross uniformity with a KS statistic
    std::vector<double> pvals;
    for (std::size_t j = 0; j < diffs.cols; ++j) {
        const double t = paired_t(diffs, j);
        pvals.push_back(std::erfc(std::abs(t) / std::sqrt(2.0)));
    }
    std::sort(pvals.begin(), pvals.end());
    double ks = 0.0;
    const double n = static_cast<double>(pvals.size());
    for (std::size_t i = 0; i < pvals.size(); ++i) {
        ks = std::max(ks, std::abs(pvals[i] - (static_cast<double>(i) + 1.0) / n));
        ks = std::max(ks, std::abs(pvals[i] - static_cast<double>(i) / n));
    }
    // 512 voxels: the 1% KS critical value is about 1.63/sqrt(512) = 0.072
    CHECK(ks < 0.072);
}

TEST_CASE("paired_differences subtracts matched rows") {
    auto sp = box_space(3, 2, 2);
    const GroundTruth truth = default_truth(sp, 1, 1, 0.4, 6);
    const Dataset ds = sample_dataset(sp, truth, ScannerModel{}, 5, 8);
    const Matrix diffs = paired_differences(ds);
    REQUIRE(diffs.rows == 5);
    REQUIRE(diffs.cols == sp->p());
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t j = 0; j < sp->p(); ++j)
            CHECK(diffs(s, j) == ds.X(s, j) - ds.X(5 + s, j));

    Dataset odd = ds;
    odd.y[7] = 1;
    CHECK_THROWS_AS(paired_differences(odd), ArgumentError);
}

TEST_CASE("derive_target keeps the requested shared support fraction") {
    auto sp = box_space(6, 6, 6);
    const Parcellation parc = grid_parcellation(*sp, {2, 2, 2}); // 27 parcels of 8 voxels
    const GroundTruth truth = make_ground_truth(*sp, parc, 5, 0.7, 12);
    const std::size_t k = truth.support.size();

    for (double sf : {1.0, 0.0, 0.5, 0.7}) {
        const GroundTruth target = derive_target(truth, sf, 0.9, 33);
        CHECK(target.support.size() == k);
        CHECK(target.effect_size == 0.9);
        CHECK(std::is_sorted(target.support.begin(), target.support.end()));

        std::vector<std::int32_t> shared;
        std::set_intersection(truth.support.begin(), truth.support.end(), target.support.begin(),
                              target.support.end(), std::back_inserter(shared));
        CHECK(shared.size() == static_cast<std::size_t>(std::ceil(sf * static_cast<double>(k))));

        // replacement voxels come from parcels that were inactive before
        std::set<std::int32_t> old_active(truth.active_parcels.begin(), truth.active_parcels.end());
        std::set<std::int32_t> old_support(truth.support.begin(), truth.support.end());
        for (std::int32_t v : target.support)
            if (!old_support.count(v)) CHECK(!old_active.count(truth.parcel_labels[v]));
    }

    CHECK_THROWS_AS(derive_target(truth, -0.1, 0.9, 1), ArgumentError);
    CHECK_THROWS_AS(derive_target(truth, 1.5, 0.9, 1), ArgumentError);
}

TEST_CASE("derive_target is deterministic in its seed") {
    auto sp = box_space(6, 6, 6);
    const Parcellation parc = grid_parcellation(*sp, {2, 2, 2});
    const GroundTruth truth = make_ground_truth(*sp, parc, 4, 0.7, 5);
    const GroundTruth t1 = derive_target(truth, 0.5, 0.7, 9);
    const GroundTruth t2 = derive_target(truth, 0.5, 0.7, 9);
    const GroundTruth t3 = derive_target(truth, 0.5, 0.7, 10);
    CHECK(t1.support == t2.support);
    CHECK(t1.support != t3.support);
}
