#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "stabsel/ale.hpp"
#include "stabsel/errors.hpp"
#include "stabsel/volume.hpp"

using namespace stabsel;

namespace {

SpacePtr box_space(int nx, int ny, int nz, double vox = 2.0) {
    return build_space({nx, ny, nz}, {vox, vox, vox}, full_mask({nx, ny, nz}));
}

ContrastImage image_of(const SpacePtr& sp, double fill = 0.0) {
    ContrastImage img;
    img.space = sp;
    img.values.assign(sp->p(), fill);
    return img;
}

void set_at(ContrastImage& img, int x, int y, int z, double v) {
    img.values[static_cast<std::size_t>(img.space->flat_index(x, y, z))] = v;
}

// independent oracle for the union combination
double union_oracle(const std::vector<Peak>& peaks, const VolumeSpace& sp, int x, int y, int z, double fwhm) {
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    double prod = 1.0;
    for (const Peak& pk : peaks) {
        const double dx = (x - pk.coord[0]) * sp.voxel_size_mm[0];
        const double dy = (y - pk.coord[1]) * sp.voxel_size_mm[1];
        const double dz = (z - pk.coord[2]) * sp.voxel_size_mm[2];
        const double d2 = dx * dx + dy * dy + dz * dz;
        prod *= 1.0 - std::exp(-d2 / (2.0 * sigma * sigma));
    }
    return 1.0 - prod;
}

} // namespace

TEST_CASE("constant images have no peaks") {
    auto sp = box_space(5, 5, 5);
    AleParams params;
    params.peak_threshold = 0.5;
    CHECK(extract_peaks(image_of(sp, 1.0), params).peaks.empty()); // no strict maxima
    CHECK(extract_peaks(image_of(sp, 0.0), params).peaks.empty());
}

TEST_CASE("single impulse gives a single peak at its coordinate") {
    auto sp = box_space(5, 5, 5);
    ContrastImage img = image_of(sp);
    set_at(img, 2, 3, 1, 4.0);
    AleParams params;
    params.peak_threshold = 3.0;
    const PeakSet ps = extract_peaks(img, params);
    REQUIRE(ps.peaks.size() == 1);
    CHECK(ps.peaks[0].coord == std::array<int, 3>{2, 3, 1});
    CHECK(ps.peaks[0].value == 4.0);
    CHECK(ps.threshold == 3.0);

    // below threshold: not reported
    params.peak_threshold = 5.0;
    CHECK(extract_peaks(img, params).peaks.empty());
}

TEST_CASE("peaks must be strict maxima over the 26-neighborhood") {
    auto sp = box_space(5, 5, 5);
    ContrastImage img = image_of(sp);
    set_at(img, 2, 2, 2, 4.0);
    set_at(img, 3, 3, 3, 4.0); // diagonal neighbor with an equal value
    AleParams params;
    params.peak_threshold = 3.0;
    CHECK(extract_peaks(img, params).peaks.empty()); // ties are not strict maxima

    set_at(img, 3, 3, 3, 3.5); // now (2,2,2) strictly dominates
    const PeakSet ps = extract_peaks(img, params);
    REQUIRE(ps.peaks.size() == 1);
    CHECK(ps.peaks[0].coord == std::array<int, 3>{2, 2, 2});
}

TEST_CASE("corner voxels can be peaks (neighborhood clipped to the mask)") {
    auto sp = box_space(4, 4, 4);
    ContrastImage img = image_of(sp);
    set_at(img, 0, 0, 0, 6.0);
    AleParams params;
    params.peak_threshold = 3.0;
    const PeakSet ps = extract_peaks(img, params);
    REQUIRE(ps.peaks.size() == 1);
    CHECK(ps.peaks[0].coord == std::array<int, 3>{0, 0, 0});
}

TEST_CASE("minimum separation suppresses the weaker nearby peak") {
    auto sp = box_space(9, 5, 5, 2.0);
    ContrastImage img = image_of(sp);
    set_at(img, 2, 2, 2, 5.0);
    set_at(img, 4, 2, 2, 4.0); // 4 mm away
    set_at(img, 7, 2, 2, 4.5); // 10 mm from the first

    AleParams params;
    params.peak_threshold = 3.0;
    params.min_peak_separation_mm = 0.0;
    CHECK(extract_peaks(img, params).peaks.size() == 3);

    params.min_peak_separation_mm = 5.0;
    const PeakSet ps = extract_peaks(img, params);
    REQUIRE(ps.peaks.size() == 2);
    CHECK(ps.peaks[0].coord == std::array<int, 3>{2, 2, 2}); // strongest first
    CHECK(ps.peaks[1].coord == std::array<int, 3>{7, 2, 2});

    params.min_peak_separation_mm = 100.0;
    CHECK(extract_peaks(img, params).peaks.size() == 1); // only the global max survives
}

TEST_CASE("ale map of a single peak matches the Gaussian formula") {
    auto sp = box_space(7, 7, 7, 2.0);
    PeakSet ps;
    ps.peaks.push_back({{3, 3, 3}, 5.0});
    AleParams params;
    params.fwhm_mm = 8.0;
    const ContrastImage ale = ale_map(ps, sp, params);
    REQUIRE(ale.values.size() == sp->p());

    const double sigma = 8.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    CHECK(ale.values[static_cast<std::size_t>(sp->flat_index(3, 3, 3))] == doctest::Approx(1.0).epsilon(1e-12));
    const double at_1vox = std::exp(-4.0 / (2.0 * sigma * sigma)); // 2 mm away
    CHECK(ale.values[static_cast<std::size_t>(sp->flat_index(4, 3, 3))] == doctest::Approx(at_1vox).epsilon(1e-12));
    const double at_diag = std::exp(-(4.0 + 4.0 + 4.0) / (2.0 * sigma * sigma));
    CHECK(ale.values[static_cast<std::size_t>(sp->flat_index(4, 4, 4))] == doctest::Approx(at_diag).epsilon(1e-12));
}

TEST_CASE("multi-peak union matches the independent oracle everywhere") {
    auto sp = box_space(6, 5, 4, 3.0);
    PeakSet ps;
    ps.peaks.push_back({{1, 1, 1}, 4.0});
    ps.peaks.push_back({{4, 3, 2}, 3.5});
    ps.peaks.push_back({{2, 4, 0}, 3.2});
    AleParams params;
    params.fwhm_mm = 10.0;
    const ContrastImage ale = ale_map(ps, sp, params);
    for (std::size_t j = 0; j < sp->p(); ++j) {
        const auto [x, y, z] = sp->coord_of[j];
        CHECK(ale.values[j] == doctest::Approx(union_oracle(ps.peaks, *sp, x, y, z, 10.0)).epsilon(1e-12));
        CHECK(ale.values[j] >= 0.0);
        CHECK(ale.values[j] <= 1.0);
    }
}

TEST_CASE("union dominates every single modeled-activation map") {
    auto sp = box_space(6, 6, 6, 2.0);
    PeakSet both;
    both.peaks.push_back({{1, 1, 1}, 4.0});
    both.peaks.push_back({{4, 4, 4}, 4.0});
    AleParams params;
    params.fwhm_mm = 9.0;
    const ContrastImage u = ale_map(both, sp, params);
    for (const Peak& pk : both.peaks) {
        PeakSet solo;
        solo.peaks.push_back(pk);
        const ContrastImage ma = ale_map(solo, sp, params);
        for (std::size_t j = 0; j < sp->p(); ++j) CHECK(u.values[j] >= ma.values[j] - 1e-15);
    }

    // adding a peak never lowers the map
    PeakSet one;
    one.peaks.push_back(both.peaks[0]);
    const ContrastImage base = ale_map(one, sp, params);
    for (std::size_t j = 0; j < sp->p(); ++j) CHECK(u.values[j] >= base.values[j] - 1e-15);
}

TEST_CASE("max combination takes the pointwise maximum") {
    auto sp = box_space(6, 4, 4, 2.0);
    PeakSet ps;
    ps.peaks.push_back({{1, 1, 1}, 4.0});
    ps.peaks.push_back({{4, 2, 2}, 4.0});
    AleParams params;
    params.fwhm_mm = 9.0;
    params.combine = AleCombine::Max;
    const ContrastImage m = ale_map(ps, sp, params);

    const double sigma = 9.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    for (std::size_t j = 0; j < sp->p(); ++j) {
        const auto [x, y, z] = sp->coord_of[j];
        double best = 0.0;
        for (const Peak& pk : ps.peaks) {
            const double dx = 2.0 * (x - pk.coord[0]), dy = 2.0 * (y - pk.coord[1]), dz = 2.0 * (z - pk.coord[2]);
            best = std::max(best, std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma)));
        }
        CHECK(m.values[j] == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("empty peak set maps to all zeros") {
    auto sp = box_space(3, 3, 3);
    const ContrastImage ale = ale_map(PeakSet{}, sp, AleParams{});
    for (double v : ale.values) CHECK(v == 0.0);
}

TEST_CASE("ale_featurize keeps shape and labels and bounds values") {
    auto sp = box_space(6, 6, 6, 2.0);
    Dataset ds;
    ds.space = sp;
    ds.X = Matrix(4, sp->p());
    for (std::size_t i = 0; i < 4; ++i) {
        // one clear bump per row at a distinct location
        const int c = 1 + static_cast<int>(i);
        ds.X(i, static_cast<std::size_t>(sp->flat_index(c, c, c))) = 6.0;
    }
    ds.y = {1, 1, -1, -1};
    AleParams params;
    params.peak_threshold = 3.0;
    params.fwhm_mm = 8.0;
    const Dataset out = ale_featurize(ds, params);
    CHECK(out.X.rows == 4);
    CHECK(out.X.cols == sp->p());
    CHECK(out.y == ds.y);
    for (double v : out.X.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // each row peaks at its own bump
    for (std::size_t i = 0; i < 4; ++i) {
        const int c = 1 + static_cast<int>(i);
        CHECK(out.X(i, static_cast<std::size_t>(sp->flat_index(c, c, c))) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("invalid params are rejected") {
    auto sp = box_space(3, 3, 3);
    AleParams params;
    params.fwhm_mm = 0.0;
    CHECK_THROWS_AS(ale_map(PeakSet{}, sp, params), ArgumentError);
    params.fwhm_mm = 10.0;
    params.min_peak_separation_mm = -1.0;
    CHECK_THROWS_AS(extract_peaks(image_of(sp), params), ArgumentError);
}

TEST_CASE("peaks CSV lists millimeter coordinates") {
    auto sp = box_space(5, 5, 5, 2.5);
    PeakSet ps;
    ps.peaks.push_back({{2, 0, 4}, 3.75});
    const std::string path = (std::filesystem::temp_directory_path() / "stabsel_peaks.csv").string();
    write_peaks_csv(ps, *sp, path);
    std::ifstream is(path);
    std::string header, line;
    std::getline(is, header);
    std::getline(is, line);
    CHECK(header == "x_mm,y_mm,z_mm,value");
    std::istringstream ls(line);
    double x, y, z, v;
    char comma;
    ls >> x >> comma >> y >> comma >> z >> comma >> v;
    CHECK(x == 5.0);
    CHECK(y == 0.0);
    CHECK(z == 10.0);
    CHECK(v == 3.75);
    std::filesystem::remove(path);
}
