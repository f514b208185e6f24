#include "stabsel/ale.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "stabsel/errors.hpp"

namespace stabsel {

namespace {

constexpr double kFwhmToSigma = 1.0 / 2.3548200450309493;

double distance_mm(const std::array<int, 3>& a, const std::array<int, 3>& b,
                   const std::array<double, 3>& voxel_size) {
    double sq = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
        const double d = (a[axis] - b[axis]) * voxel_size[axis];
        sq += d * d;
    }
    return std::sqrt(sq);
}

} // namespace

PeakSet extract_peaks(const ContrastImage& image, const AleParams& params) {
    if (params.min_peak_separation_mm < 0.0)
        throw ArgumentError("extract_peaks: min_peak_separation_mm must be >= 0");
    const VolumeSpace& sp = *image.space;
    PeakSet out;
    out.threshold = params.peak_threshold;

    for (std::size_t j = 0; j < sp.p(); ++j) {
        const double v = image.values[j];
        if (v < params.peak_threshold) continue;
        const auto [x, y, z] = sp.coord_of[j];
        bool is_peak = true;
        for (int dz = -1; dz <= 1 && is_peak; ++dz)
            for (int dy = -1; dy <= 1 && is_peak; ++dy)
                for (int dx = -1; dx <= 1 && is_peak; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    const std::int32_t nb = sp.flat_index(x + dx, y + dy, z + dz);
                    if (nb >= 0 && image.values[static_cast<std::size_t>(nb)] >= v) is_peak = false;
                }
        if (is_peak) out.peaks.push_back({{x, y, z}, v});
    }

    if (params.min_peak_separation_mm > 0.0 && out.peaks.size() > 1) {
        std::vector<Peak> ordered = out.peaks;
        std::stable_sort(ordered.begin(), ordered.end(), [](const Peak& a, const Peak& b) {
            if (a.value != b.value) return a.value > b.value;
            // equal values: keep the lexicographically smallest coordinate first
            return std::array{a.coord[2], a.coord[1], a.coord[0]} < std::array{b.coord[2], b.coord[1], b.coord[0]};
        });
        std::vector<Peak> kept;
        for (const Peak& cand : ordered) {
            bool ok = true;
            for (const Peak& k : kept)
                if (distance_mm(cand.coord, k.coord, sp.voxel_size_mm) < params.min_peak_separation_mm) {
                    ok = false;
                    break;
                }
            if (ok) kept.push_back(cand);
        }
        out.peaks = std::move(kept);
    }
    return out;
}

ContrastImage ale_map(const PeakSet& peaks, const SpacePtr& space, const AleParams& params) {
    if (params.fwhm_mm <= 0.0) throw ArgumentError("ale_map: fwhm must be positive");
    const double sigma = params.fwhm_mm * kFwhmToSigma;
    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);

    ContrastImage out;
    out.space = space;
    const bool use_union = params.combine == AleCombine::Union;
    // union accumulates prod(1 - MA); max accumulates the running max
    out.values.assign(space->p(), use_union ? 1.0 : 0.0);

    for (const Peak& peak : peaks.peaks) {
        for (std::size_t j = 0; j < space->p(); ++j) {
            const double d = distance_mm(space->coord_of[j], peak.coord, space->voxel_size_mm);
            const double ma = std::exp(-d * d * inv_two_sigma_sq);
            if (use_union)
                out.values[j] *= 1.0 - ma;
            else
                out.values[j] = std::max(out.values[j], ma);
        }
    }
    if (use_union)
        for (double& v : out.values) v = 1.0 - v;
    return out;
}

Dataset ale_featurize(const Dataset& dataset, const AleParams& params) {
    Dataset out;
    out.space = dataset.space;
    out.y = dataset.y;
    out.sample_ids = dataset.sample_ids;
    out.X = Matrix(dataset.n(), dataset.p());
    for (std::size_t i = 0; i < dataset.n(); ++i) {
        ContrastImage img;
        img.space = dataset.space;
        img.values.assign(dataset.X.row(i), dataset.X.row(i) + dataset.p());
        const PeakSet peaks = extract_peaks(img, params);
        const ContrastImage mapped = ale_map(peaks, dataset.space, params);
        std::copy(mapped.values.begin(), mapped.values.end(), out.X.row(i));
    }
    return out;
}

void write_peaks_csv(const PeakSet& peaks, const VolumeSpace& space, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write peaks csv: " + path);
    os << "x_mm,y_mm,z_mm,value\n";
    char line[160];
    for (const Peak& p : peaks.peaks) {
        std::snprintf(line, sizeof(line), "%.6g,%.6g,%.6g,%.17g\n", p.coord[0] * space.voxel_size_mm[0],
                      p.coord[1] * space.voxel_size_mm[1], p.coord[2] * space.voxel_size_mm[2], p.value);
        os << line;
    }
}

} // namespace stabsel
