#include "stabsel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "stabsel/errors.hpp"
#include "stabsel/rng.hpp"

namespace stabsel {

namespace {

constexpr double kFwhmToSigma = 1.0 / 2.3548200450309493; // FWHM = sigma * 2 sqrt(2 ln 2)

// Separable Gaussian smoothing of a full-grid field, zero-padded at the
// borders. The result is rescaled so white-noise input keeps its marginal
// standard deviation away from the borders.
void smooth_field(std::vector<double>& field, const VolumeSpace& space, double fwhm_mm) {
    if (fwhm_mm <= 0.0) return;
    const auto [nx, ny, nz] = space.dims;
    double var_factor = 1.0;
    std::vector<double> tmp(field.size());

    for (int axis = 0; axis < 3; ++axis) {
        const double sigma_vox = fwhm_mm * kFwhmToSigma / space.voxel_size_mm[axis];
        const int radius = static_cast<int>(std::ceil(4.0 * sigma_vox));
        std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
        double ksum = 0.0;
        for (int t = -radius; t <= radius; ++t) {
            kernel[t + radius] = std::exp(-0.5 * t * t / (sigma_vox * sigma_vox));
            ksum += kernel[t + radius];
        }
        double k2 = 0.0;
        for (double& w : kernel) {
            w /= ksum;
            k2 += w * w;
        }
        var_factor *= k2;

        const int extent[3] = {nx, ny, nz};
        const std::size_t stride[3] = {1, static_cast<std::size_t>(nx), static_cast<std::size_t>(nx) * ny};
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (int z = 0; z < nz; ++z)
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x) {
                    const int pos[3] = {x, y, z};
                    const std::size_t idx = space.cell(x, y, z);
                    double acc = 0.0;
                    for (int t = -radius; t <= radius; ++t) {
                        const int q = pos[axis] + t;
                        if (q < 0 || q >= extent[axis]) continue;
                        acc += kernel[t + radius] * field[idx + (q - pos[axis]) * static_cast<std::ptrdiff_t>(stride[axis])];
                    }
                    tmp[idx] = acc;
                }
        field.swap(tmp);
    }
    const double rescale = 1.0 / std::sqrt(var_factor);
    for (double& v : field) v *= rescale;
}

} // namespace

GroundTruth make_ground_truth(const VolumeSpace& space, const Parcellation& parcels,
                              std::int32_t n_active_parcels, double effect_size, std::uint64_t seed) {
    if (parcels.labels.size() != space.p()) throw ShapeError("make_ground_truth: parcellation does not match space");
    if (n_active_parcels < 0 || n_active_parcels > parcels.n_parcels)
        throw ArgumentError("make_ground_truth: n_active_parcels out of range");
    if (effect_size < 0) throw ArgumentError("make_ground_truth: effect_size must be >= 0");

    GroundTruth truth;
    truth.effect_size = effect_size;
    truth.parcel_labels = parcels.labels;
    truth.n_parcels = parcels.n_parcels;

    std::vector<std::int32_t> ids(static_cast<std::size_t>(parcels.n_parcels));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng = Rng(seed).derive(0xA11CE);
    rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(n_active_parcels));
    std::sort(ids.begin(), ids.end());
    truth.active_parcels = ids;

    std::vector<char> is_active(static_cast<std::size_t>(parcels.n_parcels), 0);
    for (std::int32_t k : ids) is_active[k] = 1;
    for (std::size_t j = 0; j < parcels.labels.size(); ++j)
        if (is_active[parcels.labels[j]]) truth.support.push_back(static_cast<std::int32_t>(j));
    return truth;
}

Dataset sample_dataset(const SpacePtr& space, const GroundTruth& truth, const ScannerModel& scanner,
                       std::int32_t n_per_class, std::uint64_t seed) {
    if (n_per_class < 1) throw ArgumentError("sample_dataset: n_per_class must be >= 1");
    if (scanner.gain <= 0 || scanner.noise_sigma <= 0) throw ArgumentError("sample_dataset: invalid scanner model");

    const std::size_t p = space->p();
    std::vector<char> in_support(p, 0);
    for (std::int32_t j : truth.support) in_support[static_cast<std::size_t>(j)] = 1;

    Dataset ds;
    ds.space = space;
    ds.X = Matrix(2 * static_cast<std::size_t>(n_per_class), p);
    const Rng base(seed);
    std::vector<double> noise(space->grid_cells());

    for (std::size_t r = 0; r < ds.X.rows; ++r) {
        const bool positive = r < static_cast<std::size_t>(n_per_class);
        const int y = positive ? 1 : -1;
        const std::size_t subject = positive ? r : r - n_per_class;

        Rng rng = base.derive(r);
        for (double& v : noise) v = scanner.noise_sigma * rng.normal();
        smooth_field(noise, *space, scanner.smooth_fwhm_mm);

        double* row = ds.X.row(r);
        const double bump = scanner.gain * 0.5 * y * truth.effect_size;
        for (std::size_t j = 0; j < p; ++j) {
            const auto [x, yy, z] = space->coord_of[j];
            row[j] = (in_support[j] ? bump : 0.0) + scanner.offset + noise[space->cell(x, yy, z)];
        }

        ds.y.push_back(y);
        char id[32];
        std::snprintf(id, sizeof(id), "subj%04zu_%s", subject, positive ? "a" : "b");
        ds.sample_ids.emplace_back(id);
    }
    return ds;
}

GroundTruth derive_target(const GroundTruth& truth, double shared_fraction, double new_effect_size,
                          std::uint64_t seed) {
    if (shared_fraction < 0.0 || shared_fraction > 1.0)
        throw ArgumentError("derive_target: shared_fraction must be in [0,1]");

    const std::size_t k = truth.support.size();
    const std::size_t keep = static_cast<std::size_t>(std::ceil(shared_fraction * static_cast<double>(k)));

    Rng rng = Rng(seed).derive(0x7A26E7);
    std::vector<std::int32_t> shuffled = truth.support;
    rng.shuffle(shuffled);

    GroundTruth out;
    out.effect_size = new_effect_size;
    out.parcel_labels = truth.parcel_labels;
    out.n_parcels = truth.n_parcels;
    out.support.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(keep));

    // fresh voxels come from parcels inactive in the reference truth
    std::vector<char> was_active(static_cast<std::size_t>(truth.n_parcels), 0);
    for (std::int32_t a : truth.active_parcels) was_active[a] = 1;
    std::vector<std::int32_t> fresh;
    for (std::int32_t a = 0; a < truth.n_parcels; ++a)
        if (!was_active[a]) fresh.push_back(a);
    rng.shuffle(fresh);

    std::vector<std::vector<std::int32_t>> members(static_cast<std::size_t>(truth.n_parcels));
    for (std::size_t j = 0; j < truth.parcel_labels.size(); ++j)
        members[truth.parcel_labels[j]].push_back(static_cast<std::int32_t>(j));

    std::size_t needed = k - keep;
    std::vector<char> kept_parcel(static_cast<std::size_t>(truth.n_parcels), 0);
    for (std::size_t i = 0; i < out.support.size(); ++i) kept_parcel[truth.parcel_labels[out.support[i]]] = 1;
    for (std::int32_t a = 0; a < truth.n_parcels; ++a)
        if (kept_parcel[a]) out.active_parcels.push_back(a);

    for (std::int32_t parcel : fresh) {
        if (needed == 0) break;
        bool used = false;
        for (std::int32_t v : members[parcel]) {
            if (needed == 0) break;
            out.support.push_back(v);
            --needed;
            used = true;
        }
        if (used) out.active_parcels.push_back(parcel);
    }
    if (needed > 0) throw ArgumentError("derive_target: not enough inactive parcels to replace support");

    std::sort(out.support.begin(), out.support.end());
    std::sort(out.active_parcels.begin(), out.active_parcels.end());
    return out;
}

Matrix paired_differences(const Dataset& dataset) {
    std::vector<std::size_t> plus, minus;
    for (std::size_t i = 0; i < dataset.n(); ++i)
        (dataset.y[i] > 0 ? plus : minus).push_back(i);
    if (plus.empty() || plus.size() != minus.size())
        throw ArgumentError("paired_differences: classes must be nonempty and balanced");
    Matrix out(plus.size(), dataset.p());
    for (std::size_t s = 0; s < plus.size(); ++s) {
        const double* a = dataset.X.row(plus[s]);
        const double* b = dataset.X.row(minus[s]);
        double* d = out.row(s);
        for (std::size_t j = 0; j < dataset.p(); ++j) d[j] = a[j] - b[j];
    }
    return out;
}

} // namespace stabsel
