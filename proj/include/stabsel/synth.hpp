#ifndef STABSEL_SYNTH_HPP
#define STABSEL_SYNTH_HPP

#include <cstdint>
#include <vector>

#include "stabsel/parcellation.hpp"
#include "stabsel/volume.hpp"

namespace stabsel {

// Known discriminative support of a simulated experiment. Keeps the parcel
// labeling it was drawn from so a related target can be derived later.
struct GroundTruth {
    std::vector<std::int32_t> support; // flat voxel indices, sorted
    double effect_size = 0.0;
    std::vector<std::int32_t> parcel_labels;  // parcel id per voxel
    std::vector<std::int32_t> active_parcels; // parcels whose voxels form the support
    std::int32_t n_parcels = 0;
};

struct ScannerModel {
    double gain = 1.0;
    double offset = 0.0;
    double noise_sigma = 1.0;
    double smooth_fwhm_mm = 0.0;
};

GroundTruth make_ground_truth(const VolumeSpace& space, const Parcellation& parcels,
                              std::int32_t n_active_parcels, double effect_size, std::uint64_t seed);

// Rows: n_per_class subjects of class +1 then the same count of class -1;
// subject s of each class is the s-th row of its block, so paired designs
// match rows s and n_per_class + s.
// row = gain * (y/2 * effect_size * 1_support) + offset + smoothed noise,
// noise is white Gaussian with std noise_sigma, smoothed by a separable
// Gaussian of FWHM smooth_fwhm_mm and renormalized to keep std noise_sigma.
Dataset sample_dataset(const SpacePtr& space, const GroundTruth& truth, const ScannerModel& scanner,
                       std::int32_t n_per_class, std::uint64_t seed);

// New truth sharing ceil(shared_fraction * k) support voxels with the old
// one; the rest is replaced by voxels of previously inactive parcels.
GroundTruth derive_target(const GroundTruth& truth, double shared_fraction, double new_effect_size,
                          std::uint64_t seed);

// Per-subject difference rows (class +1 row minus the paired class -1 row).
Matrix paired_differences(const Dataset& dataset);

} // namespace stabsel

#endif
