#ifndef STABSEL_ALE_HPP
#define STABSEL_ALE_HPP

#include <array>
#include <string>
#include <vector>

#include "stabsel/volume.hpp"

namespace stabsel {

struct Peak {
    std::array<int, 3> coord{};
    double value = 0.0;
};

struct PeakSet {
    std::vector<Peak> peaks;
    double threshold = 0.0;
};

enum class AleCombine { Union, Max };

struct AleParams {
    double fwhm_mm = 10.0;
    double peak_threshold = 3.0;
    double min_peak_separation_mm = 0.0;
    AleCombine combine = AleCombine::Union;
};

// Strict local maxima over the in-mask 26-neighborhood with value >=
// peak_threshold; optional greedy suppression of peaks closer than
// min_peak_separation_mm (higher value wins, ties by lexicographic
// coordinate).
PeakSet extract_peaks(const ContrastImage& image, const AleParams& params);

// Per-peak Gaussian modeled activation exp(-d^2 / 2 sigma^2) with sigma =
// fwhm / 2.3548, distances in millimeters; combined as the probabilistic
// union 1 - prod(1 - MA_i), or the pointwise max when configured.
ContrastImage ale_map(const PeakSet& peaks, const SpacePtr& space, const AleParams& params);

// Replaces every row of the dataset by its ALE map; labels unchanged.
Dataset ale_featurize(const Dataset& dataset, const AleParams& params);

// CSV with header x_mm,y_mm,z_mm,value.
void write_peaks_csv(const PeakSet& peaks, const VolumeSpace& space, const std::string& path);

} // namespace stabsel

#endif
