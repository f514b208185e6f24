#ifndef STABSEL_PARCELLATION_HPP
#define STABSEL_PARCELLATION_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stabsel/matrix.hpp"
#include "stabsel/volume.hpp"

namespace stabsel {

struct Merge {
    std::int32_t a = 0;       // smaller child node id
    std::int32_t b = 0;       // larger child node id
    double cost = 0.0;        // Ward cost |A||B|/(|A|+|B|) * ||mean_A - mean_B||^2
    std::int32_t node_id = 0; // id of the merged node
};

// Merge dendrogram over the voxel graph. Leaves are 0..p-1, internal nodes
// p..2p-c-1 where c is the number of connected components.
struct ParcellationTree {
    std::int32_t n_leaves = 0;
    std::int32_t n_components = 0;
    std::vector<Merge> merges; // p - c entries in merge order
};

struct Parcellation {
    std::int32_t n_parcels = 0;
    std::vector<std::int32_t> labels;       // per voxel, 0..K-1
    std::vector<std::int32_t> parcel_sizes; // length K
};

// Ward agglomeration restricted to graph-adjacent cluster pairs. At each
// step the adjacent pair with minimal cost merges; ties go to the lowest
// smaller-node id, then lowest larger-node id.
ParcellationTree build_tree(const Matrix& data, const AdjacencyGraph& graph);

// Undo the last K - c merges. Parcel ids are assigned in order of each
// parcel's first voxel.
Parcellation cut(const ParcellationTree& tree, std::int32_t K);

// Parcel means: out(i, k) = mean of row i over voxels of parcel k.
Matrix transform(const Parcellation& parcellation, const Matrix& data);

// Broadcast parcel scores back to voxels.
std::vector<double> inverse_transform(const Parcellation& parcellation, const std::vector<double>& scores);

// Axis-aligned block partition of the grid; blocks clipped to the mask.
// Used as a parcel-aligned ground truth independent of Ward.
Parcellation grid_parcellation(const VolumeSpace& space, std::array<int, 3> block);

// Labels as a VOL1 volume (f32) plus a JSON sidecar with K and the merge list.
void save_parcellation(const Parcellation& parcellation, const ParcellationTree& tree,
                       const SpacePtr& space, const std::string& volume_path,
                       const std::string& sidecar_path);
Parcellation load_parcellation(const std::string& volume_path);

} // namespace stabsel

#endif
