#ifndef STABSEL_VOLUME_HPP
#define STABSEL_VOLUME_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stabsel/matrix.hpp"

namespace stabsel {

// Masked 3D grid with a bijection between in-mask grid coordinates and
// flat feature indices 0..p-1. Flat order is lexicographic with x fastest.
struct VolumeSpace {
    std::array<int, 3> dims{};             // nx, ny, nz
    std::array<double, 3> voxel_size_mm{}; // sx, sy, sz
    std::vector<std::uint8_t> mask;        // full grid, x fastest, 0/1
    std::vector<std::int32_t> flat_of_cell; // full grid -> flat index or -1
    std::vector<std::array<int, 3>> coord_of; // flat index -> grid coordinate

    std::size_t p() const { return coord_of.size(); }
    std::size_t grid_cells() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t cell(int x, int y, int z) const {
        return static_cast<std::size_t>(x) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }
    bool in_grid(int x, int y, int z) const {
        return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
    }
    bool in_mask(int x, int y, int z) const {
        return in_grid(x, y, z) && mask[cell(x, y, z)] != 0;
    }
    // Flat index of an in-mask coordinate; -1 outside the mask.
    std::int32_t flat_index(int x, int y, int z) const {
        return in_grid(x, y, z) ? flat_of_cell[cell(x, y, z)] : -1;
    }
    bool same_grid(const VolumeSpace& other) const {
        return dims == other.dims && voxel_size_mm == other.voxel_size_mm && mask == other.mask;
    }
};

using SpacePtr = std::shared_ptr<const VolumeSpace>;

struct ContrastImage {
    SpacePtr space;
    std::vector<double> values; // length p, in-mask flat order
};

struct Dataset {
    SpacePtr space;
    Matrix X;                   // n x p
    std::vector<int> y;         // labels in {-1, +1}
    std::vector<std::string> sample_ids;

    std::size_t n() const { return X.rows; }
    std::size_t p() const { return X.cols; }
};

// Undirected 6-connectivity graph over flat feature indices.
struct AdjacencyGraph {
    std::size_t n_nodes = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> edges; // a < b, sorted
};

SpacePtr build_space(std::array<int, 3> dims, std::array<double, 3> voxel_size_mm,
                     const std::vector<std::uint8_t>& mask);

std::vector<std::uint8_t> full_mask(std::array<int, 3> dims);
// Cells with ((x-cx)/ax)^2 + ((y-cy)/ay)^2 + ((z-cz)/az)^2 <= 1; center is
// the geometric grid center (dims-1)/2.
std::vector<std::uint8_t> ellipsoid_mask(std::array<int, 3> dims, std::array<double, 3> semi_axes);

AdjacencyGraph adjacency(const VolumeSpace& space);

// VOL1 binary format, little-endian:
//   magic "VOL1"; u32 nx, ny, nz; f32 sx, sy, sz;
//   mask as nx*ny*nz bytes (0/1), x fastest; p float32 values in flat order.
ContrastImage read_volume(const std::string& path);
void write_volume(const ContrastImage& image, const std::string& path);

// Dataset manifest: JSON listing per-sample id, label and volume path, plus
// the shared mask volume. Volume paths are relative to the manifest file.
void write_dataset(const Dataset& dataset, const std::string& dir, const std::string& manifest_name = "dataset.json");
Dataset read_dataset(const std::string& manifest_path);

} // namespace stabsel

#endif
