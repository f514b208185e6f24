#include "stabsel/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "stabsel/errors.hpp"

namespace stabsel {

Matrix vstack(const std::vector<const Matrix*>& parts) {
    Matrix out;
    for (const Matrix* m : parts) {
        if (out.cols == 0) out.cols = m->cols;
        if (m->cols != out.cols) throw ShapeError("vstack: column mismatch");
        out.rows += m->rows;
    }
    out.data.reserve(out.rows * out.cols);
    for (const Matrix* m : parts) out.data.insert(out.data.end(), m->data.begin(), m->data.end());
    return out;
}

SpacePtr build_space(std::array<int, 3> dims, std::array<double, 3> voxel_size_mm,
                     const std::vector<std::uint8_t>& mask) {
    for (int d : dims)
        if (d <= 0) throw ArgumentError("build_space: dims must be positive");
    for (double s : voxel_size_mm)
        if (s <= 0) throw ArgumentError("build_space: voxel size must be positive");
    auto space = std::make_shared<VolumeSpace>();
    space->dims = dims;
    space->voxel_size_mm = voxel_size_mm;
    if (mask.size() != space->grid_cells()) throw ShapeError("build_space: mask size does not match dims");
    space->mask = mask;
    space->flat_of_cell.assign(space->grid_cells(), -1);
    // lexicographic, x fastest
    std::int32_t next = 0;
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) {
                const std::size_t c = space->cell(x, y, z);
                if (mask[c]) {
                    space->flat_of_cell[c] = next++;
                    space->coord_of.push_back({x, y, z});
                }
            }
    if (next == 0) throw EmptyMaskError("build_space: mask has no true cells");
    return space;
}

std::vector<std::uint8_t> full_mask(std::array<int, 3> dims) {
    return std::vector<std::uint8_t>(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 1);
}

std::vector<std::uint8_t> ellipsoid_mask(std::array<int, 3> dims, std::array<double, 3> semi_axes) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
    const double cx = (dims[0] - 1) / 2.0, cy = (dims[1] - 1) / 2.0, cz = (dims[2] - 1) / 2.0;
    std::size_t i = 0;
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x, ++i) {
                const double rx = (x - cx) / semi_axes[0];
                const double ry = (y - cy) / semi_axes[1];
                const double rz = (z - cz) / semi_axes[2];
                if (rx * rx + ry * ry + rz * rz <= 1.0) mask[i] = 1;
            }
    return mask;
}

AdjacencyGraph adjacency(const VolumeSpace& space) {
    AdjacencyGraph g;
    g.n_nodes = space.p();
    // For each in-mask voxel, link to its +x, +y, +z neighbors only; that
    // enumerates every face pair once with a < b in flat order.
    for (std::size_t j = 0; j < space.p(); ++j) {
        const auto [x, y, z] = space.coord_of[j];
        const std::int32_t a = static_cast<std::int32_t>(j);
        const std::int32_t nx = space.flat_index(x + 1, y, z);
        const std::int32_t ny = space.flat_index(x, y + 1, z);
        const std::int32_t nz = space.flat_index(x, y, z + 1);
        if (nx >= 0) g.edges.emplace_back(a, nx);
        if (ny >= 0) g.edges.emplace_back(a, ny);
        if (nz >= 0) g.edges.emplace_back(a, nz);
    }
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("VOL1: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is) {
    std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace

void write_volume(const ContrastImage& image, const std::string& path) {
    const VolumeSpace& sp = *image.space;
    if (image.values.size() != sp.p()) throw ShapeError("write_volume: value count != p");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write("VOL1", 4);
    put_u32(os, static_cast<std::uint32_t>(sp.dims[0]));
    put_u32(os, static_cast<std::uint32_t>(sp.dims[1]));
    put_u32(os, static_cast<std::uint32_t>(sp.dims[2]));
    put_f32(os, static_cast<float>(sp.voxel_size_mm[0]));
    put_f32(os, static_cast<float>(sp.voxel_size_mm[1]));
    put_f32(os, static_cast<float>(sp.voxel_size_mm[2]));
    os.write(reinterpret_cast<const char*>(sp.mask.data()), static_cast<std::streamsize>(sp.mask.size()));
    for (double v : image.values) put_f32(os, static_cast<float>(v));
    if (!os) throw IoError("write failed: " + path);
}

ContrastImage read_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "VOL1", 4) != 0) throw FormatError("VOL1: bad magic in " + path);
    std::array<int, 3> dims{};
    for (int a = 0; a < 3; ++a) {
        std::uint32_t v = get_u32(is);
        if (v == 0 || v > (1u << 20)) throw FormatError("VOL1: bad dimension");
        dims[a] = static_cast<int>(v);
    }
    std::array<double, 3> vs{};
    for (int a = 0; a < 3; ++a) vs[a] = get_f32(is);
    const std::size_t cells = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    std::vector<std::uint8_t> mask(cells);
    is.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(cells));
    if (!is) throw FormatError("VOL1: truncated mask");
    for (std::uint8_t m : mask)
        if (m > 1) throw FormatError("VOL1: mask byte not 0/1");
    SpacePtr space = build_space(dims, vs, mask);
    ContrastImage img;
    img.space = space;
    img.values.resize(space->p());
    for (std::size_t j = 0; j < img.values.size(); ++j) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (!is) throw FormatError("VOL1: payload shorter than p*4 bytes");
        std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                             (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        float v;
        std::memcpy(&v, &bits, 4);
        img.values[j] = v;
    }
    return img;
}

void write_dataset(const Dataset& dataset, const std::string& dir, const std::string& manifest_name) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(fs::path(dir) / "volumes");

    ContrastImage maskvol;
    maskvol.space = dataset.space;
    maskvol.values.assign(dataset.space->p(), 1.0);
    write_volume(maskvol, (fs::path(dir) / "mask.vol").string());

    nlohmann::json manifest;
    manifest["mask_volume"] = "mask.vol";
    manifest["samples"] = nlohmann::json::array();
    for (std::size_t i = 0; i < dataset.n(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "volumes/sample_%04zu.vol", i);
        ContrastImage img;
        img.space = dataset.space;
        img.values.assign(dataset.X.row(i), dataset.X.row(i) + dataset.p());
        write_volume(img, (fs::path(dir) / name).string());
        manifest["samples"].push_back({{"sample_id", dataset.sample_ids[i]},
                                       {"label", dataset.y[i]},
                                       {"volume", name}});
    }
    std::ofstream os(fs::path(dir) / manifest_name);
    if (!os) throw IoError("cannot write dataset manifest");
    os << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream is(manifest_path);
    if (!is) throw IoError("cannot open dataset manifest: " + manifest_path);
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset manifest: ") + e.what());
    }
    const fs::path base = fs::path(manifest_path).parent_path();

    Dataset ds;
    ContrastImage maskvol = read_volume((base / manifest.at("mask_volume").get<std::string>()).string());
    ds.space = maskvol.space;

    const auto& samples = manifest.at("samples");
    ds.X = Matrix(samples.size(), ds.space->p());
    std::size_t i = 0;
    for (const auto& s : samples) {
        const int label = s.at("label").get<int>();
        if (label != 1 && label != -1) throw FormatError("dataset manifest: label must be -1 or +1");
        ds.y.push_back(label);
        ds.sample_ids.push_back(s.at("sample_id").get<std::string>());
        ContrastImage img = read_volume((base / s.at("volume").get<std::string>()).string());
        if (!img.space->same_grid(*ds.space)) throw ShapeError("dataset volume grid differs from mask volume");
        std::copy(img.values.begin(), img.values.end(), ds.X.row(i));
        ++i;
    }
    if (ds.n() < 2) throw ArgumentError("dataset needs at least 2 samples");
    return ds;
}

} // namespace stabsel
