#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stabsel/errors.hpp"
#include "stabsel/volume.hpp"

using namespace stabsel;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// brute-force count of axis-aligned neighbor pairs inside the mask
std::size_t brute_force_edges(const VolumeSpace& sp) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < sp.p(); ++j) {
        const auto [x, y, z] = sp.coord_of[j];
        if (sp.in_mask(x + 1, y, z)) ++count;
        if (sp.in_mask(x, y + 1, z)) ++count;
        if (sp.in_mask(x, y, z + 1)) ++count;
    }
    return count;
}

} // namespace

TEST_CASE("build_space flat order is lexicographic with x fastest") {
    auto sp = build_space({2, 2, 2}, {1, 1, 1}, full_mask({2, 2, 2}));
    CHECK(sp->p() == 8);
    CHECK(sp->flat_index(0, 0, 0) == 0);
    CHECK(sp->flat_index(1, 0, 0) == 1);
    CHECK(sp->flat_index(0, 1, 0) == 2);
    CHECK(sp->flat_index(0, 0, 1) == 4);
}

TEST_CASE("build_space single-voxel mask") {
    std::vector<std::uint8_t> mask(27, 0);
    mask[13] = 1; // center of 3x3x3
    auto sp = build_space({3, 3, 3}, {2, 2, 2}, mask);
    CHECK(sp->p() == 1);
    CHECK(sp->flat_index(1, 1, 1) == 0);
    CHECK(sp->flat_index(0, 0, 0) == -1);
}

TEST_CASE("ellipsoid mask voxel count matches brute-force cell count") {
    const std::array<int, 3> dims{24, 24, 24};
    const std::array<double, 3> axes{10, 10, 10};
    auto sp = build_space(dims, {3, 3, 3}, ellipsoid_mask(dims, axes));

    std::size_t expected = 0;
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) {
                const double rx = (x - 11.5) / 10.0, ry = (y - 11.5) / 10.0, rz = (z - 11.5) / 10.0;
                if (rx * rx + ry * ry + rz * rz <= 1.0) ++expected;
            }
    CHECK(sp->p() == expected);
    CHECK(expected > 0);
}

TEST_CASE("build_space rejects bad input") {
    CHECK_THROWS_AS(build_space({2, 2, 2}, {1, 1, 1}, std::vector<std::uint8_t>(8, 0)), EmptyMaskError);
    CHECK_THROWS_AS(build_space({2, 2, 2}, {1, 1, 1}, std::vector<std::uint8_t>(7, 1)), ShapeError);
    CHECK_THROWS_AS(build_space({0, 2, 2}, {1, 1, 1}, full_mask({2, 2, 2})), ArgumentError);
}

TEST_CASE("index map round-trips both ways") {
    const std::array<int, 3> dims{7, 5, 6};
    auto sp = build_space(dims, {2, 2.5, 3}, ellipsoid_mask(dims, {3, 2, 2.5}));
    for (std::size_t j = 0; j < sp->p(); ++j) {
        const auto [x, y, z] = sp->coord_of[j];
        CHECK(sp->flat_index(x, y, z) == static_cast<std::int32_t>(j));
    }
    std::size_t in_mask = 0;
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x)
                in_mask += sp->in_mask(x, y, z);
    CHECK(in_mask == sp->p());
}

TEST_CASE("adjacency on tiny masks") {
    auto two = build_space({2, 1, 1}, {1, 1, 1}, full_mask({2, 1, 1}));
    CHECK(adjacency(*two).edges.size() == 1);

    auto cube = build_space({2, 2, 2}, {1, 1, 1}, full_mask({2, 2, 2}));
    CHECK(adjacency(*cube).edges.size() == 12);

    std::vector<std::uint8_t> lone(27, 0);
    lone[13] = 1;
    auto single = build_space({3, 3, 3}, {1, 1, 1}, lone);
    CHECK(adjacency(*single).edges.empty());
}

TEST_CASE("adjacency matches brute force and degree stays <= 6") {
    const std::array<int, 3> dims{9, 8, 10};
    auto sp = build_space(dims, {1, 1, 1}, ellipsoid_mask(dims, {4, 3.5, 4.5}));
    const AdjacencyGraph g = adjacency(*sp);
    CHECK(g.edges.size() == brute_force_edges(*sp));

    std::vector<int> degree(sp->p(), 0);
    for (const auto& [a, b] : g.edges) {
        CHECK(a < b);
        ++degree[a];
        ++degree[b];
    }
    for (int d : degree) CHECK(d <= 6);
}

TEST_CASE("volume round-trip is bit-exact") {
    auto sp = build_space({2, 2, 2}, {1.5, 2, 2.5}, full_mask({2, 2, 2}));
    ContrastImage img;
    img.space = sp;
    for (int j = 0; j < 8; ++j) img.values.push_back(j);
    const std::string path = temp_path("stabsel_test_roundtrip.vol");
    write_volume(img, path);
    const ContrastImage back = read_volume(path);
    CHECK(back.values == img.values);
    CHECK(back.space->same_grid(*sp));

    // write(read(f)) reproduces the file byte for byte
    const std::string path2 = temp_path("stabsel_test_roundtrip2.vol");
    write_volume(back, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("volume reader rejects malformed files") {
    const std::string path = temp_path("stabsel_test_badvol.vol");
    {
        std::ofstream os(path, std::ios::binary);
        os << "XXXXjunkjunkjunk";
    }
    CHECK_THROWS_AS(read_volume(path), FormatError);

    auto sp = build_space({2, 2, 2}, {1, 1, 1}, full_mask({2, 2, 2}));
    ContrastImage img;
    img.space = sp;
    img.values.assign(8, 1.0);
    write_volume(img, path);
    // truncate payload below p * 4 bytes
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 6);
    CHECK_THROWS_AS(read_volume(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("dataset manifest round-trip") {
    auto sp = build_space({3, 2, 2}, {2, 2, 2}, full_mask({3, 2, 2}));
    Dataset ds;
    ds.space = sp;
    ds.X = Matrix(4, sp->p());
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < sp->p(); ++j) ds.X(i, j) = static_cast<double>(i) + 0.25 * static_cast<double>(j);
    ds.y = {1, 1, -1, -1};
    ds.sample_ids = {"a", "b", "c", "d"};

    const std::string dir = temp_path("stabsel_test_dataset");
    write_dataset(ds, dir);
    const Dataset back = read_dataset(dir + "/dataset.json");
    CHECK(back.y == ds.y);
    CHECK(back.sample_ids == ds.sample_ids);
    CHECK(back.X == ds.X);
    std::filesystem::remove_all(dir);
}
