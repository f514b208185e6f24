#include "stabsel/parcellation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <tuple>

#include <json.hpp>

#include "stabsel/errors.hpp"

namespace stabsel {

namespace {

double ward_cost(const double* sum_a, double size_a, const double* sum_b, double size_b, std::size_t n) {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = sum_a[i] / size_a - sum_b[i] / size_b;
        sq += d * d;
    }
    return size_a * size_b / (size_a + size_b) * sq;
}

} // namespace

ParcellationTree build_tree(const Matrix& data, const AdjacencyGraph& graph) {
    const std::size_t p = graph.n_nodes;
    const std::size_t n = data.rows;
    if (data.cols != p) throw ShapeError("build_tree: data columns must match graph nodes");
    if (n < 1) throw ShapeError("build_tree: need at least one data row");
    if (p == 0) throw ArgumentError("build_tree: empty graph");

    const std::size_t max_nodes = 2 * p; // leaves + at most p-1 internal nodes
    std::vector<double> sums(max_nodes * n, 0.0);
    std::vector<double> sizes(max_nodes, 0.0);
    std::vector<char> active(max_nodes, 0);
    std::vector<std::set<std::int32_t>> neighbors(max_nodes);

    // column j of the row-major data becomes the leaf-j sum vector
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t i = 0; i < n; ++i) sums[j * n + i] = data(i, j);
        sizes[j] = 1.0;
        active[j] = 1;
    }
    for (const auto& [a, b] : graph.edges) {
        if (a == b) throw ArgumentError("build_tree: self-loop in graph");
        neighbors[a].insert(b);
        neighbors[b].insert(a);
    }

    using Entry = std::tuple<double, std::int32_t, std::int32_t>; // cost, a, b with a < b
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
    for (const auto& [a, b] : graph.edges)
        heap.emplace(ward_cost(&sums[a * static_cast<std::size_t>(n)], 1.0, &sums[b * static_cast<std::size_t>(n)], 1.0, n), a, b);

    ParcellationTree tree;
    tree.n_leaves = static_cast<std::int32_t>(p);
    std::int32_t next_id = static_cast<std::int32_t>(p);

    while (!heap.empty()) {
        const auto [cost, a, b] = heap.top();
        heap.pop();
        if (!active[a] || !active[b]) continue; // stale entry
        const std::int32_t id = next_id++;
        active[a] = active[b] = 0;
        active[id] = 1;
        sizes[id] = sizes[a] + sizes[b];
        for (std::size_t i = 0; i < n; ++i)
            sums[static_cast<std::size_t>(id) * n + i] = sums[static_cast<std::size_t>(a) * n + i] + sums[static_cast<std::size_t>(b) * n + i];
        tree.merges.push_back({a, b, cost, id});

        std::set<std::int32_t>& merged = neighbors[id];
        for (std::int32_t c : neighbors[a])
            if (c != b) merged.insert(c);
        for (std::int32_t c : neighbors[b])
            if (c != a) merged.insert(c);
        neighbors[a].clear();
        neighbors[b].clear();
        for (std::int32_t c : merged) {
            neighbors[c].erase(a);
            neighbors[c].erase(b);
            neighbors[c].insert(id);
            const double cc = ward_cost(&sums[static_cast<std::size_t>(id) * n], sizes[id],
                                        &sums[static_cast<std::size_t>(c) * n], sizes[c], n);
            heap.emplace(cc, std::min(id, c), std::max(id, c));
        }
    }

    tree.n_components = static_cast<std::int32_t>(p - tree.merges.size());
    return tree;
}

Parcellation cut(const ParcellationTree& tree, std::int32_t K) {
    const std::int32_t p = tree.n_leaves;
    const std::int32_t c = tree.n_components;
    if (K < c || K > p) throw ArgumentError("cut: K must be in [components, p]");

    const std::size_t applied = static_cast<std::size_t>(p - K);
    std::vector<std::int32_t> parent(static_cast<std::size_t>(p) + tree.merges.size(), -1);
    for (std::size_t t = 0; t < applied; ++t) {
        parent[tree.merges[t].a] = tree.merges[t].node_id;
        parent[tree.merges[t].b] = tree.merges[t].node_id;
    }
    auto find_root = [&parent](std::int32_t v) {
        std::int32_t r = v;
        while (parent[r] >= 0) r = parent[r];
        while (parent[v] >= 0) { // path compression
            const std::int32_t next = parent[v];
            parent[v] = r;
            v = next;
        }
        return r;
    };

    Parcellation out;
    out.labels.assign(static_cast<std::size_t>(p), -1);
    std::vector<std::int32_t> label_of_root(parent.size(), -1);
    for (std::int32_t v = 0; v < p; ++v) {
        const std::int32_t r = find_root(v);
        if (label_of_root[r] < 0) {
            label_of_root[r] = out.n_parcels++;
            out.parcel_sizes.push_back(0);
        }
        out.labels[v] = label_of_root[r];
        ++out.parcel_sizes[label_of_root[r]];
    }
    return out;
}

Matrix transform(const Parcellation& parcellation, const Matrix& data) {
    if (data.cols != parcellation.labels.size()) throw ShapeError("transform: column count != voxel count");
    const std::size_t K = static_cast<std::size_t>(parcellation.n_parcels);
    Matrix out(data.rows, K, 0.0);
    for (std::size_t i = 0; i < data.rows; ++i) {
        const double* src = data.row(i);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < data.cols; ++j) dst[parcellation.labels[j]] += src[j];
        for (std::size_t k = 0; k < K; ++k) dst[k] /= parcellation.parcel_sizes[k];
    }
    return out;
}

std::vector<double> inverse_transform(const Parcellation& parcellation, const std::vector<double>& scores) {
    if (scores.size() != static_cast<std::size_t>(parcellation.n_parcels))
        throw ShapeError("inverse_transform: score count != parcel count");
    std::vector<double> out(parcellation.labels.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = scores[parcellation.labels[j]];
    return out;
}

Parcellation grid_parcellation(const VolumeSpace& space, std::array<int, 3> block) {
    for (int b : block)
        if (b <= 0) throw ArgumentError("grid_parcellation: block dims must be positive");
    Parcellation out;
    out.labels.assign(space.p(), -1);
    const int bx = (space.dims[0] + block[0] - 1) / block[0];
    const int by = (space.dims[1] + block[1] - 1) / block[1];
    std::vector<std::int32_t> label_of_block(static_cast<std::size_t>(bx) * by *
                                                 ((space.dims[2] + block[2] - 1) / block[2]),
                                             -1);
    for (std::size_t j = 0; j < space.p(); ++j) {
        const auto [x, y, z] = space.coord_of[j];
        const std::size_t blk = static_cast<std::size_t>(x / block[0]) +
                                static_cast<std::size_t>(bx) * (static_cast<std::size_t>(y / block[1]) +
                                                                static_cast<std::size_t>(by) * (z / block[2]));
        if (label_of_block[blk] < 0) {
            label_of_block[blk] = out.n_parcels++;
            out.parcel_sizes.push_back(0);
        }
        out.labels[j] = label_of_block[blk];
        ++out.parcel_sizes[label_of_block[blk]];
    }
    return out;
}

void save_parcellation(const Parcellation& parcellation, const ParcellationTree& tree,
                       const SpacePtr& space, const std::string& volume_path,
                       const std::string& sidecar_path) {
    if (parcellation.labels.size() != space->p()) throw ShapeError("save_parcellation: label count != p");
    ContrastImage img;
    img.space = space;
    img.values.assign(parcellation.labels.begin(), parcellation.labels.end());
    write_volume(img, volume_path);

    nlohmann::json sidecar;
    sidecar["K"] = parcellation.n_parcels;
    sidecar["tie_break_version"] = 1;
    sidecar["n_leaves"] = tree.n_leaves;
    sidecar["n_components"] = tree.n_components;
    auto merges = nlohmann::json::array();
    for (const Merge& m : tree.merges) merges.push_back({m.a, m.b, m.cost, m.node_id});
    sidecar["merges"] = std::move(merges);
    std::ofstream os(sidecar_path);
    if (!os) throw IoError("cannot write parcellation sidecar: " + sidecar_path);
    os << sidecar.dump() << "\n";
}

Parcellation load_parcellation(const std::string& volume_path) {
    ContrastImage img = read_volume(volume_path);
    Parcellation out;
    out.labels.resize(img.values.size());
    std::int32_t max_label = -1;
    for (std::size_t j = 0; j < img.values.size(); ++j) {
        out.labels[j] = static_cast<std::int32_t>(std::lround(img.values[j]));
        if (out.labels[j] < 0) throw FormatError("parcellation volume: negative label");
        max_label = std::max(max_label, out.labels[j]);
    }
    out.n_parcels = max_label + 1;
    out.parcel_sizes.assign(static_cast<std::size_t>(out.n_parcels), 0);
    for (std::int32_t l : out.labels) ++out.parcel_sizes[l];
    for (std::int32_t s : out.parcel_sizes)
        if (s == 0) throw FormatError("parcellation volume: empty parcel id");
    return out;
}

} // namespace stabsel
