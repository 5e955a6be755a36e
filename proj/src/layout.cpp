#include "dsdg/layout.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

#include "dsdg/errors.hpp"

namespace dsdg {

namespace {

constexpr std::size_t unassigned = npos;

std::vector<std::size_t> bfs_distance(const Mesh& mesh, const std::vector<std::size_t>& sources) {
    std::vector<std::size_t> dist(mesh.num_cells(), npos);
    std::deque<std::size_t> queue;
    for (std::size_t s : sources) {
        dist[s] = 0;
        queue.push_back(s);
    }
    while (!queue.empty()) {
        const std::size_t c = queue.front();
        queue.pop_front();
        for (std::size_t nb : face_neighbors(mesh, c)) {
            if (dist[nb] == npos) {
                dist[nb] = dist[c] + 1;
                queue.push_back(nb);
            }
        }
    }
    return dist;
}

void rebalance(const Mesh& mesh, OwnerMap& owner, std::size_t count) {
    std::vector<std::size_t> size(count, 0);
    for (std::size_t o : owner) ++size[o];
    const double limit = 1.2 * static_cast<double>(mesh.num_cells()) / static_cast<double>(count);
    for (std::size_t iter = 0; iter < mesh.num_cells(); ++iter) {
        const auto largest = static_cast<std::size_t>(std::max_element(size.begin(), size.end()) - size.begin());
        if (static_cast<double>(size[largest]) <= limit) return;
        // move the boundary cell of the largest part that borders the smallest neighbor part
        std::size_t best_cell = npos, best_target = npos;
        for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
            if (owner[c] != largest) continue;
            for (std::size_t nb : face_neighbors(mesh, c)) {
                const std::size_t t = owner[nb];
                if (t == largest) continue;
                if (best_target == npos || size[t] < size[best_target]) {
                    best_target = t;
                    best_cell = c;
                }
            }
        }
        if (best_cell == npos || size[best_target] + 1 >= size[largest]) return;
        owner[best_cell] = best_target;
        --size[largest];
        ++size[best_target];
    }
}

}  // namespace

OwnerMap partition_cells(const Mesh& mesh, std::size_t count, std::uint64_t seed) {
    const std::size_t n = mesh.num_cells();
    if (count < 1) throw ConfigError("partition count must be at least 1");
    if (count > n) throw ConfigError("partition count exceeds cell count");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> seeds;
    seeds.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    while (seeds.size() < count) {
        const auto dist = bfs_distance(mesh, seeds);
        std::size_t best = npos;
        for (std::size_t c = 0; c < n; ++c) {
            if (dist[c] == 0) continue;
            if (best == npos || dist[c] > dist[best]) best = c;  // npos distance = unreachable, picked first
        }
        seeds.push_back(best);
    }

    OwnerMap owner(n, unassigned);
    std::vector<std::deque<std::size_t>> frontier(count);
    std::vector<std::size_t> size(count, 0);
    auto assign = [&](std::size_t cell, std::size_t part) {
        owner[cell] = part;
        ++size[part];
        for (std::size_t nb : face_neighbors(mesh, cell))
            if (owner[nb] == unassigned) frontier[part].push_back(nb);
    };
    for (std::size_t p = 0; p < count; ++p) assign(seeds[p], p);

    std::size_t assigned = count;
    while (assigned < n) {
        std::size_t grow = npos;
        for (std::size_t p = 0; p < count; ++p) {
            while (!frontier[p].empty() && owner[frontier[p].front()] != unassigned) frontier[p].pop_front();
            if (frontier[p].empty()) continue;
            if (grow == npos || size[p] < size[grow]) grow = p;
        }
        if (grow == npos) {
            // disconnected remainder: reseed it in the smallest part
            const auto p = static_cast<std::size_t>(std::min_element(size.begin(), size.end()) - size.begin());
            const auto c = static_cast<std::size_t>(std::find(owner.begin(), owner.end(), unassigned) - owner.begin());
            assign(c, p);
        } else {
            const std::size_t c = frontier[grow].front();
            frontier[grow].pop_front();
            assign(c, grow);
        }
        ++assigned;
    }
    rebalance(mesh, owner, count);
    return owner;
}

CellSet SubdomainLayout::overlap(std::size_t i, std::size_t j) const {
    auto it = overlaps.find(std::minmax(i, j));
    return it == overlaps.end() ? CellSet{} : it->second;
}

SubdomainLayout build_layout(const Mesh& mesh, const OwnerMap& owner, std::size_t layers) {
    if (owner.size() != mesh.num_cells()) throw LayoutError("owner map size does not match cell count");
    if (layers < 1) throw LayoutError("overlap needs at least one layer");
    std::size_t count = 0;
    for (std::size_t o : owner) count = std::max(count, o + 1);

    SubdomainLayout layout;
    layout.owner = owner;
    layout.layers = layers;
    layout.subdomains.resize(count);

    std::vector<std::vector<std::size_t>> owned(count);
    for (std::size_t c = 0; c < owner.size(); ++c) owned[owner[c]].push_back(c);

    for (std::size_t i = 0; i < count; ++i) {
        Subdomain& sd = layout.subdomains[i];
        if (owned[i].empty()) throw LayoutError("subdomain " + std::to_string(i) + " owns no cells");
        sd.owned = CellSet(owned[i]);
        sd.overlapped = extend_cells(mesh, sd.owned, layers);
        sd.interface_faces = interior_boundary_faces(mesh, sd.overlapped);
        sd.prediction = interface_cells(mesh, sd.interface_faces);
        sd.dirichlet_faces = labeled_faces(mesh, sd.overlapped, BoundaryLabel::Dirichlet);
        if (count > 1 && sd.overlapped.size() == mesh.num_cells()) {
            layout.warnings.push_back("subdomain " + std::to_string(i) +
                                      " covers the whole mesh; splitting degenerates to the global method");
        }
    }

    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = i + 1; j < count; ++j) {
            CellSet s = set_intersection(layout.subdomains[i].overlapped, layout.subdomains[j].overlapped);
            if (!s.empty()) layout.overlaps.emplace(std::make_pair(i, j), std::move(s));
        }
    }

    double width = std::numeric_limits<double>::infinity();
    const auto& v = mesh.vertices();
    for (std::size_t i = 0; i < count; ++i) {
        const Subdomain& sd = layout.subdomains[i];
        if (sd.interface_faces.empty()) continue;
        const auto inner = interior_boundary_faces(mesh, sd.owned);
        for (std::size_t f : sd.interface_faces) {
            const Face& a = mesh.face(f);
            for (std::size_t g : inner) {
                const Face& b = mesh.face(g);
                width = std::min(width, segment_distance(v[a.vertices[0]], v[a.vertices[1]], v[b.vertices[0]],
                                                         v[b.vertices[1]]));
            }
        }
    }
    layout.overlap_width = std::isfinite(width) ? width : 0.0;
    return layout;
}

std::vector<std::string> validate_layout(const Mesh& mesh, const SubdomainLayout& layout) {
    std::vector<std::string> problems;
    std::vector<std::size_t> cover(mesh.num_cells(), 0);
    for (std::size_t i = 0; i < layout.count(); ++i) {
        const Subdomain& sd = layout.subdomains[i];
        const std::string tag = "subdomain " + std::to_string(i) + ": ";
        for (std::size_t c : sd.owned) ++cover[c];
        if (!std::includes(sd.overlapped.begin(), sd.overlapped.end(), sd.owned.begin(), sd.owned.end())) {
            problems.push_back(tag + "owned cells not contained in overlapped set");
        }
        if (sd.overlapped != extend_cells(mesh, sd.owned, layout.layers)) {
            problems.push_back(tag + "overlapped set is not the layer extension");
        }
        if (sd.interface_faces != interior_boundary_faces(mesh, sd.overlapped)) {
            problems.push_back(tag + "interface faces mismatch");
        }
        for (std::size_t f : sd.interface_faces) {
            const Face& face = mesh.face(f);
            if (!sd.prediction.contains(face.cells[0]) || !sd.prediction.contains(face.cells[1])) {
                problems.push_back(tag + "interface face " + std::to_string(f) + " not straddled by prediction strip");
            }
        }
    }
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        if (cover[c] != 1) problems.push_back("cell " + std::to_string(c) + " owned " + std::to_string(cover[c]) + " times");
    }
    return problems;
}

}  // namespace dsdg
