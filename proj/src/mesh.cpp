#include "dsdg/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "dsdg/errors.hpp"

namespace dsdg {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

CellSet::CellSet(std::vector<std::size_t> cells) : cells_(std::move(cells)) {
    std::sort(cells_.begin(), cells_.end());
    cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
}

CellSet CellSet::all(std::size_t n) {
    std::vector<std::size_t> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = i;
    CellSet s;
    s.cells_ = std::move(c);
    return s;
}

bool CellSet::contains(std::size_t cell) const {
    return std::binary_search(cells_.begin(), cells_.end(), cell);
}

CellSet set_union(const CellSet& a, const CellSet& b) {
    std::vector<std::size_t> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return CellSet(std::move(out));
}

CellSet set_intersection(const CellSet& a, const CellSet& b) {
    std::vector<std::size_t> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return CellSet(std::move(out));
}

CellSet set_difference(const CellSet& a, const CellSet& b) {
    std::vector<std::size_t> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return CellSet(std::move(out));
}

namespace {

double signed_area(Point a, Point b, Point c) {
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

}  // namespace

Mesh::Mesh(std::vector<Point> vertices, std::vector<std::array<std::size_t, 3>> cells)
    : vertices_(std::move(vertices)), cells_(std::move(cells)) {
    const std::size_t nv = vertices_.size();
    for (auto& c : cells_) {
        for (auto v : c) {
            if (v >= nv) throw DomainError("cell references vertex " + std::to_string(v) + " out of range");
        }
        if (signed_area(vertices_[c[0]], vertices_[c[1]], vertices_[c[2]]) < 0.0) std::swap(c[1], c[2]);
    }

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_to_face;
    cell_faces_.resize(cells_.size());
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        const auto& v = cells_[c];
        for (std::size_t e = 0; e < 3; ++e) {
            const std::size_t a = v[(e + 1) % 3];
            const std::size_t b = v[(e + 2) % 3];
            const auto key = std::minmax(a, b);
            auto [it, inserted] = edge_to_face.try_emplace({key.first, key.second}, faces_.size());
            if (inserted) {
                Face f;
                f.vertices = {a, b};
                f.cells = {c, npos};
                faces_.push_back(f);
            } else {
                Face& f = faces_[it->second];
                if (f.cells[1] != npos) {
                    throw DomainError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                      ") shared by more than two cells");
                }
                f.cells[1] = c;
            }
            cell_faces_[c][e] = it->second;
        }
    }

    vertex_cell_offsets_.assign(nv + 1, 0);
    for (const auto& c : cells_)
        for (auto v : c) ++vertex_cell_offsets_[v + 1];
    for (std::size_t v = 0; v < nv; ++v) vertex_cell_offsets_[v + 1] += vertex_cell_offsets_[v];
    vertex_cell_list_.resize(vertex_cell_offsets_[nv]);
    std::vector<std::size_t> fill(vertex_cell_offsets_.begin(), vertex_cell_offsets_.end() - 1);
    for (std::size_t c = 0; c < cells_.size(); ++c)
        for (auto v : cells_[c]) vertex_cell_list_[fill[v]++] = c;

    kappa_.assign(cells_.size(), 1.0);
    region_.assign(cells_.size(), 0);
    boundary_tag_.assign(faces_.size(), 0);
}

std::size_t Mesh::num_interior_faces() const {
    return static_cast<std::size_t>(
        std::count_if(faces_.begin(), faces_.end(), [](const Face& f) { return !f.is_boundary(); }));
}

std::span<const std::size_t> Mesh::vertex_cells(std::size_t v) const {
    return {vertex_cell_list_.data() + vertex_cell_offsets_[v],
            vertex_cell_offsets_[v + 1] - vertex_cell_offsets_[v]};
}

std::size_t Mesh::neighbor(std::size_t cell, std::size_t face) const {
    const Face& f = faces_[face];
    return f.cells[0] == cell ? f.cells[1] : f.cells[0];
}

void Mesh::set_kappa(std::vector<double> kappa) {
    if (kappa.size() != cells_.size()) throw DomainError("kappa size does not match cell count");
    for (double k : kappa)
        if (!(k > 0.0)) throw DomainError("kappa must be positive");
    kappa_ = std::move(kappa);
}

void Mesh::sample_kappa(const std::function<double(Point)>& kappa) {
    std::vector<double> k(cells_.size());
    for (std::size_t c = 0; c < cells_.size(); ++c) k[c] = kappa(centroid(c));
    set_kappa(std::move(k));
}

void Mesh::set_regions(std::vector<int> regions) {
    if (regions.size() != cells_.size()) throw DomainError("region size does not match cell count");
    region_ = std::move(regions);
}

void Mesh::set_label(std::size_t f, BoundaryLabel label) {
    if (!faces_[f].is_boundary()) throw DomainError("only boundary faces carry labels");
    faces_[f].label = label;
}

double Mesh::cell_diameter(std::size_t c) const {
    const auto& v = cells_[c];
    return std::max({distance(vertices_[v[0]], vertices_[v[1]]), distance(vertices_[v[1]], vertices_[v[2]]),
                     distance(vertices_[v[2]], vertices_[v[0]])});
}

double Mesh::face_diameter(std::size_t f) const {
    return distance(vertices_[faces_[f].vertices[0]], vertices_[faces_[f].vertices[1]]);
}

double Mesh::cell_area(std::size_t c) const {
    const auto& v = cells_[c];
    return signed_area(vertices_[v[0]], vertices_[v[1]], vertices_[v[2]]);
}

double Mesh::max_diameter() const {
    double h = 0.0;
    for (std::size_t c = 0; c < cells_.size(); ++c) h = std::max(h, cell_diameter(c));
    return h;
}

double Mesh::min_diameter() const {
    double h = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cells_.size(); ++c) h = std::min(h, cell_diameter(c));
    return h;
}

Point Mesh::centroid(std::size_t c) const {
    const auto& v = cells_[c];
    return {(vertices_[v[0]].x + vertices_[v[1]].x + vertices_[v[2]].x) / 3.0,
            (vertices_[v[0]].y + vertices_[v[1]].y + vertices_[v[2]].y) / 3.0};
}

Point Mesh::face_midpoint(std::size_t f) const {
    const Point a = vertices_[faces_[f].vertices[0]];
    const Point b = vertices_[faces_[f].vertices[1]];
    return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
}

Point Mesh::outward_normal(std::size_t f, std::size_t cell) const {
    const Point a = vertices_[faces_[f].vertices[0]];
    const Point b = vertices_[faces_[f].vertices[1]];
    const double len = distance(a, b);
    Point n{(b.y - a.y) / len, -(b.x - a.x) / len};
    const Point c = centroid(cell);
    const Point m{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
    if (n.x * (m.x - c.x) + n.y * (m.y - c.y) < 0.0) n = {-n.x, -n.y};
    return n;
}

std::size_t Mesh::find_face(std::size_t a, std::size_t b) const {
    for (std::size_t c : vertex_cells(a)) {
        for (std::size_t f : cell_faces_[c]) {
            const auto& fv = faces_[f].vertices;
            if ((fv[0] == a && fv[1] == b) || (fv[0] == b && fv[1] == a)) return f;
        }
    }
    return npos;
}

bool Mesh::kappa_within(double lo, double hi) const {
    return std::all_of(kappa_.begin(), kappa_.end(), [&](double k) { return lo <= k && k <= hi; });
}

Mesh build_tensor_mesh(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() < 2 || ys.size() < 2) throw DomainError("tensor mesh needs at least two coordinates per axis");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) throw DomainError("tensor mesh x coordinates must increase strictly");
    for (std::size_t j = 1; j < ys.size(); ++j)
        if (!(ys[j] > ys[j - 1])) throw DomainError("tensor mesh y coordinates must increase strictly");
    const std::size_t nx = xs.size() - 1, ny = ys.size() - 1;
    std::vector<Point> vertices;
    vertices.reserve((nx + 1) * (ny + 1));
    for (std::size_t j = 0; j <= ny; ++j)
        for (std::size_t i = 0; i <= nx; ++i) vertices.push_back({xs[i], ys[j]});
    std::vector<std::array<std::size_t, 3>> cells;
    cells.reserve(2 * nx * ny);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const std::size_t p00 = j * (nx + 1) + i;
            const std::size_t p10 = p00 + 1;
            const std::size_t p01 = p00 + nx + 1;
            const std::size_t p11 = p01 + 1;
            cells.push_back({p00, p10, p11});
            cells.push_back({p00, p11, p01});
        }
    }
    return Mesh(std::move(vertices), std::move(cells));
}

std::vector<double> uniform_coordinates(double a, double b, std::size_t n) {
    std::vector<double> c(n + 1);
    const double d = (b - a) / static_cast<double>(n);
    for (std::size_t i = 0; i <= n; ++i) c[i] = i == n ? b : a + static_cast<double>(i) * d;
    return c;
}

std::vector<double> banded_coordinates(double a, double b, std::size_t n, double lo, double hi, std::size_t factor) {
    if (n < 1 || !(b > a)) throw DomainError("degenerate coordinate range");
    if (factor < 1) throw DomainError("refinement factor must be at least 1");
    const double h = (b - a) / static_cast<double>(n);
    std::vector<double> c{a};
    for (std::size_t i = 0; i < n; ++i) {
        const double x0 = a + static_cast<double>(i) * h;
        const double mid = x0 + 0.5 * h;
        const std::size_t parts = (mid >= lo && mid <= hi) ? factor : 1;
        for (std::size_t k = 1; k <= parts; ++k) {
            c.push_back(i + 1 == n && k == parts ? b : x0 + h * static_cast<double>(k) / static_cast<double>(parts));
        }
    }
    return c;
}

Mesh build_structured_mesh(std::size_t nx, std::size_t ny, const Rectangle& extent) {
    if (nx < 1 || ny < 1) throw DomainError("structured mesh needs nx, ny >= 1");
    if (!(extent.x1 > extent.x0) || !(extent.y1 > extent.y0)) throw DomainError("degenerate mesh extent");
    const auto xs = uniform_coordinates(extent.x0, extent.x1, nx);
    const auto ys = uniform_coordinates(extent.y0, extent.y1, ny);
    return build_tensor_mesh(xs, ys);
}

Mesh classify_boundary(Mesh mesh, const std::function<bool(Point)>& dirichlet) {
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        if (!mesh.face(f).is_boundary()) continue;
        mesh.set_label(f, dirichlet(mesh.face_midpoint(f)) ? BoundaryLabel::Dirichlet : BoundaryLabel::Neumann);
    }
    return mesh;
}

Mesh refine_uniform(const Mesh& mesh) {
    const std::size_t nv = mesh.num_vertices();
    std::vector<Point> vertices = mesh.vertices();
    vertices.reserve(nv + mesh.num_faces());
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) vertices.push_back(mesh.face_midpoint(f));

    std::vector<std::array<std::size_t, 3>> cells;
    cells.reserve(4 * mesh.num_cells());
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const auto& v = mesh.cell(c);
        const auto& cf = mesh.cell_faces(c);
        // cf[e] is opposite v[e]
        const std::size_t m01 = nv + cf[2];
        const std::size_t m12 = nv + cf[0];
        const std::size_t m20 = nv + cf[1];
        cells.push_back({v[0], m01, m20});
        cells.push_back({m01, v[1], m12});
        cells.push_back({m20, m12, v[2]});
        cells.push_back({m01, m12, m20});
    }
    Mesh fine(std::move(vertices), std::move(cells));

    std::vector<double> kappa(fine.num_cells());
    std::vector<int> regions(fine.num_cells());
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        for (std::size_t k = 0; k < 4; ++k) {
            kappa[4 * c + k] = mesh.kappa(c);
            regions[4 * c + k] = mesh.region(c);
        }
    }
    fine.set_kappa(std::move(kappa));
    fine.set_regions(std::move(regions));

    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const Face& face = mesh.face(f);
        if (!face.is_boundary()) continue;
        for (std::size_t end = 0; end < 2; ++end) {
            const std::size_t ff = fine.find_face(face.vertices[end], nv + f);
            if (face.label != BoundaryLabel::None) fine.set_label(ff, face.label);
            fine.set_boundary_tag(ff, mesh.boundary_tag(f));
        }
    }
    return fine;
}

CellSet extend_cells(const Mesh& mesh, const CellSet& base, std::size_t layers) {
    std::vector<char> in(mesh.num_cells(), 0);
    std::vector<std::size_t> frontier;
    for (std::size_t c : base) {
        if (c >= mesh.num_cells()) throw DomainError("cell index out of range in extend_cells");
        in[c] = 1;
        frontier.push_back(c);
    }
    std::vector<std::size_t> result = base.indices();
    for (std::size_t layer = 0; layer < layers && !frontier.empty(); ++layer) {
        std::vector<std::size_t> next;
        for (std::size_t c : frontier) {
            for (std::size_t v : mesh.cell(c)) {
                for (std::size_t nb : mesh.vertex_cells(v)) {
                    if (!in[nb]) {
                        in[nb] = 1;
                        next.push_back(nb);
                    }
                }
            }
        }
        result.insert(result.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return CellSet(std::move(result));
}

CellSet interface_cells(const Mesh& mesh, std::span<const std::size_t> faces) {
    std::vector<std::size_t> result;
    for (std::size_t f : faces) {
        for (std::size_t v : mesh.face(f).vertices) {
            const auto cells = mesh.vertex_cells(v);
            result.insert(result.end(), cells.begin(), cells.end());
        }
    }
    return CellSet(std::move(result));
}

std::vector<std::size_t> interior_boundary_faces(const Mesh& mesh, const CellSet& cells) {
    std::vector<std::size_t> out;
    for (std::size_t c : cells) {
        for (std::size_t f : mesh.cell_faces(c)) {
            const Face& face = mesh.face(f);
            if (face.is_boundary()) continue;
            if (!cells.contains(mesh.neighbor(c, f))) out.push_back(f);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> labeled_faces(const Mesh& mesh, const CellSet& cells, BoundaryLabel label) {
    std::vector<std::size_t> out;
    for (std::size_t c : cells)
        for (std::size_t f : mesh.cell_faces(c))
            if (mesh.face(f).is_boundary() && mesh.face(f).label == label) out.push_back(f);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> face_neighbors(const Mesh& mesh, std::size_t cell) {
    std::vector<std::size_t> out;
    for (std::size_t f : mesh.cell_faces(cell))
        if (!mesh.face(f).is_boundary()) out.push_back(mesh.neighbor(cell, f));
    return out;
}

namespace {

double point_segment_distance(Point p, Point a, Point b) {
    const Point ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return distance(p, a + t * ab);
}

double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }

}  // namespace

double segment_distance(Point a0, Point a1, Point b0, Point b1) {
    const Point r = a1 - a0;
    const Point s = b1 - b0;
    const double denom = cross(r, s);
    if (denom != 0.0) {
        const double t = cross(b0 - a0, s) / denom;
        const double u = cross(b0 - a0, r) / denom;
        if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return 0.0;
    }
    return std::min({point_segment_distance(a0, b0, b1), point_segment_distance(a1, b0, b1),
                     point_segment_distance(b0, a0, a1), point_segment_distance(b1, a0, a1)});
}

}  // namespace dsdg
