/**
 * @file mesh.hpp
 * @brief Matching triangular meshes with face topology, boundary labels and
 *        piecewise constant wave speed, plus the cell-set algebra used to build
 *        overlapping subdomains (layer extensions, interface strips).
 */
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dsdg {

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
double distance(Point a, Point b);

struct Rectangle {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
};

enum class BoundaryLabel { None, Dirichlet, Neumann };

/// Mesh edge. Interior faces store the lower cell index in `cells[0]`;
/// boundary faces have `cells[1] == npos`.
struct Face {
    std::array<std::size_t, 2> vertices{};
    std::array<std::size_t, 2> cells{npos, npos};
    BoundaryLabel label = BoundaryLabel::None;

    bool is_boundary() const { return cells[1] == npos; }
};

/// Sorted set of unique cell indices.
class CellSet {
public:
    CellSet() = default;
    /// Sorts and removes duplicates.
    explicit CellSet(std::vector<std::size_t> cells);

    static CellSet all(std::size_t n);

    bool contains(std::size_t cell) const;
    std::size_t size() const { return cells_.size(); }
    bool empty() const { return cells_.empty(); }
    std::size_t operator[](std::size_t i) const { return cells_[i]; }
    auto begin() const { return cells_.begin(); }
    auto end() const { return cells_.end(); }
    const std::vector<std::size_t>& indices() const { return cells_; }

    friend bool operator==(const CellSet&, const CellSet&) = default;

private:
    std::vector<std::size_t> cells_;
};

CellSet set_union(const CellSet& a, const CellSet& b);
CellSet set_intersection(const CellSet& a, const CellSet& b);
CellSet set_difference(const CellSet& a, const CellSet& b);

class Mesh {
public:
    Mesh() = default;
    /// Builds face topology from the cell list. Vertex triples are reoriented
    /// counter-clockwise. Throws DomainError on non-manifold edges.
    Mesh(std::vector<Point> vertices, std::vector<std::array<std::size_t, 3>> cells);

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_cells() const { return cells_.size(); }
    std::size_t num_faces() const { return faces_.size(); }
    std::size_t num_interior_faces() const;

    const std::vector<Point>& vertices() const { return vertices_; }
    const std::array<std::size_t, 3>& cell(std::size_t c) const { return cells_[c]; }
    const std::vector<std::array<std::size_t, 3>>& cells() const { return cells_; }
    const Face& face(std::size_t f) const { return faces_[f]; }
    const std::vector<Face>& faces() const { return faces_; }
    /// Local face `e` of a cell is the edge opposite its local vertex `e`.
    const std::array<std::size_t, 3>& cell_faces(std::size_t c) const { return cell_faces_[c]; }
    /// Cells incident to a vertex, ascending.
    std::span<const std::size_t> vertex_cells(std::size_t v) const;

    std::size_t neighbor(std::size_t cell, std::size_t face) const;

    double kappa(std::size_t c) const { return kappa_[c]; }
    const std::vector<double>& kappa() const { return kappa_; }
    void set_kappa(std::vector<double> kappa);
    /// Samples a continuous coefficient at cell centroids.
    void sample_kappa(const std::function<double(Point)>& kappa);

    int region(std::size_t c) const { return region_[c]; }
    const std::vector<int>& regions() const { return region_; }
    void set_regions(std::vector<int> regions);

    void set_label(std::size_t f, BoundaryLabel label);
    /// Physical tag a boundary face was imported with (0 if none).
    int boundary_tag(std::size_t f) const { return boundary_tag_[f]; }
    void set_boundary_tag(std::size_t f, int tag) { boundary_tag_[f] = tag; }

    double cell_diameter(std::size_t c) const;
    double face_diameter(std::size_t f) const;
    double cell_area(std::size_t c) const;
    double max_diameter() const;
    double min_diameter() const;
    Point centroid(std::size_t c) const;
    Point face_midpoint(std::size_t f) const;
    /// Unit normal of face `f` pointing out of `cell`.
    Point outward_normal(std::size_t f, std::size_t cell) const;

    /// Face index joining two vertices, npos if no such edge.
    std::size_t find_face(std::size_t a, std::size_t b) const;

    /// Checks `lo <= kappa <= hi` on every cell.
    bool kappa_within(double lo, double hi) const;

private:
    std::vector<Point> vertices_;
    std::vector<std::array<std::size_t, 3>> cells_;
    std::vector<Face> faces_;
    std::vector<std::array<std::size_t, 3>> cell_faces_;
    std::vector<std::size_t> vertex_cell_offsets_;
    std::vector<std::size_t> vertex_cell_list_;
    std::vector<double> kappa_;
    std::vector<int> region_;
    std::vector<int> boundary_tag_;
};

/// Splits each of the nx*ny grid squares into two triangles along the diagonal
/// from its lower-left to its upper-right corner. Kappa is initialized to 1.
Mesh build_structured_mesh(std::size_t nx, std::size_t ny, const Rectangle& extent);

/// Same diagonal split on the tensor grid xs × ys (strictly increasing).
Mesh build_tensor_mesh(std::span<const double> xs, std::span<const double> ys);
std::vector<double> uniform_coordinates(double a, double b, std::size_t n);
/// n uniform intervals on [a, b]; those with midpoint in [lo, hi] are split into
/// `factor` parts. Used for meshes locally refined in a band.
std::vector<double> banded_coordinates(double a, double b, std::size_t n, double lo, double hi, std::size_t factor);

/// Labels every boundary face: predicate true at the face midpoint → Dirichlet,
/// otherwise Neumann.
Mesh classify_boundary(Mesh mesh, const std::function<bool(Point)>& dirichlet);

/// Red refinement: every cell c becomes children 4c..4c+3 (three corner
/// children in local vertex order, then the middle one). Labels, tags and
/// kappa are inherited.
Mesh refine_uniform(const Mesh& mesh);

/// Extends `base` by `layers` rings of cells whose closure touches the
/// previous ring (vertex adjacency).
CellSet extend_cells(const Mesh& mesh, const CellSet& base, std::size_t layers);

/// All cells whose closure intersects the closure of one of the given faces.
CellSet interface_cells(const Mesh& mesh, std::span<const std::size_t> faces);

/// Faces with exactly one incident cell in `cells` and the other incident cell
/// outside it (i.e. boundary faces of the set that are interior to the mesh).
std::vector<std::size_t> interior_boundary_faces(const Mesh& mesh, const CellSet& cells);

/// Mesh boundary faces with the given label incident to a cell of `cells`.
std::vector<std::size_t> labeled_faces(const Mesh& mesh, const CellSet& cells, BoundaryLabel label);

/// Face-adjacent cells inside the same set, used for connectivity checks.
std::vector<std::size_t> face_neighbors(const Mesh& mesh, std::size_t cell);

/// Minimal distance between two segments.
double segment_distance(Point a0, Point a1, Point b0, Point b1);

}  // namespace dsdg
