/**
 * @file dg_space.hpp
 * @brief Broken polynomial spaces P_k on affine triangles with an orthonormal
 *        modal basis. Under affine maps the mass matrix is diagonal, with the
 *        value |det J_K| on every dof of cell K.
 */
#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsdg/mesh.hpp"
#include "dsdg/quadrature.hpp"

namespace dsdg {

using SpaceFunction = std::function<double(Point)>;
using SpaceTimeFunction = std::function<double(Point, double)>;

/// Orthonormal basis of P_k on the reference triangle, obtained by
/// orthonormalizing the monomials ξ^a η^b against the exact reference Gram matrix.
class ReferenceBasis {
public:
    explicit ReferenceBasis(std::size_t degree);

    std::size_t degree() const { return degree_; }
    std::size_t size() const { return size_; }

    void values(Point xi, std::span<double> out) const;
    /// out[2*i], out[2*i+1] = ∂/∂ξ, ∂/∂η of basis function i.
    void gradients(Point xi, std::span<double> out) const;

private:
    std::size_t degree_;
    std::size_t size_;
    std::vector<std::array<int, 2>> exponents_;
    std::vector<double> coeffs_;  // row i: monomial coefficients of basis i (lower triangular)
};

struct CellGeometry {
    Point origin;
    std::array<double, 4> jacobian{};  ///< row-major [x_ξ x_η; y_ξ y_η]
    std::array<double, 4> inverse{};
    double det = 0.0;
};

class BrokenSpace {
public:
    BrokenSpace(const Mesh& mesh, std::size_t degree);

    const Mesh& mesh() const { return *mesh_; }
    std::size_t degree() const { return basis_.degree(); }
    std::size_t dofs_per_cell() const { return basis_.size(); }
    std::size_t num_dofs() const { return mesh_->num_cells() * basis_.size(); }
    std::size_t block(std::size_t cell) const { return cell * basis_.size(); }

    const ReferenceBasis& basis() const { return basis_; }
    const CellGeometry& geometry(std::size_t cell) const { return geometry_[cell]; }
    const QuadratureRule& volume_rule() const { return volume_rule_; }
    const LineRule& face_rule() const { return face_rule_; }

    Point to_reference(std::size_t cell, Point x) const;
    Point to_physical(std::size_t cell, Point xi) const;

    /// Basis values at a physical point of the cell.
    void values(std::size_t cell, Point x, std::span<double> out) const;
    /// Physical gradients at a physical point: out[2*i], out[2*i+1].
    void gradients(std::size_t cell, Point x, std::span<double> out) const;

    /// Basis values at the volume quadrature points: [q * ndof + i].
    const std::vector<double>& volume_values() const { return volume_values_; }
    const std::vector<double>& volume_gradients() const { return volume_gradients_; }

private:
    const Mesh* mesh_;
    ReferenceBasis basis_;
    std::vector<CellGeometry> geometry_;
    QuadratureRule volume_rule_;
    LineRule face_rule_;
    std::vector<double> volume_values_;
    std::vector<double> volume_gradients_;
};

/// Local dof numbering of a cell subset: cell blocks in ascending global cell order.
class CellDofMap {
public:
    CellDofMap() = default;
    CellDofMap(const BrokenSpace& space, CellSet cells);

    const CellSet& cells() const { return cells_; }
    std::size_t num_cells() const { return cells_.size(); }
    std::size_t dofs_per_cell() const { return ndof_; }
    std::size_t size() const { return cells_.size() * ndof_; }
    /// Local position of a global cell, npos if not in the set.
    std::size_t local_cell(std::size_t cell) const { return local_of_[cell]; }
    bool contains(std::size_t cell) const { return local_of_[cell] != npos; }
    std::size_t block(std::size_t cell) const { return local_of_[cell] * ndof_; }
    /// Local dof index → global dof index.
    std::vector<std::size_t> global_dofs() const;

private:
    CellSet cells_;
    std::vector<std::size_t> local_of_;
    std::size_t ndof_ = 0;
};

/// Coefficient vector over all cells of a space.
struct Field {
    const BrokenSpace* space = nullptr;
    std::vector<double> values;

    Field() = default;
    explicit Field(const BrokenSpace& s) : space(&s), values(s.num_dofs(), 0.0) {}
    Field(const BrokenSpace& s, std::vector<double> v);
};

BrokenSpace build_space(const Mesh& mesh, std::size_t degree);

/// Per-cell L2 projection onto the cells of `map`. Identical per-cell values to
/// the global projection.
std::vector<double> project_local(const BrokenSpace& space, const CellDofMap& map, const SpaceFunction& f);
Field l2_project(const BrokenSpace& space, const SpaceFunction& f);

/// Value of a local vector at a physical point inside `cell`. Throws DomainError
/// if the point lies outside the cell.
double evaluate_local(const BrokenSpace& space, const CellDofMap& map, std::span<const double> values,
                      std::size_t cell, Point x);
double evaluate(const Field& field, std::size_t cell, Point x);
/// Same as evaluate, without the inside-cell check (used for traces on faces).
double evaluate_unchecked(const BrokenSpace& space, std::span<const double> block, std::size_t cell, Point x);

/// Diagonal of the mass matrix on the cells of `map`.
std::vector<double> mass_diagonal(const BrokenSpace& space, const CellDofMap& map);
std::vector<double> mass_apply(const BrokenSpace& space, std::span<const double> x);
Field mass_solve(const BrokenSpace& space, std::span<const double> rhs);

double l2_inner(const Field& a, const Field& b);
double l2_norm(const Field& a);

/// Restriction of a global field to the cells of `map`.
std::vector<double> restrict_to(const Field& field, const CellDofMap& map);

/// VTK legacy ASCII, one triangle per cell with duplicated vertices so the
/// discontinuous field is sampled at each cell's own corners; the centroid value
/// is written as cell data.
void write_vtk(const Field& field, const std::string& path, const std::string& name = "u");
/// CSV with columns cell, local_dof, global_dof, value.
void write_coefficients_csv(const Field& field, const std::string& path);

}  // namespace dsdg
