#include "dsdg/dg_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "dsdg/errors.hpp"

namespace dsdg {

namespace {

long double factorial(int n) {
    long double r = 1.0L;
    for (int i = 2; i <= n; ++i) r *= static_cast<long double>(i);
    return r;
}

/// ∫_{reference triangle} ξ^a η^b = a! b! / (a + b + 2)!
long double monomial_integral(int a, int b) { return factorial(a) * factorial(b) / factorial(a + b + 2); }

double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

}  // namespace

ReferenceBasis::ReferenceBasis(std::size_t degree) : degree_(degree), size_((degree + 1) * (degree + 2) / 2) {
    for (int d = 0; d <= static_cast<int>(degree); ++d)
        for (int b = 0; b <= d; ++b) exponents_.push_back({d - b, b});

    const std::size_t n = size_;
    std::vector<long double> gram(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            gram[i * n + j] = monomial_integral(exponents_[i][0] + exponents_[j][0], exponents_[i][1] + exponents_[j][1]);

    // Cholesky G = L L^T, basis = L^{-1} monomials
    std::vector<long double> L(n * n, 0.0L);
    for (std::size_t j = 0; j < n; ++j) {
        long double d = gram[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= L[j * n + k] * L[j * n + k];
        L[j * n + j] = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            long double s = gram[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= L[i * n + k] * L[j * n + k];
            L[i * n + j] = s / L[j * n + j];
        }
    }
    std::vector<long double> inv(n * n, 0.0L);
    for (std::size_t col = 0; col < n; ++col) {
        for (std::size_t i = col; i < n; ++i) {
            long double s = i == col ? 1.0L : 0.0L;
            for (std::size_t k = col; k < i; ++k) s -= L[i * n + k] * inv[k * n + col];
            inv[i * n + col] = s / L[i * n + i];
        }
    }
    coeffs_.resize(n * n);
    for (std::size_t i = 0; i < n * n; ++i) coeffs_[i] = static_cast<double>(inv[i]);
}

void ReferenceBasis::values(Point xi, std::span<double> out) const {
    const std::size_t n = size_;
    double mono[64];
    for (std::size_t j = 0; j < n; ++j) mono[j] = ipow(xi.x, exponents_[j][0]) * ipow(xi.y, exponents_[j][1]);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += coeffs_[i * n + j] * mono[j];
        out[i] = s;
    }
}

void ReferenceBasis::gradients(Point xi, std::span<double> out) const {
    const std::size_t n = size_;
    double dx[64], dy[64];
    for (std::size_t j = 0; j < n; ++j) {
        const int a = exponents_[j][0], b = exponents_[j][1];
        dx[j] = a > 0 ? a * ipow(xi.x, a - 1) * ipow(xi.y, b) : 0.0;
        dy[j] = b > 0 ? b * ipow(xi.x, a) * ipow(xi.y, b - 1) : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double sx = 0.0, sy = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            sx += coeffs_[i * n + j] * dx[j];
            sy += coeffs_[i * n + j] * dy[j];
        }
        out[2 * i] = sx;
        out[2 * i + 1] = sy;
    }
}

BrokenSpace::BrokenSpace(const Mesh& mesh, std::size_t degree)
    : mesh_(&mesh),
      basis_(degree),
      volume_rule_(triangle_rule(std::max<std::size_t>(2 * degree + 2, 5))),
      face_rule_(line_rule(2 * degree + 2)) {
    if (basis_.size() > 64) throw DomainError("polynomial degree too large");
    geometry_.resize(mesh.num_cells());
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const auto& v = mesh.cell(c);
        const Point p0 = mesh.vertices()[v[0]], p1 = mesh.vertices()[v[1]], p2 = mesh.vertices()[v[2]];
        CellGeometry& g = geometry_[c];
        g.origin = p0;
        g.jacobian = {p1.x - p0.x, p2.x - p0.x, p1.y - p0.y, p2.y - p0.y};
        g.det = g.jacobian[0] * g.jacobian[3] - g.jacobian[1] * g.jacobian[2];
        g.inverse = {g.jacobian[3] / g.det, -g.jacobian[1] / g.det, -g.jacobian[2] / g.det, g.jacobian[0] / g.det};
    }
    const std::size_t n = basis_.size();
    const std::size_t nq = volume_rule_.points.size();
    volume_values_.resize(nq * n);
    volume_gradients_.resize(nq * 2 * n);
    for (std::size_t q = 0; q < nq; ++q) {
        basis_.values(volume_rule_.points[q], std::span<double>(volume_values_.data() + q * n, n));
        basis_.gradients(volume_rule_.points[q], std::span<double>(volume_gradients_.data() + q * 2 * n, 2 * n));
    }
}

Point BrokenSpace::to_reference(std::size_t cell, Point x) const {
    const CellGeometry& g = geometry_[cell];
    const double dx = x.x - g.origin.x, dy = x.y - g.origin.y;
    return {g.inverse[0] * dx + g.inverse[1] * dy, g.inverse[2] * dx + g.inverse[3] * dy};
}

Point BrokenSpace::to_physical(std::size_t cell, Point xi) const {
    const CellGeometry& g = geometry_[cell];
    return {g.origin.x + g.jacobian[0] * xi.x + g.jacobian[1] * xi.y,
            g.origin.y + g.jacobian[2] * xi.x + g.jacobian[3] * xi.y};
}

void BrokenSpace::values(std::size_t cell, Point x, std::span<double> out) const {
    basis_.values(to_reference(cell, x), out);
}

void BrokenSpace::gradients(std::size_t cell, Point x, std::span<double> out) const {
    basis_.gradients(to_reference(cell, x), out);
    const auto& inv = geometry_[cell].inverse;
    for (std::size_t i = 0; i < basis_.size(); ++i) {
        const double gx = out[2 * i], gy = out[2 * i + 1];
        out[2 * i] = gx * inv[0] + gy * inv[2];
        out[2 * i + 1] = gx * inv[1] + gy * inv[3];
    }
}

CellDofMap::CellDofMap(const BrokenSpace& space, CellSet cells)
    : cells_(std::move(cells)), local_of_(space.mesh().num_cells(), npos), ndof_(space.dofs_per_cell()) {
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        if (cells_[i] >= local_of_.size()) throw DomainError("cell index out of range");
        local_of_[cells_[i]] = i;
    }
}

std::vector<std::size_t> CellDofMap::global_dofs() const {
    std::vector<std::size_t> out(size());
    for (std::size_t i = 0; i < cells_.size(); ++i)
        for (std::size_t k = 0; k < ndof_; ++k) out[i * ndof_ + k] = cells_[i] * ndof_ + k;
    return out;
}

Field::Field(const BrokenSpace& s, std::vector<double> v) : space(&s), values(std::move(v)) {
    if (values.size() != s.num_dofs()) throw DomainError("field length does not match dof count");
}

BrokenSpace build_space(const Mesh& mesh, std::size_t degree) { return BrokenSpace(mesh, degree); }

std::vector<double> project_local(const BrokenSpace& space, const CellDofMap& map, const SpaceFunction& f) {
    const std::size_t n = space.dofs_per_cell();
    const QuadratureRule& rule = space.volume_rule();
    const auto& phi = space.volume_values();
    std::vector<double> out(map.size(), 0.0);
    for (std::size_t lc = 0; lc < map.num_cells(); ++lc) {
        const std::size_t cell = map.cells()[lc];
        double* block = out.data() + lc * n;
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wf = rule.weights[q] * f(space.to_physical(cell, rule.points[q]));
            for (std::size_t i = 0; i < n; ++i) block[i] += wf * phi[q * n + i];
        }
    }
    return out;
}

Field l2_project(const BrokenSpace& space, const SpaceFunction& f) {
    CellDofMap all(space, CellSet::all(space.mesh().num_cells()));
    return Field(space, project_local(space, all, f));
}

double evaluate_unchecked(const BrokenSpace& space, std::span<const double> block, std::size_t cell, Point x) {
    double phi[64];
    const std::size_t n = space.dofs_per_cell();
    space.values(cell, x, std::span<double>(phi, n));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += block[i] * phi[i];
    return s;
}

namespace {

void check_inside(const BrokenSpace& space, std::size_t cell, Point x) {
    const Point xi = space.to_reference(cell, x);
    const double l0 = 1.0 - xi.x - xi.y;
    constexpr double tol = 1e-10;
    if (xi.x < -tol || xi.y < -tol || l0 < -tol || xi.x > 1 + tol || xi.y > 1 + tol || l0 > 1 + tol) {
        throw DomainError("point (" + std::to_string(x.x) + ", " + std::to_string(x.y) + ") is outside cell " +
                          std::to_string(cell));
    }
}

}  // namespace

double evaluate_local(const BrokenSpace& space, const CellDofMap& map, std::span<const double> values,
                      std::size_t cell, Point x) {
    if (!map.contains(cell)) throw DomainError("cell " + std::to_string(cell) + " not in local set");
    check_inside(space, cell, x);
    const std::size_t n = space.dofs_per_cell();
    return evaluate_unchecked(space, values.subspan(map.block(cell), n), cell, x);
}

double evaluate(const Field& field, std::size_t cell, Point x) {
    const BrokenSpace& space = *field.space;
    check_inside(space, cell, x);
    const std::size_t n = space.dofs_per_cell();
    return evaluate_unchecked(space, std::span<const double>(field.values).subspan(space.block(cell), n), cell, x);
}

std::vector<double> mass_diagonal(const BrokenSpace& space, const CellDofMap& map) {
    const std::size_t n = space.dofs_per_cell();
    std::vector<double> out(map.size());
    for (std::size_t lc = 0; lc < map.num_cells(); ++lc) {
        const double d = std::abs(space.geometry(map.cells()[lc]).det);
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(lc * n), n, d);
    }
    return out;
}

std::vector<double> mass_apply(const BrokenSpace& space, std::span<const double> x) {
    if (x.size() != space.num_dofs()) throw DomainError("vector length does not match dof count");
    const std::size_t n = space.dofs_per_cell();
    std::vector<double> out(x.size());
    for (std::size_t c = 0; c < space.mesh().num_cells(); ++c) {
        const double d = std::abs(space.geometry(c).det);
        for (std::size_t i = 0; i < n; ++i) out[c * n + i] = d * x[c * n + i];
    }
    return out;
}

Field mass_solve(const BrokenSpace& space, std::span<const double> rhs) {
    if (rhs.size() != space.num_dofs()) throw DomainError("vector length does not match dof count");
    const std::size_t n = space.dofs_per_cell();
    Field out(space);
    for (std::size_t c = 0; c < space.mesh().num_cells(); ++c) {
        const double d = std::abs(space.geometry(c).det);
        if (!(d > std::numeric_limits<double>::min()) || !std::isfinite(d)) {
            throw SingularMassError("cell " + std::to_string(c) + " has zero area");
        }
        for (std::size_t i = 0; i < n; ++i) out.values[c * n + i] = rhs[c * n + i] / d;
    }
    return out;
}

double l2_inner(const Field& a, const Field& b) {
    if (a.space != b.space) throw DomainError("fields live in different spaces");
    const BrokenSpace& space = *a.space;
    const std::size_t n = space.dofs_per_cell();
    double s = 0.0;
    for (std::size_t c = 0; c < space.mesh().num_cells(); ++c) {
        double cell_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) cell_sum += a.values[c * n + i] * b.values[c * n + i];
        s += std::abs(space.geometry(c).det) * cell_sum;
    }
    return s;
}

double l2_norm(const Field& a) { return std::sqrt(std::max(0.0, l2_inner(a, a))); }

std::vector<double> restrict_to(const Field& field, const CellDofMap& map) {
    const std::size_t n = map.dofs_per_cell();
    std::vector<double> out(map.size());
    for (std::size_t lc = 0; lc < map.num_cells(); ++lc) {
        const std::size_t g = map.cells()[lc] * n;
        std::copy_n(field.values.begin() + static_cast<std::ptrdiff_t>(g), n,
                    out.begin() + static_cast<std::ptrdiff_t>(lc * n));
    }
    return out;
}

void write_vtk(const Field& field, const std::string& path, const std::string& name) {
    const BrokenSpace& space = *field.space;
    const Mesh& mesh = space.mesh();
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << std::setprecision(12);
    out << "# vtk DataFile Version 3.0\n" << name << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << 3 * mesh.num_cells() << " double\n";
    for (std::size_t c = 0; c < mesh.num_cells(); ++c)
        for (std::size_t v : mesh.cell(c)) out << mesh.vertices()[v].x << ' ' << mesh.vertices()[v].y << " 0\n";
    out << "CELLS " << mesh.num_cells() << ' ' << 4 * mesh.num_cells() << '\n';
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) out << "3 " << 3 * c << ' ' << 3 * c + 1 << ' ' << 3 * c + 2 << '\n';
    out << "CELL_TYPES " << mesh.num_cells() << '\n';
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) out << "5\n";
    const std::size_t n = space.dofs_per_cell();
    out << "POINT_DATA " << 3 * mesh.num_cells() << "\nSCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const std::span<const double> block(field.values.data() + c * n, n);
        for (std::size_t v : mesh.cell(c)) out << evaluate_unchecked(space, block, c, mesh.vertices()[v]) << '\n';
    }
    out << "CELL_DATA " << mesh.num_cells() << "\nSCALARS " << name << "_centroid double 1\nLOOKUP_TABLE default\n";
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const std::span<const double> block(field.values.data() + c * n, n);
        out << evaluate_unchecked(space, block, c, mesh.centroid(c)) << '\n';
    }
    out << "SCALARS kappa double 1\nLOOKUP_TABLE default\n";
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) out << mesh.kappa(c) << '\n';
}

void write_coefficients_csv(const Field& field, const std::string& path) {
    const BrokenSpace& space = *field.space;
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << std::setprecision(17) << "cell,local_dof,global_dof,value\n";
    const std::size_t n = space.dofs_per_cell();
    for (std::size_t c = 0; c < space.mesh().num_cells(); ++c)
        for (std::size_t i = 0; i < n; ++i) out << c << ',' << i << ',' << c * n + i << ',' << field.values[c * n + i] << '\n';
}

}  // namespace dsdg
