#include "dsdg/swip.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dsdg/errors.hpp"

namespace dsdg {

SwipWeights swip_weights(double kappa0, double kappa1) {
    const double sum = kappa0 + kappa1;
    return {kappa1 / sum, kappa0 / sum, 2.0 * kappa0 * kappa1 / sum};
}

double default_penalty(std::size_t degree) {
    return 4.0 * static_cast<double>((degree + 1) * (degree + 2));
}

namespace {

/// Basis values and normal derivatives of one cell at the face quadrature points.
struct FaceTrace {
    std::vector<double> value;   // [q * n + i]
    std::vector<double> normal;  // ∇φ_i · n at q
};

FaceTrace face_trace(const BrokenSpace& space, std::size_t face, std::size_t cell, Point n) {
    const Mesh& mesh = space.mesh();
    const std::size_t nd = space.dofs_per_cell();
    const LineRule& rule = space.face_rule();
    const Point a = mesh.vertices()[mesh.face(face).vertices[0]];
    const Point b = mesh.vertices()[mesh.face(face).vertices[1]];
    FaceTrace t;
    t.value.resize(rule.points.size() * nd);
    t.normal.resize(rule.points.size() * nd);
    double grad[128];
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
        const Point x = a + rule.points[q] * (b - a);
        space.values(cell, x, std::span<double>(t.value.data() + q * nd, nd));
        space.gradients(cell, x, std::span<double>(grad, 2 * nd));
        for (std::size_t i = 0; i < nd; ++i) t.normal[q * nd + i] = grad[2 * i] * n.x + grad[2 * i + 1] * n.y;
    }
    return t;
}

/// Contribution of one face to the diagonal block of a cell, upper triangle only.
void add_face_diagonal(const BrokenSpace& space, const FaceTrace& t, double h_f, double sign_omega_kappa,
                       double sigma, std::vector<double>& block) {
    const std::size_t nd = space.dofs_per_cell();
    const LineRule& rule = space.face_rule();
    for (std::size_t i = 0; i < nd; ++i) {
        for (std::size_t j = i; j < nd; ++j) {
            double s = 0.0;
            for (std::size_t q = 0; q < rule.points.size(); ++q) {
                const double vi = t.value[q * nd + i], vj = t.value[q * nd + j];
                const double gi = t.normal[q * nd + i], gj = t.normal[q * nd + j];
                s += rule.weights[q] * (-sign_omega_kappa * (gj * vi + vj * gi) + sigma * vi * vj);
            }
            block[i * nd + j] += h_f * s;
        }
    }
}

}  // namespace

std::vector<OneSidedFace> one_sided_faces(const Mesh& mesh, std::span<const std::size_t> faces,
                                          const CellSet& cells) {
    std::vector<OneSidedFace> out;
    out.reserve(faces.size());
    for (std::size_t f : faces) {
        const Face& face = mesh.face(f);
        if (cells.contains(face.cells[0])) {
            out.push_back({f, face.cells[0]});
        } else if (face.cells[1] != npos && cells.contains(face.cells[1])) {
            out.push_back({f, face.cells[1]});
        } else {
            throw AssemblyError("face " + std::to_string(f) + " has no incident cell in the set");
        }
    }
    return out;
}

SwipOperator assemble_swip(const BrokenSpace& space, const CellSet& cells, std::span<const OneSidedFace> penalized,
                           double eta) {
    if (!(eta > 0.0)) throw AssemblyError("penalty parameter must be positive");
    const Mesh& mesh = space.mesh();
    const std::size_t nd = space.dofs_per_cell();

    SwipOperator op;
    op.space = &space;
    op.dofs = CellDofMap(space, cells);
    op.mass = mass_diagonal(space, op.dofs);
    op.eta = eta;
    op.penalized.assign(penalized.begin(), penalized.end());
    const CellDofMap& dofs = op.dofs;

    // (cell local index, local face) → penalized
    std::vector<std::array<char, 3>> closed(cells.size(), {0, 0, 0});
    for (const OneSidedFace& p : penalized) {
        if (p.face >= mesh.num_faces() || p.cell >= mesh.num_cells() || !dofs.contains(p.cell)) {
            throw AssemblyError("penalized face " + std::to_string(p.face) + " references a cell outside the set");
        }
        const auto& cf = mesh.cell_faces(p.cell);
        const auto e = static_cast<std::size_t>(std::find(cf.begin(), cf.end(), p.face) - cf.begin());
        if (e == 3) throw AssemblyError("face " + std::to_string(p.face) + " is not a face of cell " + std::to_string(p.cell));
        const Face& face = mesh.face(p.face);
        if (!face.is_boundary() && dofs.contains(mesh.neighbor(p.cell, p.face))) {
            throw AssemblyError("face " + std::to_string(p.face) + " is interior to the set and cannot be one-sided");
        }
        closed[dofs.local_cell(p.cell)][e] = 1;
    }

    const QuadratureRule& vrule = space.volume_rule();
    const auto& ref_grad = space.volume_gradients();
    std::vector<std::vector<double>> diag(cells.size(), std::vector<double>(nd * nd, 0.0));
    std::map<std::size_t, std::vector<double>> offdiag;  // face → block (row lower cell, col upper cell)
    std::vector<double> grad(vrule.points.size() * 2 * nd);

    for (std::size_t lc = 0; lc < cells.size(); ++lc) {
        const std::size_t cell = cells[lc];
        const CellGeometry& g = space.geometry(cell);
        const double kappa = mesh.kappa(cell);
        std::vector<double>& block = diag[lc];

        for (std::size_t q = 0; q < vrule.points.size(); ++q) {
            for (std::size_t i = 0; i < nd; ++i) {
                const double gx = ref_grad[q * 2 * nd + 2 * i], gy = ref_grad[q * 2 * nd + 2 * i + 1];
                grad[q * 2 * nd + 2 * i] = gx * g.inverse[0] + gy * g.inverse[2];
                grad[q * 2 * nd + 2 * i + 1] = gx * g.inverse[1] + gy * g.inverse[3];
            }
        }
        const double scale = kappa * std::abs(g.det);
        for (std::size_t i = 0; i < nd; ++i) {
            for (std::size_t j = i; j < nd; ++j) {
                double s = 0.0;
                for (std::size_t q = 0; q < vrule.points.size(); ++q) {
                    const double* gq = grad.data() + q * 2 * nd;
                    s += vrule.weights[q] * (gq[2 * i] * gq[2 * j] + gq[2 * i + 1] * gq[2 * j + 1]);
                }
                block[i * nd + j] += scale * s;
            }
        }

        for (std::size_t e = 0; e < 3; ++e) {
            const std::size_t f = mesh.cell_faces(cell)[e];
            const Face& face = mesh.face(f);
            const double h_f = mesh.face_diameter(f);
            if (!face.is_boundary() && dofs.contains(mesh.neighbor(cell, f))) {
                const std::size_t a = face.cells[0], b = face.cells[1];
                const SwipWeights w = swip_weights(mesh.kappa(a), mesh.kappa(b));
                const Point n = mesh.outward_normal(f, a);
                const double sigma = eta * w.gamma / h_f;
                const bool lower = cell == a;
                const double sign_omega_kappa = lower ? w.omega0 * mesh.kappa(a) : -w.omega1 * mesh.kappa(b);
                add_face_diagonal(space, face_trace(space, f, cell, n), h_f, sign_omega_kappa, sigma, block);
                if (lower) {
                    const FaceTrace ta = face_trace(space, f, a, n);
                    const FaceTrace tb = face_trace(space, f, b, n);
                    const double oka = w.omega0 * mesh.kappa(a), okb = w.omega1 * mesh.kappa(b);
                    std::vector<double> off(nd * nd, 0.0);
                    const LineRule& rule = space.face_rule();
                    for (std::size_t i = 0; i < nd; ++i) {
                        for (std::size_t j = 0; j < nd; ++j) {
                            double s = 0.0;
                            for (std::size_t q = 0; q < rule.points.size(); ++q) {
                                const double vai = ta.value[q * nd + i], gai = ta.normal[q * nd + i];
                                const double vbj = tb.value[q * nd + j], gbj = tb.normal[q * nd + j];
                                s += rule.weights[q] * (-okb * gbj * vai + oka * gai * vbj - sigma * vai * vbj);
                            }
                            off[i * nd + j] = h_f * s;
                        }
                    }
                    offdiag.emplace(f, std::move(off));
                    op.faces.push_back({f, w, false});
                }
            } else if (closed[lc][e]) {
                const double sigma = eta * kappa / h_f;
                const Point n = mesh.outward_normal(f, cell);
                add_face_diagonal(space, face_trace(space, f, cell, n), h_f, kappa, sigma, block);
                op.faces.push_back({f, {1.0, 0.0, kappa}, true});
            }
        }
        for (std::size_t i = 0; i < nd; ++i)
            for (std::size_t j = 0; j < i; ++j) block[i * nd + j] = block[j * nd + i];
    }

    // CSR: row blocks in local cell order, column blocks sorted by local cell index
    const std::size_t n = dofs.size();
    std::vector<std::size_t> row_ptr(n + 1, 0), cols;
    std::vector<double> vals;
    for (std::size_t lc = 0; lc < cells.size(); ++lc) {
        const std::size_t cell = cells[lc];
        std::vector<std::pair<std::size_t, std::size_t>> blocks;  // (neighbor local index, face), self has face npos
        blocks.emplace_back(lc, npos);
        for (std::size_t f : mesh.cell_faces(cell)) {
            if (mesh.face(f).is_boundary()) continue;
            const std::size_t nb = mesh.neighbor(cell, f);
            if (dofs.contains(nb)) blocks.emplace_back(dofs.local_cell(nb), f);
        }
        std::sort(blocks.begin(), blocks.end());
        for (std::size_t i = 0; i < nd; ++i) {
            for (const auto& [lnb, f] : blocks) {
                for (std::size_t j = 0; j < nd; ++j) {
                    double v;
                    if (f == npos) {
                        v = diag[lc][i * nd + j];
                    } else if (mesh.face(f).cells[0] == cell) {
                        v = offdiag.at(f)[i * nd + j];
                    } else {
                        v = offdiag.at(f)[j * nd + i];
                    }
                    cols.push_back(lnb * nd + j);
                    vals.push_back(v);
                }
            }
            row_ptr[lc * nd + i + 1] = cols.size();
        }
    }
    op.matrix = SparseSymMatrix(n, std::move(row_ptr), std::move(cols), std::move(vals));
    return op;
}

SwipOperator assemble_global_swip(const BrokenSpace& space, double eta) {
    const Mesh& mesh = space.mesh();
    const CellSet all = CellSet::all(mesh.num_cells());
    const auto dirichlet = labeled_faces(mesh, all, BoundaryLabel::Dirichlet);
    const auto penalized = one_sided_faces(mesh, dirichlet, all);
    return assemble_swip(space, all, penalized, eta);
}

std::vector<double> boundary_term(const BrokenSpace& space, const CellDofMap& dofs,
                                  std::span<const OneSidedFace> faces, const FaceData& g, double eta) {
    const Mesh& mesh = space.mesh();
    const std::size_t nd = space.dofs_per_cell();
    const LineRule& rule = space.face_rule();
    std::vector<double> out(dofs.size(), 0.0);
    for (const OneSidedFace& p : faces) {
        if (!dofs.contains(p.cell)) throw AssemblyError("boundary term face references a cell outside the set");
        const double kappa = mesh.kappa(p.cell);
        const double h_f = mesh.face_diameter(p.face);
        const double sigma = eta * kappa / h_f;
        const Point n = mesh.outward_normal(p.face, p.cell);
        const FaceTrace t = face_trace(space, p.face, p.cell, n);
        const Point a = mesh.vertices()[mesh.face(p.face).vertices[0]];
        const Point b = mesh.vertices()[mesh.face(p.face).vertices[1]];
        double* block = out.data() + dofs.block(p.cell);
        double gq[64];
        for (std::size_t q = 0; q < rule.points.size(); ++q) gq[q] = g(p.face, a + rule.points[q] * (b - a));
        for (std::size_t i = 0; i < nd; ++i) {
            double s = 0.0;
            for (std::size_t q = 0; q < rule.points.size(); ++q) {
                s += rule.weights[q] * gq[q] * (sigma * t.value[q * nd + i] - kappa * t.normal[q * nd + i]);
            }
            block[i] += h_f * s;
        }
    }
    return out;
}

void apply_lh(const SwipOperator& op, std::span<const double> u, std::span<double> y) {
    if (u.size() != op.size() || y.size() != op.size()) throw DomainError("apply_lh: shape mismatch");
    op.matrix.multiply(u, y);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] /= op.mass[i];
}

std::vector<double> apply_lh(const SwipOperator& op, std::span<const double> u) {
    std::vector<double> y(op.size());
    apply_lh(op, u, y);
    return y;
}

double a_norm(const SwipOperator& op, std::span<const double> u) {
    if (u.size() != op.size()) throw DomainError("a_norm: shape mismatch");
    const auto au = op.matrix * u;
    const double q = dot(u, au);
    const double uu = dot(u, u);
    if (q < -1e-10 * op.matrix.max_abs() * uu) {
        throw CoercivityError("uᵀAu = " + std::to_string(q) + " is negative; penalty parameter too small");
    }
    return q > 0.0 ? std::sqrt(q) : 0.0;
}

}  // namespace dsdg
