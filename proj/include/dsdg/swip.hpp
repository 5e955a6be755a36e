/**
 * @file swip.hpp
 * @brief Symmetric weighted interior penalty (SWIP) discretization of
 *        -div(κ∇u) on an arbitrary cell set.
 *
 * For an interior face between K1 < K2 the normal points from K1 to K2,
 * ⟦u⟧ = u1 - u2, {κ∇u}_ω = ω1 κ1 ∇u1 + ω2 κ2 ∇u2 with ω1 = κ2/(κ1+κ2),
 * ω2 = κ1/(κ1+κ2), and the penalty uses the harmonic mean
 * γ = 2κ1κ2/(κ1+κ2). Penalized one-sided faces (Dirichlet faces and the
 * interior interfaces of overlapping subdomains) use ω = 1 and γ = κ of the
 * incident cell. All other boundary faces of the set are natural (omitted).
 */
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dsdg/dg_space.hpp"
#include "dsdg/linalg.hpp"

namespace dsdg {

/// Face closed from one side only; `cell` is the incident cell inside the set.
struct OneSidedFace {
    std::size_t face;
    std::size_t cell;
    friend bool operator==(const OneSidedFace&, const OneSidedFace&) = default;
};

struct SwipWeights {
    double omega0;  ///< weight of the first (lower-index) cell
    double omega1;
    double gamma;
};

SwipWeights swip_weights(double kappa0, double kappa1);

/// Default penalty parameter 4 (k+1)(k+2).
double default_penalty(std::size_t degree);

struct FaceCoefficients {
    std::size_t face;
    SwipWeights weights;
    bool one_sided;
};

struct SwipOperator {
    const BrokenSpace* space = nullptr;
    CellDofMap dofs;
    SparseSymMatrix matrix;
    std::vector<double> mass;  ///< diagonal mass on the cell set
    double eta = 0.0;
    std::vector<FaceCoefficients> faces;
    std::vector<OneSidedFace> penalized;

    std::size_t size() const { return dofs.size(); }
};

/// Pairs every face with its incident cell inside `cells`; throws AssemblyError
/// if no incident cell is inside.
std::vector<OneSidedFace> one_sided_faces(const Mesh& mesh, std::span<const std::size_t> faces, const CellSet& cells);

SwipOperator assemble_swip(const BrokenSpace& space, const CellSet& cells, std::span<const OneSidedFace> penalized,
                           double eta);

/// Operator on the whole mesh with every Dirichlet face penalized.
SwipOperator assemble_global_swip(const BrokenSpace& space, double eta);

/// Trace data g(face, x) on a penalized face.
using FaceData = std::function<double(std::size_t face, Point x)>;

/// Load vector ⟨G(g), ψ⟩ = Σ_F ∫_F g (η γ/h_F ψ - κ ∇ψ·n) on the dofs of `dofs`,
/// accumulated face by face in the given order.
std::vector<double> boundary_term(const BrokenSpace& space, const CellDofMap& dofs,
                                  std::span<const OneSidedFace> faces, const FaceData& g, double eta);

/// M^{-1} A u.
std::vector<double> apply_lh(const SwipOperator& op, std::span<const double> u);
/// y = M^{-1} A u without allocation.
void apply_lh(const SwipOperator& op, std::span<const double> u, std::span<double> y);

/// sqrt(uᵀAu). Throws CoercivityError if uᵀAu < -1e-10 ‖A‖ ‖u‖².
double a_norm(const SwipOperator& op, std::span<const double> u);

}  // namespace dsdg
