/**
 * @file integrators.hpp
 * @brief Crank-Nicolson and leapfrog time stepping of the semi-discrete
 *        system  u' = v,  M v' = -A u + M f_h + G(g)  on a cell set.
 */
#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsdg/dg_space.hpp"
#include "dsdg/linalg.hpp"
#include "dsdg/swip.hpp"

namespace dsdg {

/// Continuous problem data. Empty functions mean zero.
struct ProblemData {
    SpaceFunction u0;
    SpaceFunction v0;
    SpaceTimeFunction f;
    SpaceTimeFunction g;
};

struct State {
    std::vector<double> u;
    std::vector<double> v;
    std::size_t step = 0;
    double tau = 0.0;

    double time() const { return static_cast<double>(step) * tau; }
};

/// SWIP operator on a cell set together with the Dirichlet faces whose data
/// enters through G. The operator may contain further penalized faces
/// (subdomain interfaces) that are not listed in `dirichlet`.
struct Discretization {
    const BrokenSpace* space = nullptr;
    SwipOperator op;
    std::vector<OneSidedFace> dirichlet;

    const CellDofMap& dofs() const { return op.dofs; }
    std::size_t size() const { return op.size(); }
};

Discretization make_global_discretization(const BrokenSpace& space, double eta);
/// Operator on `cells` with Dirichlet faces and `extra_penalized` closed from inside.
Discretization make_discretization(const BrokenSpace& space, const CellSet& cells,
                                   std::span<const OneSidedFace> extra_penalized, double eta);

/// f_h(t) on the discretization's cells (zero vector if f is absent).
std::vector<double> projected_source(const Discretization& d, const ProblemData& data, double t);
/// G(g(t)) load vector on the Dirichlet faces (zero vector if g is absent).
std::vector<double> dirichlet_load(const Discretization& d, const ProblemData& data, double t);

State initial_state(const Discretization& d, const ProblemData& data, double tau);

enum class PreconditionerKind { None, IncompleteCholesky, BlockJacobi };
PreconditionerKind parse_preconditioner(const std::string& name);

/// Crank-Nicolson with v eliminated:
///   (M + τ²/4 A) u¹ = M u + τ M v − τ²/4 A u + τ²/4 M (f¹ + f⁰) + τ²/4 (G¹ + G⁰)
///   v¹ = 2/τ (u¹ − u) − v
/// The system matrix and its preconditioner are built once.
class CrankNicolson {
public:
    CrankNicolson(const Discretization& d, double tau, SolverOptions solver = {},
                  PreconditionerKind precond = PreconditionerKind::IncompleteCholesky);

    /// Advances one step. `extra_load` (if non-empty) is added to G¹ + G⁰.
    /// Throws SolverError if CG does not converge.
    SolverReport step(State& state, const ProblemData& data, std::span<const double> extra_load = {});

    double tau() const { return tau_; }
    const SparseSymMatrix& system() const { return system_; }
    const Discretization& discretization() const { return *disc_; }

private:
    const Discretization* disc_;
    double tau_;
    SolverOptions solver_;
    SparseSymMatrix system_;
    std::unique_ptr<Preconditioner> precond_;
    // data at the current step, reused as the "old" data of the next step
    std::optional<std::size_t> cached_step_;
    std::vector<double> cached_f_, cached_g_;
};

/// v − τ/2 M⁻¹A u + τ/2 f + τ/2 M⁻¹ G, written into `out`.
void leapfrog_half_kick(const SwipOperator& op, std::span<const double> u, std::span<const double> v,
                        std::span<const double> f, std::span<const double> g_load, double tau, std::span<double> out);

/// Largest eigenvalue estimate of M⁻¹A from `iterations` power steps.
double estimate_max_eigenvalue(const SwipOperator& op, std::size_t iterations = 20);
/// 0.95 · 2 / sqrt(λ_max).
double leapfrog_stable_step(const SwipOperator& op);

class Leapfrog {
public:
    /// Throws InstabilityError if τ exceeds the estimated stability limit and
    /// `check_limit` is set.
    Leapfrog(const Discretization& d, double tau, bool check_limit = true);

    /// Throws InstabilityError once ‖(u, v)‖ exceeds 10⁶ times the reference norm.
    void step(State& state, const ProblemData& data);
    void set_reference_norm(double n) { reference_norm_ = n; }
    double stable_step() const { return stable_step_; }

private:
    const Discretization* disc_;
    double tau_;
    double stable_step_;
    double reference_norm_ = 1.0;
    std::optional<std::size_t> cached_step_;
    std::vector<double> cached_f_, cached_g_;
};

/// Discrete energy vᵀMv + uᵀAu.
double cn_energy(const Discretization& d, const State& s);
/// ‖v^{n+1/2}‖²_M + uⁿᵀ A uⁿ⁺¹, conserved by leapfrog for f = 0, g = 0.
double leapfrog_energy(const Discretization& d, const State& s);

enum class Method { CrankNicolson, Leapfrog };

struct RunOptions {
    SolverOptions solver;
    PreconditionerKind preconditioner = PreconditionerKind::IncompleteCholesky;
    std::size_t snapshot_every = 0;  ///< 0: no snapshots
    bool check_limit = true;
};

struct RunResult {
    State final;
    std::vector<State> snapshots;
    std::size_t steps = 0;
    double tau = 0.0;
    std::vector<std::string> warnings;
    std::size_t total_iterations = 0;
    double setup_seconds = 0.0;
    double step_seconds = 0.0;
};

/// Number of steps N_T = ceil(T/τ) and the adjusted step T/N_T.
std::pair<std::size_t, double> time_grid(double tau, double T);

RunResult run(Method method, const Discretization& d, const ProblemData& data, double tau, double T,
              const RunOptions& options = {});

}  // namespace dsdg
