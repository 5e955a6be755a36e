/**
 * @file splitting.hpp
 * @brief Non-iterative overlapping domain splitting. One step per subdomain:
 *        leapfrog prediction on the interface strip P_i, Crank-Nicolson on
 *        Ω_i^ℓ with the predicted traces imposed weakly on Γ_i^ℓ, then an
 *        owner-gather exchange of both contexts through the round schedule.
 */
#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsdg/comms.hpp"
#include "dsdg/integrators.hpp"
#include "dsdg/layout.hpp"

namespace dsdg {

struct SplitOptions {
    SolverOptions solver;
    PreconditionerKind preconditioner = PreconditionerKind::IncompleteCholesky;
    double eta = 0.0;          ///< 0 selects default_penalty(k)
    std::size_t workers = 1;   ///< OpenMP threads for the subdomain loop; >1 also threads the exchange
    bool debug_checks = false; ///< consistency scan after every exchange
    std::chrono::milliseconds watchdog{30000};
};

class SubdomainContext {
public:
    SubdomainContext(const BrokenSpace& space, const SubdomainLayout& layout, std::size_t id, double tau,
                     const SplitOptions& options);
    SubdomainContext(const SubdomainContext&) = delete;
    SubdomainContext& operator=(const SubdomainContext&) = delete;

    std::size_t id;
    Discretization omega;                ///< Ω_i^ℓ, Γ_i^ℓ penalized from inside
    std::optional<Discretization> strip; ///< P_i; absent without interfaces
    std::vector<OneSidedFace> interface; ///< Γ_i^ℓ faces with their inner cell
    std::vector<std::size_t> outer;      ///< outer cell of each interface face
    std::unique_ptr<CrankNicolson> cn;
    State state;                         ///< (u, v) on Ω_i^ℓ
    State strip_state;                   ///< (u, v) on P_i
    DofMap omega_map;
    DofMap strip_map;
    double reference_norm = 1.0;         ///< instability guard of the prediction
    std::size_t last_iterations = 0;
    double last_jump = 0.0;
};

struct SplitState {
    const BrokenSpace* space = nullptr;
    const SubdomainLayout* layout = nullptr;
    std::vector<std::unique_ptr<SubdomainContext>> contexts;
    std::unique_ptr<ExchangeEngine> engine;
    CommGraph graph;
    SplitOptions options;
    double tau = 0.0;
    std::size_t step = 0;

    double time() const { return static_cast<double>(step) * tau; }
};

/// Builds every context, projects u0/v0 locally and prepares the exchange.
/// Pass a schedule to override the greedy one.
SplitState ds_init(const BrokenSpace& space, const SubdomainLayout& layout, const ProblemData& data, double tau,
                   const SplitOptions& options = {}, std::optional<CommSchedule> schedule = std::nullopt);

/// u⋆ = u + τ (v − τ/2 M⁻¹A u + τ/2 f + τ/2 M⁻¹G(g)) on P_i at the context's
/// current step. Empty without interfaces.
std::vector<double> predict(const SubdomainContext& ctx, const ProblemData& data, double tau);

/// G_Γ({u⋆}_ω) + G_Γ({u_prev}_ω) on Ω_i^ℓ, both arguments given on P_i.
/// Crank-Nicolson multiplies the sum by τ²/4 alongside the Dirichlet terms.
std::vector<double> interface_data(const SubdomainContext& ctx, std::span<const double> ustar,
                                   std::span<const double> uprev);

/// max |⟦u⟧| over the face quadrature points of Γ_i^ℓ, u given on P_i.
double interface_jump(const SubdomainContext& ctx, std::span<const double> u);

/// One Crank-Nicolson step on Ω_i^ℓ with `interface_load` added to the data terms.
SolverReport local_cn(SubdomainContext& ctx, std::span<const double> interface_load, const ProblemData& data);

/// Refreshes every non-owned cell of every context with its owner's values.
void exchange(SplitState& split);

/// Owner-gather into a global state.
State assemble_global(const SplitState& split);
/// Σ_i (restriction to Ω_i extended by zero); agrees with assemble_global.
State assemble_global_sum(const SplitState& split);

/// Cells whose copies differ from their owner's values, as "subdomain:cell" strings.
std::vector<std::string> consistency_violations(const SplitState& split);

struct StepDiagnostics {
    std::size_t step = 0;
    std::vector<std::size_t> iterations;  ///< per subdomain
    std::size_t exchange_bytes = 0;
    double max_jump = 0.0;
};

/// Algorithm body: per subdomain predict → interface data → local CN, then exchange.
StepDiagnostics ds_step(SplitState& split, const ProblemData& data);

void write_diagnostics_header(std::ostream& out, std::size_t subdomains);
void write_diagnostics_row(std::ostream& out, const StepDiagnostics& d);

struct SplitRunResult {
    State final;
    std::vector<State> snapshots;
    std::vector<StepDiagnostics> diagnostics;
    std::size_t steps = 0;
    double tau = 0.0;
    std::vector<std::string> warnings;
    std::size_t total_iterations = 0;
    double setup_seconds = 0.0;
    double step_seconds = 0.0;
};

SplitRunResult run_split(const BrokenSpace& space, const SubdomainLayout& layout, const ProblemData& data, double tau,
                         double T, const SplitOptions& options = {}, std::size_t snapshot_every = 0);

}  // namespace dsdg
