#include "dsdg/integrators.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "dsdg/errors.hpp"

namespace dsdg {

Discretization make_discretization(const BrokenSpace& space, const CellSet& cells,
                                   std::span<const OneSidedFace> extra_penalized, double eta) {
    const Mesh& mesh = space.mesh();
    Discretization d;
    d.space = &space;
    d.dirichlet = one_sided_faces(mesh, labeled_faces(mesh, cells, BoundaryLabel::Dirichlet), cells);
    std::vector<OneSidedFace> penalized = d.dirichlet;
    penalized.insert(penalized.end(), extra_penalized.begin(), extra_penalized.end());
    d.op = assemble_swip(space, cells, penalized, eta);
    return d;
}

Discretization make_global_discretization(const BrokenSpace& space, double eta) {
    return make_discretization(space, CellSet::all(space.mesh().num_cells()), {}, eta);
}

std::vector<double> projected_source(const Discretization& d, const ProblemData& data, double t) {
    if (!data.f) return std::vector<double>(d.size(), 0.0);
    return project_local(*d.space, d.dofs(), [&](Point x) { return data.f(x, t); });
}

std::vector<double> dirichlet_load(const Discretization& d, const ProblemData& data, double t) {
    if (!data.g || d.dirichlet.empty()) return std::vector<double>(d.size(), 0.0);
    return boundary_term(*d.space, d.dofs(), d.dirichlet, [&](std::size_t, Point x) { return data.g(x, t); },
                         d.op.eta);
}

State initial_state(const Discretization& d, const ProblemData& data, double tau) {
    State s;
    s.tau = tau;
    s.u = data.u0 ? project_local(*d.space, d.dofs(), data.u0) : std::vector<double>(d.size(), 0.0);
    s.v = data.v0 ? project_local(*d.space, d.dofs(), data.v0) : std::vector<double>(d.size(), 0.0);
    return s;
}

PreconditionerKind parse_preconditioner(const std::string& name) {
    if (name == "none") return PreconditionerKind::None;
    if (name == "ic0" || name == "icc") return PreconditionerKind::IncompleteCholesky;
    if (name == "block_jacobi" || name == "bjacobi") return PreconditionerKind::BlockJacobi;
    throw ConfigError("unknown preconditioner '" + name + "'");
}

CrankNicolson::CrankNicolson(const Discretization& d, double tau, SolverOptions solver, PreconditionerKind precond)
    : disc_(&d), tau_(tau), solver_(solver) {
    if (!(tau > 0.0)) throw ConfigError("time step must be positive");
    system_ = d.op.matrix.scaled_plus_diagonal(0.25 * tau * tau, d.op.mass);
    switch (precond) {
        case PreconditionerKind::None:
            precond_ = std::make_unique<IdentityPreconditioner>();
            break;
        case PreconditionerKind::IncompleteCholesky:
            precond_ = ic0_precondition(system_);
            break;
        case PreconditionerKind::BlockJacobi:
            precond_ = block_jacobi_precondition(system_, d.space->dofs_per_cell());
            break;
    }
}

SolverReport CrankNicolson::step(State& state, const ProblemData& data, std::span<const double> extra_load) {
    const Discretization& d = *disc_;
    const std::size_t n = d.size();
    if (state.u.size() != n || state.v.size() != n) throw DomainError("state does not match discretization");
    if (!extra_load.empty() && extra_load.size() != n) throw DomainError("extra load size mismatch");
    const double t0 = static_cast<double>(state.step) * tau_;
    const double t1 = static_cast<double>(state.step + 1) * tau_;
    if (cached_step_ != state.step) {
        cached_f_ = projected_source(d, data, t0);
        cached_g_ = dirichlet_load(d, data, t0);
    }
    std::vector<double> f1 = projected_source(d, data, t1);
    std::vector<double> g1 = dirichlet_load(d, data, t1);

    const auto& m = d.op.mass;
    const double q = 0.25 * tau_ * tau_;
    std::vector<double> au = d.op.matrix * state.u;
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
        double g = g1[i] + cached_g_[i];
        if (!extra_load.empty()) g += extra_load[i];
        rhs[i] = m[i] * (state.u[i] + tau_ * state.v[i]) - q * au[i] + q * m[i] * (f1[i] + cached_f_[i]) + q * g;
    }
    std::vector<double> u1 = state.u;
    SolverReport report = cg_solve(system_, rhs, u1, solver_, *precond_);
    if (!report.converged) {
        throw SolverError("Crank-Nicolson solve did not converge in " + std::to_string(report.iterations) +
                          " iterations (residual " + std::to_string(report.residual) + ")");
    }
    for (std::size_t i = 0; i < n; ++i) state.v[i] = (2.0 / tau_) * (u1[i] - state.u[i]) - state.v[i];
    state.u = std::move(u1);
    state.tau = tau_;
    ++state.step;
    cached_step_ = state.step;
    cached_f_ = std::move(f1);
    cached_g_ = std::move(g1);
    return report;
}

void leapfrog_half_kick(const SwipOperator& op, std::span<const double> u, std::span<const double> v,
                        std::span<const double> f, std::span<const double> g_load, double tau, std::span<double> out) {
    std::vector<double> lu(op.size());
    apply_lh(op, u, lu);
    const double h = 0.5 * tau;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] - h * lu[i] + h * f[i] + h * (g_load[i] / op.mass[i]);
}

double estimate_max_eigenvalue(const SwipOperator& op, std::size_t iterations) {
    const std::size_t n = op.size();
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(i) + 0.3);
    double lambda = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
        op.matrix.multiply(x, y);
        double xax = 0.0, xmx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            xax += x[i] * y[i];
            xmx += op.mass[i] * x[i] * x[i];
        }
        lambda = std::max(lambda, xax / xmx);
        for (std::size_t i = 0; i < n; ++i) y[i] /= op.mass[i];
        const double s = norm2(y);
        if (s == 0.0) break;
        for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / s;
    }
    return lambda;
}

double leapfrog_stable_step(const SwipOperator& op) {
    const double lambda = estimate_max_eigenvalue(op);
    return lambda > 0.0 ? 0.95 * 2.0 / std::sqrt(lambda) : std::numeric_limits<double>::infinity();
}

Leapfrog::Leapfrog(const Discretization& d, double tau, bool check_limit)
    : disc_(&d), tau_(tau), stable_step_(leapfrog_stable_step(d.op)) {
    if (!(tau > 0.0)) throw ConfigError("time step must be positive");
    if (check_limit && tau > stable_step_) {
        throw InstabilityError("leapfrog step " + std::to_string(tau) + " exceeds the estimated stability limit " +
                               std::to_string(stable_step_));
    }
}

void Leapfrog::step(State& state, const ProblemData& data) {
    const Discretization& d = *disc_;
    const std::size_t n = d.size();
    if (state.u.size() != n || state.v.size() != n) throw DomainError("state does not match discretization");
    const double t0 = static_cast<double>(state.step) * tau_;
    const double t1 = static_cast<double>(state.step + 1) * tau_;
    if (cached_step_ != state.step) {
        cached_f_ = projected_source(d, data, t0);
        cached_g_ = dirichlet_load(d, data, t0);
    }
    std::vector<double> f1 = projected_source(d, data, t1);
    std::vector<double> g1 = dirichlet_load(d, data, t1);

    std::vector<double> vhalf(n);
    leapfrog_half_kick(d.op, state.u, state.v, cached_f_, cached_g_, tau_, vhalf);
    for (std::size_t i = 0; i < n; ++i) state.u[i] += tau_ * vhalf[i];
    leapfrog_half_kick(d.op, state.u, vhalf, f1, g1, tau_, state.v);
    state.tau = tau_;
    ++state.step;
    cached_step_ = state.step;
    cached_f_ = std::move(f1);
    cached_g_ = std::move(g1);

    const double norm = std::sqrt(dot(state.u, state.u) + dot(state.v, state.v));
    if (!std::isfinite(norm) || norm > 1e6 * reference_norm_) {
        throw InstabilityError("leapfrog solution norm " + std::to_string(norm) + " exceeds 1e6 x reference at step " +
                               std::to_string(state.step));
    }
}

double cn_energy(const Discretization& d, const State& s) {
    double kinetic = 0.0;
    for (std::size_t i = 0; i < s.v.size(); ++i) kinetic += d.op.mass[i] * s.v[i] * s.v[i];
    return kinetic + dot(s.u, d.op.matrix * s.u);
}

double leapfrog_energy(const Discretization& d, const State& s) {
    const std::size_t n = d.size();
    const std::vector<double> zero(n, 0.0);
    std::vector<double> vhalf(n), u1(n);
    leapfrog_half_kick(d.op, s.u, s.v, zero, zero, s.tau, vhalf);
    for (std::size_t i = 0; i < n; ++i) u1[i] = s.u[i] + s.tau * vhalf[i];
    double kinetic = 0.0;
    for (std::size_t i = 0; i < n; ++i) kinetic += d.op.mass[i] * vhalf[i] * vhalf[i];
    return kinetic + dot(s.u, d.op.matrix * u1);
}

std::pair<std::size_t, double> time_grid(double tau, double T) {
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (!(T >= 0.0)) throw ConfigError("T must be non-negative");
    if (T == 0.0) return {0, tau};
    const double ratio = T / tau;
    auto steps = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(static_cast<double>(steps) - ratio) > 1e-9 * ratio || steps == 0) {
        steps = static_cast<std::size_t>(std::ceil(ratio));
    }
    return {steps, T / static_cast<double>(steps)};
}

RunResult run(Method method, const Discretization& d, const ProblemData& data, double tau, double T,
              const RunOptions& options) {
    using clock = std::chrono::steady_clock;
    RunResult result;
    const auto [steps, adjusted] = time_grid(tau, T);
    if (adjusted != tau && std::abs(adjusted - tau) > 1e-14 * tau) {
        result.warnings.push_back("tau adjusted from " + std::to_string(tau) + " to " + std::to_string(adjusted) +
                                  " so that T is a multiple of tau");
    }
    result.tau = adjusted;
    result.steps = steps;
    State state = initial_state(d, data, adjusted);
    auto snapshot = [&] {
        if (options.snapshot_every > 0 && state.step % options.snapshot_every == 0) result.snapshots.push_back(state);
    };
    snapshot();

    const auto t_setup = clock::now();
    if (method == Method::CrankNicolson) {
        CrankNicolson cn(d, adjusted, options.solver, options.preconditioner);
        result.setup_seconds = std::chrono::duration<double>(clock::now() - t_setup).count();
        const auto t_run = clock::now();
        for (std::size_t n = 0; n < steps; ++n) {
            result.total_iterations += cn.step(state, data).iterations;
            snapshot();
        }
        result.step_seconds = std::chrono::duration<double>(clock::now() - t_run).count();
    } else {
        Leapfrog lf(d, adjusted, options.check_limit);
        lf.set_reference_norm(std::max(1.0, std::sqrt(dot(state.u, state.u) + dot(state.v, state.v))));
        result.setup_seconds = std::chrono::duration<double>(clock::now() - t_setup).count();
        const auto t_run = clock::now();
        for (std::size_t n = 0; n < steps; ++n) {
            lf.step(state, data);
            snapshot();
        }
        result.step_seconds = std::chrono::duration<double>(clock::now() - t_run).count();
    }
    result.final = std::move(state);
    return result;
}

}  // namespace dsdg
