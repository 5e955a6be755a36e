#include "dsdg/splitting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <ostream>

#include "dsdg/errors.hpp"

namespace dsdg {

namespace {

constexpr std::uint32_t kOmegaU = 0, kOmegaV = 1, kStripU = 2, kStripV = 3;

double eta_of(const BrokenSpace& space, const SplitOptions& o) {
    return o.eta > 0.0 ? o.eta : default_penalty(space.degree());
}

std::string with_id(std::size_t id, const std::string& what) {
    return "subdomain " + std::to_string(id + 1) + ": " + what;
}

// Rethrows a worker exception with the subdomain id prepended, preserving its type.
[[noreturn]] void rethrow_with_id(std::size_t id, std::exception_ptr e) {
    try {
        std::rethrow_exception(e);
    } catch (const InstabilityError& x) {
        throw InstabilityError(with_id(id, x.what()));
    } catch (const SolverError& x) {
        throw SolverError(with_id(id, x.what()));
    } catch (const Error& x) {
        throw Error(with_id(id, x.what()));
    }
}

std::vector<TransferDescriptor> build_descriptors(const SplitState& split) {
    const SubdomainLayout& layout = *split.layout;
    const std::size_t nd = split.space->dofs_per_cell();
    std::vector<TransferDescriptor> out;
    for (const auto& [key, s] : layout.overlaps) {
        const auto [a, b] = key;
        for (auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
            const CellSet cells = transfer_cells(layout, from, to);
            if (cells.empty()) continue;
            const SubdomainContext& src = *split.contexts[from];
            const SubdomainContext& dst = *split.contexts[to];
            for (Component tag : {Component::U, Component::V}) {
                TransferDescriptor d;
                d.from = from;
                d.to = to;
                d.tag = tag;
                const std::uint32_t src_buf = tag == Component::U ? kOmegaU : kOmegaV;
                const std::uint32_t dst_omega = src_buf;
                const std::uint32_t dst_strip = tag == Component::U ? kStripU : kStripV;
                for (std::size_t c : cells) {
                    const std::size_t base = d.pack.size();
                    for (std::size_t k = 0; k < nd; ++k) d.pack.push_back({src_buf, src.omega.dofs().block(c) + k});
                    if (dst.omega.dofs().contains(c)) {
                        for (std::size_t k = 0; k < nd; ++k)
                            d.unpack.push_back({base + k, {dst_omega, dst.omega.dofs().block(c) + k}});
                    }
                    if (dst.strip && dst.strip->dofs().contains(c)) {
                        for (std::size_t k = 0; k < nd; ++k)
                            d.unpack.push_back({base + k, {dst_strip, dst.strip->dofs().block(c) + k}});
                    }
                }
                out.push_back(std::move(d));
            }
        }
    }
    return out;
}

std::vector<ExchangeEngine::WorkerBuffers> buffers_of(SplitState& split) {
    std::vector<ExchangeEngine::WorkerBuffers> b;
    b.reserve(split.contexts.size());
    for (auto& ctx : split.contexts) {
        b.push_back({std::span<double>(ctx->state.u), std::span<double>(ctx->state.v),
                     std::span<double>(ctx->strip_state.u), std::span<double>(ctx->strip_state.v)});
    }
    return b;
}

}  // namespace

SubdomainContext::SubdomainContext(const BrokenSpace& space, const SubdomainLayout& layout, std::size_t id_,
                                   double tau, const SplitOptions& options)
    : id(id_) {
    const Mesh& mesh = space.mesh();
    const Subdomain& sub = layout.subdomains[id];
    const double eta = eta_of(space, options);
    interface = one_sided_faces(mesh, sub.interface_faces, sub.overlapped);
    omega = make_discretization(space, sub.overlapped, interface, eta);
    omega_map = build_dofmap(sub.overlapped, space);
    if (!interface.empty()) {
        strip.emplace(make_discretization(space, sub.prediction, {}, eta));
        strip_map = build_dofmap(sub.prediction, space);
        for (const OneSidedFace& p : interface) {
            const Face& f = mesh.face(p.face);
            const std::size_t o = f.cells[0] == p.cell ? f.cells[1] : f.cells[0];
            if (o == npos || !strip->dofs().contains(o) || !strip->dofs().contains(p.cell)) {
                throw LayoutError(with_id(id, "interface face " + std::to_string(p.face) +
                                                  " does not have both incident cells in the prediction strip"));
            }
            outer.push_back(o);
        }
    }
    cn = std::make_unique<CrankNicolson>(omega, tau, options.solver, options.preconditioner);
}

SplitState ds_init(const BrokenSpace& space, const SubdomainLayout& layout, const ProblemData& data, double tau,
                   const SplitOptions& options, std::optional<CommSchedule> schedule) {
    if (layout.owner.size() != space.mesh().num_cells()) throw LayoutError("layout does not match the mesh");
    SplitState split;
    split.space = &space;
    split.layout = &layout;
    split.options = options;
    split.tau = tau;
    split.contexts.resize(layout.count());
    // Context setup (assembly, preconditioner) is independent per subdomain.
    std::vector<std::exception_ptr> errors(layout.count());
#pragma omp parallel for schedule(static) num_threads(static_cast<int>(std::max<std::size_t>(options.workers, 1)))
    for (std::size_t i = 0; i < layout.count(); ++i) {
        try {
            auto ctx = std::make_unique<SubdomainContext>(space, layout, i, tau, options);
            ctx->state = initial_state(ctx->omega, data, tau);
            if (ctx->strip) {
                ctx->strip_state = initial_state(*ctx->strip, data, tau);
                ctx->reference_norm = std::max(
                    1.0, std::sqrt(dot(ctx->strip_state.u, ctx->strip_state.u) + dot(ctx->strip_state.v, ctx->strip_state.v)));
            }
            split.contexts[i] = std::move(ctx);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (errors[i]) rethrow_with_id(i, errors[i]);

    split.graph = build_comm_graph(layout, space);
    CommSchedule s = schedule ? std::move(*schedule) : greedy_schedule(split.graph);
    EngineOptions eo;
    eo.threaded = options.workers > 1;
    eo.watchdog = options.watchdog;
    split.engine = std::make_unique<ExchangeEngine>(layout.count(), std::move(s), build_descriptors(split), eo);
    if (options.debug_checks) {
        const auto bad = consistency_violations(split);
        if (!bad.empty()) throw ProtocolError("inconsistent initial state at " + bad.front());
    }
    return split;
}

std::vector<double> predict(const SubdomainContext& ctx, const ProblemData& data, double tau) {
    if (!ctx.strip) return {};
    const Discretization& p = *ctx.strip;
    const double t = ctx.strip_state.time();
    const std::vector<double> f = projected_source(p, data, t);
    const std::vector<double> g = dirichlet_load(p, data, t);
    const std::size_t n = p.size();
    std::vector<double> vhalf(n);
    leapfrog_half_kick(p.op, ctx.strip_state.u, ctx.strip_state.v, f, g, tau, vhalf);
    std::vector<double> ustar(ctx.strip_state.u);
    for (std::size_t i = 0; i < n; ++i) ustar[i] += tau * vhalf[i];
    const double norm = std::sqrt(dot(ustar, ustar));
    if (!std::isfinite(norm) || norm > 1e6 * ctx.reference_norm) {
        throw InstabilityError("prediction norm " + std::to_string(norm) + " exceeds 1e6 x reference at step " +
                               std::to_string(ctx.strip_state.step + 1));
    }
    return ustar;
}

namespace {

double weighted_trace(const SubdomainContext& ctx, std::span<const double> u, std::size_t k, Point x) {
    const BrokenSpace& space = *ctx.omega.space;
    const Mesh& mesh = space.mesh();
    const CellDofMap& dofs = ctx.strip->dofs();
    const std::size_t nd = space.dofs_per_cell();
    const std::size_t in = ctx.interface[k].cell, out = ctx.outer[k];
    // weights in the face's own (lower, upper) orientation
    const std::size_t lo = std::min(in, out), hi = std::max(in, out);
    const SwipWeights w = swip_weights(mesh.kappa(lo), mesh.kappa(hi));
    const double u_lo = evaluate_unchecked(space, u.subspan(dofs.block(lo), nd), lo, x);
    const double u_hi = evaluate_unchecked(space, u.subspan(dofs.block(hi), nd), hi, x);
    return w.omega0 * u_lo + w.omega1 * u_hi;
}

}  // namespace

std::vector<double> interface_data(const SubdomainContext& ctx, std::span<const double> ustar,
                                   std::span<const double> uprev) {
    if (ctx.interface.empty()) return {};
    const std::size_t n = ctx.strip->size();
    if (ustar.size() != n || uprev.size() != n) throw DomainError("interface data: strip vector size mismatch");
    std::vector<std::size_t> position(ctx.omega.space->mesh().num_faces(), npos);
    for (std::size_t k = 0; k < ctx.interface.size(); ++k) position[ctx.interface[k].face] = k;
    auto g = [&](std::size_t face, Point x) {
        const std::size_t k = position[face];
        return weighted_trace(ctx, ustar, k, x) + weighted_trace(ctx, uprev, k, x);
    };
    return boundary_term(*ctx.omega.space, ctx.omega.dofs(), ctx.interface, g, ctx.omega.op.eta);
}

double interface_jump(const SubdomainContext& ctx, std::span<const double> u) {
    if (ctx.interface.empty()) return 0.0;
    const BrokenSpace& space = *ctx.omega.space;
    const Mesh& mesh = space.mesh();
    const CellDofMap& dofs = ctx.strip->dofs();
    const std::size_t nd = space.dofs_per_cell();
    double jump = 0.0;
    for (std::size_t k = 0; k < ctx.interface.size(); ++k) {
        const Face& f = mesh.face(ctx.interface[k].face);
        const Point a = mesh.vertices()[f.vertices[0]];
        const Point b = mesh.vertices()[f.vertices[1]];
        const std::size_t in = ctx.interface[k].cell, out = ctx.outer[k];
        for (double s : space.face_rule().points) {
            const Point x = a + s * (b - a);
            const double d = evaluate_unchecked(space, u.subspan(dofs.block(in), nd), in, x) -
                             evaluate_unchecked(space, u.subspan(dofs.block(out), nd), out, x);
            jump = std::max(jump, std::abs(d));
        }
    }
    return jump;
}

SolverReport local_cn(SubdomainContext& ctx, std::span<const double> interface_load, const ProblemData& data) {
    return ctx.cn->step(ctx.state, data, interface_load);
}

void exchange(SplitState& split) {
    const std::size_t nd = split.space->dofs_per_cell();
    // Owned cells of the strip come from the subdomain's own Ω_i^ℓ context.
    for (auto& ctx : split.contexts) {
        if (!ctx->strip) continue;
        const CellDofMap& sd = ctx->strip->dofs();
        const CellDofMap& od = ctx->omega.dofs();
        for (std::size_t c : sd.cells()) {
            if (split.layout->owner[c] != ctx->id) continue;
            for (std::size_t k = 0; k < nd; ++k) {
                ctx->strip_state.u[sd.block(c) + k] = ctx->state.u[od.block(c) + k];
                ctx->strip_state.v[sd.block(c) + k] = ctx->state.v[od.block(c) + k];
            }
        }
    }
    auto buffers = buffers_of(split);
    split.engine->run(buffers);
    if (split.options.debug_checks) {
        const auto bad = consistency_violations(split);
        if (!bad.empty()) {
            throw ProtocolError("incomplete exchange: " + std::to_string(bad.size()) +
                                " stale cell copies, first at " + bad.front());
        }
    }
}

namespace {

void gather_owned(const SplitState& split, const SubdomainContext& ctx, State& out, bool add) {
    const std::size_t nd = split.space->dofs_per_cell();
    const CellDofMap& od = ctx.omega.dofs();
    for (std::size_t c : split.layout->subdomains[ctx.id].owned) {
        const std::size_t g = split.space->block(c), l = od.block(c);
        for (std::size_t k = 0; k < nd; ++k) {
            if (add) {
                out.u[g + k] += ctx.state.u[l + k];
                out.v[g + k] += ctx.state.v[l + k];
            } else {
                out.u[g + k] = ctx.state.u[l + k];
                out.v[g + k] = ctx.state.v[l + k];
            }
        }
    }
}

State empty_global(const SplitState& split) {
    State s;
    s.u.assign(split.space->num_dofs(), 0.0);
    s.v.assign(split.space->num_dofs(), 0.0);
    s.step = split.step;
    s.tau = split.tau;
    return s;
}

}  // namespace

State assemble_global(const SplitState& split) {
    State s = empty_global(split);
    const std::size_t nd = split.space->dofs_per_cell();
    const Mesh& mesh = split.space->mesh();
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const SubdomainContext& ctx = *split.contexts[split.layout->owner[c]];
        const std::size_t g = split.space->block(c), l = ctx.omega.dofs().block(c);
        for (std::size_t k = 0; k < nd; ++k) {
            s.u[g + k] = ctx.state.u[l + k];
            s.v[g + k] = ctx.state.v[l + k];
        }
    }
    return s;
}

State assemble_global_sum(const SplitState& split) {
    State s = empty_global(split);
    for (const auto& ctx : split.contexts) gather_owned(split, *ctx, s, true);
    return s;
}

std::vector<std::string> consistency_violations(const SplitState& split) {
    const std::size_t nd = split.space->dofs_per_cell();
    std::vector<std::string> bad;
    auto scan = [&](const SubdomainContext& ctx, const CellDofMap& dofs, const State& st) {
        for (std::size_t c : dofs.cells()) {
            const SubdomainContext& own = *split.contexts[split.layout->owner[c]];
            const std::size_t lo = own.omega.dofs().block(c), l = dofs.block(c);
            for (std::size_t k = 0; k < nd; ++k) {
                if (st.u[l + k] != own.state.u[lo + k] || st.v[l + k] != own.state.v[lo + k]) {
                    bad.push_back(std::to_string(ctx.id + 1) + ":" + std::to_string(c));
                    break;
                }
            }
        }
    };
    for (const auto& ctx : split.contexts) {
        scan(*ctx, ctx->omega.dofs(), ctx->state);
        if (ctx->strip) scan(*ctx, ctx->strip->dofs(), ctx->strip_state);
    }
    return bad;
}

StepDiagnostics ds_step(SplitState& split, const ProblemData& data) {
    const std::size_t count = split.contexts.size();
    StepDiagnostics diag;
    diag.iterations.assign(count, 0);
    std::vector<std::exception_ptr> errors(count);
    const int threads = static_cast<int>(std::max<std::size_t>(split.options.workers, 1));
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::size_t i = 0; i < count; ++i) {
        SubdomainContext& ctx = *split.contexts[i];
        try {
            std::vector<double> load;
            if (ctx.strip) {
                const std::vector<double> ustar = predict(ctx, data, split.tau);
                load = interface_data(ctx, ustar, ctx.strip_state.u);
                ctx.last_jump = interface_jump(ctx, ustar);
            }
            ctx.last_iterations = local_cn(ctx, load, data).iterations;
            if (ctx.strip) {
                ++ctx.strip_state.step;
                ctx.strip_state.tau = split.tau;
            }
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < count; ++i)
        if (errors[i]) rethrow_with_id(i, errors[i]);

    exchange(split);
    ++split.step;
    diag.step = split.step;
    diag.exchange_bytes = split.engine->bytes_per_exchange();
    for (std::size_t i = 0; i < count; ++i) {
        diag.iterations[i] = split.contexts[i]->last_iterations;
        diag.max_jump = std::max(diag.max_jump, split.contexts[i]->last_jump);
    }
    return diag;
}

void write_diagnostics_header(std::ostream& out, std::size_t subdomains) {
    out << "step";
    for (std::size_t i = 0; i < subdomains; ++i) out << ",iterations_" << i + 1;
    out << ",exchange_bytes,max_interface_jump\n";
}

void write_diagnostics_row(std::ostream& out, const StepDiagnostics& d) {
    out << d.step;
    for (std::size_t it : d.iterations) out << ',' << it;
    out << ',' << d.exchange_bytes << ',' << d.max_jump << '\n';
}

SplitRunResult run_split(const BrokenSpace& space, const SubdomainLayout& layout, const ProblemData& data, double tau,
                         double T, const SplitOptions& options, std::size_t snapshot_every) {
    using clock = std::chrono::steady_clock;
    SplitRunResult result;
    const auto [steps, adjusted] = time_grid(tau, T);
    if (std::abs(adjusted - tau) > 1e-14 * tau) {
        result.warnings.push_back("tau adjusted from " + std::to_string(tau) + " to " + std::to_string(adjusted) +
                                  " so that T is a multiple of tau");
    }
    result.warnings.insert(result.warnings.end(), layout.warnings.begin(), layout.warnings.end());
    result.tau = adjusted;
    result.steps = steps;
    const auto t0 = clock::now();
    SplitState split = ds_init(space, layout, data, adjusted, options);
    result.setup_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    if (snapshot_every > 0) result.snapshots.push_back(assemble_global(split));
    const auto t1 = clock::now();
    for (std::size_t n = 0; n < steps; ++n) {
        StepDiagnostics d = ds_step(split, data);
        for (std::size_t it : d.iterations) result.total_iterations += it;
        result.diagnostics.push_back(std::move(d));
        if (snapshot_every > 0 && split.step % snapshot_every == 0) result.snapshots.push_back(assemble_global(split));
    }
    result.step_seconds = std::chrono::duration<double>(clock::now() - t1).count();
    result.final = assemble_global(split);
    return result;
}

}  // namespace dsdg
