// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)
#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dsdg/comms.hpp"
#include "dsdg/errors.hpp"
#include "dsdg/harness.hpp"
#include "dsdg/splitting.hpp"
#include "dsdg/swip.hpp"

using namespace dsdg;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Mesh unit_mesh(std::size_t n, bool two_materials) {
    Mesh m = build_structured_mesh(n, n, Rectangle{0, 0, 1, 1});
    if (two_materials) m.sample_kappa([](Point x) { return x.x + x.y < 1.0 ? 1.0 : 1.5; });
    return classify_boundary(std::move(m), [](Point x) { return x.x < 1e-12 || x.y < 1e-12; });
}

OwnerMap quadrants(const Mesh& m) {
    OwnerMap owner(m.num_cells());
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        const Point x = m.centroid(c);
        owner[c] = (x.x < 0.5 ? 0 : 1) + (x.y < 0.5 ? 0 : 2);
    }
    return owner;
}

ProblemData forced_data() {
    ProblemData d;
    d.u0 = [](Point x) { return std::sin(std::numbers::pi * x.x) * std::sin(std::numbers::pi * x.y) + 0.2 * x.x; };
    d.v0 = [](Point x) { return 0.5 * x.y * (1.0 - x.x); };
    d.f = [](Point x, double t) { return std::cos(2.0 * t) * (1.0 + x.x * x.y); };
    d.g = [](Point x, double t) { return std::sin(3.0 * t + x.y); };
    return d;
}

RunConfig standing_wave() {
    return load_config(DSDG_CONFIG_DIR "/standing_wave.toml");
}

// 1 ------------------------------------------------------------------------

Outcome golden_schedule() {
    const CommGraph g = CommGraph::make(6, {{3, 5, 130}, {2, 4, 90}, {1, 3, 120}, {4, 6, 85}, {3, 4, 100}, {5, 6, 110},
                                            {1, 2, 100}, {4, 5, 20}, {2, 3, 15}, {1, 4, 10}, {3, 6, 10}});
    using Round = std::set<std::tuple<std::size_t, std::size_t, std::size_t>>;
    const std::vector<Round> expected{{{3, 5, 130}, {2, 4, 90}},
                                      {{1, 3, 120}, {4, 6, 85}},
                                      {{3, 4, 100}, {5, 6, 110}, {1, 2, 100}},
                                      {{4, 5, 20}, {2, 3, 15}},
                                      {{1, 4, 10}, {3, 6, 10}}};
    const CommSchedule s = greedy_schedule(g);
    std::vector<Round> got;
    for (const auto& r : s.rounds) {
        Round set;
        for (const auto& e : r) set.insert({e.i, e.j, e.weight});
        got.push_back(set);
    }
    const bool pass = got == expected;
    return {pass, std::to_string(s.rounds.size()) + " rounds, " + (pass ? "all sets match" : "mismatch:\n" + format_schedule(s))};
}

// 2 ------------------------------------------------------------------------

Outcome degeneracy() {
    const Mesh m = unit_mesh(8, true);
    const BrokenSpace space(m, 2);
    const SubdomainLayout layout = build_layout(m, OwnerMap(m.num_cells(), 0), 2);
    const ProblemData data = forced_data();
    SplitOptions options;
    options.solver = {1e-12, 5000};
    const double tau = 0.02, T = 0.5;
    const SplitRunResult ds = run_split(space, layout, data, tau, T, options);
    const Discretization g = make_global_discretization(space, default_penalty(2));
    RunOptions ro;
    ro.solver = options.solver;
    const RunResult cn = run(Method::CrankNicolson, g, data, tau, T, ro);
    const double du = max_abs_diff(ds.final.u, cn.final.u), dv = max_abs_diff(ds.final.v, cn.final.v);
    const double bound = 10 * options.solver.tol;
    return {du <= bound && dv <= bound, "max |du| " + fmt(du) + ", max |dv| " + fmt(dv) + " (bound " + fmt(bound) + ")"};
}

// 3 ------------------------------------------------------------------------

Outcome prediction_locality() {
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t k : {1u, 2u}) {
        const Mesh m = unit_mesh(16, true);
        const BrokenSpace space(m, k);
        const SubdomainLayout layout = build_layout(m, quadrants(m), 2);
        const ProblemData data = forced_data();
        const double tau = 1e-3;
        SplitState split = ds_init(space, layout, data, tau);
        ds_step(split, data);

        const State global = assemble_global(split);
        const Discretization g = make_global_discretization(space, default_penalty(k));
        const double t = split.time();
        const auto f = projected_source(g, data, t);
        const auto gl = dirichlet_load(g, data, t);
        std::vector<double> vhalf(g.size());
        leapfrog_half_kick(g.op, global.u, global.v, f, gl, tau, vhalf);
        std::vector<double> u1(global.u);
        for (std::size_t i = 0; i < u1.size(); ++i) u1[i] += tau * vhalf[i];

        const std::size_t nd = space.dofs_per_cell();
        for (const auto& ctx : split.contexts) {
            const auto ustar = predict(*ctx, data, tau);
            for (const OneSidedFace& face : ctx->interface) {
                for (std::size_t cell : m.face(face.face).cells) {
                    const std::size_t lb = ctx->strip->dofs().block(cell);
                    for (std::size_t i = 0; i < nd; ++i)
                        worst = std::max(worst, std::abs(ustar[lb + i] - u1[space.block(cell) + i]));
                    ++checked;
                }
            }
        }
    }
    return {checked > 0 && worst <= 1e-12, "max diff " + fmt(worst) + " over " + std::to_string(checked) + " cell blocks, k = 1, 2"};
}

// 4 ------------------------------------------------------------------------

Outcome temporal_order() {
    bool pass = true;
    std::string detail;
    for (const std::string method : {"cn", "lf", "ds"}) {
        RunConfig c = standing_wave();
        c.method = method;
        c.tau = 1.0 / 40;
        c.subdomains = 4;
        c.layers = 4;
        detail += (detail.empty() ? "" : "; ") + method + ":";
        try {
            const auto rows = converge_time(c, 3);
            for (std::size_t i = 1; i < rows.size(); ++i) {
                const double p = rows[i].order_u;
                pass = pass && p >= 1.8 && p <= 2.2;
                detail += " " + fmt(p);
            }
        } catch (const InstabilityError& e) {
            pass = false;
            detail += std::string(" unstable (") + e.what() + ")";
        }
    }
    return {pass, "orders at tau = 1/80, 1/160 " + detail};
}

// 5 ------------------------------------------------------------------------

Outcome spatial_order() {
    bool pass = true;
    std::string detail;
    for (std::size_t k : {1u, 2u}) {
        RunConfig c = standing_wave();
        c.method = "cn";
        c.degree = k;
        c.nx = c.ny = 4;
        c.tau = 1e-3;
        c.T = 1.0;
        c.reference = "exact";
        const auto rows = converge_space(c, 3);
        detail += (detail.empty() ? "k=" : "; k=") + std::to_string(k) + ":";
        for (std::size_t i = 1; i < rows.size(); ++i) {
            pass = pass && rows[i].order_u >= static_cast<double>(k) + 0.7;
            detail += " " + fmt(rows[i].order_u);
        }
    }
    return {pass, "L2 orders on h/2, h/4 " + detail};
}

// 6 ------------------------------------------------------------------------

Outcome energy() {
    Mesh m = build_structured_mesh(8, 8, Rectangle{0, 0, 1, 1});
    m = classify_boundary(std::move(m), [](Point) { return true; });
    const BrokenSpace space(m, 2);
    const Discretization d = make_global_discretization(space, default_penalty(2));
    ProblemData data;
    data.u0 = [](Point x) { return std::sin(std::numbers::pi * x.x) * std::sin(std::numbers::pi * x.y); };

    State s = initial_state(d, data, 0.01);
    CrankNicolson cn(d, 0.01, {1e-14, 5000});
    const double e0 = cn_energy(d, s);
    double drift_cn = 0.0;
    for (int n = 0; n < 1000; ++n) {
        cn.step(s, data);
        drift_cn = std::max(drift_cn, std::abs(cn_energy(d, s) - e0) / e0);
    }

    const double tau = 0.9 * leapfrog_stable_step(d.op);
    State l = initial_state(d, data, tau);
    Leapfrog lf(d, tau);
    const double l0 = leapfrog_energy(d, l);
    double drift_lf = 0.0;
    for (int n = 0; n < 1000; ++n) {
        lf.step(l, data);
        drift_lf = std::max(drift_lf, std::abs(leapfrog_energy(d, l) - l0) / l0);
    }
    return {drift_cn <= 1e-10 && drift_lf <= 1e-10,
            "max relative drift over 1000 steps: CN " + fmt(drift_cn) + ", leapfrog " + fmt(drift_lf)};
}

// 7 ------------------------------------------------------------------------

Outcome overlap_trend() {
    const RunConfig c = load_config(DSDG_CONFIG_DIR "/prism.toml");
    const auto rows = compare_to_cn(c, {2, 4, 8});
    bool pass = rows.size() == 3 && rows.front().cn.cells <= 20000;
    std::string diffs = "DS-CN combined", errors = "rel L2 vs refined LF (DS/CN)";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0) pass = pass && rows[i].rel_combined <= rows[i - 1].rel_combined;
        const double ds = rows[i].ds.rel_l2_u, cn = rows[i].cn.rel_l2_u;
        pass = pass && std::abs(ds - cn) <= 0.02 * cn;
        diffs += " " + fmt(rows[i].rel_combined);
        errors += " " + fmt(ds) + "/" + fmt(cn);
    }
    return {pass, std::to_string(rows.front().cn.cells) + " cells; " + diffs + "; " + errors};
}

// 8 ------------------------------------------------------------------------

Outcome determinism() {
    const Mesh m = unit_mesh(16, true);
    const BrokenSpace space(m, 2);
    const SubdomainLayout layout = build_layout(m, partition_cells(m, 4, 7), 2);
    const ProblemData data = forced_data();
    SplitOptions serial, threaded;
    threaded.workers = 4;
    const SplitRunResult a = run_split(space, layout, data, 0.01, 0.2, serial);
    const SplitRunResult b = run_split(space, layout, data, 0.01, 0.2, threaded);
    const bool same = a.final.u == b.final.u && a.final.v == b.final.v;
    return {same, same ? "final u, v bit-identical (1 vs 4 workers)" : "final vectors differ"};
}

// 9 ------------------------------------------------------------------------

Outcome swip_suite() {
    bool pass = true;
    std::string detail;
    for (std::size_t k : {1u, 2u}) {
        Mesh m = build_structured_mesh(4, 4, Rectangle{0, 0, 1, 1});
        m.sample_kappa([](Point x) { return x.x < 0.5 ? 1.0 : 1.5; });
        const BrokenSpace space(m, k);
        const SwipOperator op = assemble_global_swip(space, default_penalty(k));  // no Dirichlet faces: pure Neumann
        const bool symmetric = op.matrix.is_symmetric();

        Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<long>(op.size()), static_cast<long>(op.size()));
        for (std::size_t i = 0; i < op.size(); ++i)
            for (std::size_t p = op.matrix.row_ptr()[i]; p < op.matrix.row_ptr()[i + 1]; ++p)
                dense(static_cast<long>(i), static_cast<long>(op.matrix.cols()[p])) = op.matrix.vals()[p];
        const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense).eigenvalues();
        const double norm = eig.cwiseAbs().maxCoeff();

        const Field one = l2_project(space, [](Point) { return 1.0; });
        const auto a1 = op.matrix * std::span<const double>(one.values);
        const double kernel = norm2(a1) / (norm * norm2(one.values));

        bool harmonic = false;
        for (const auto& fc : op.faces) {
            if (fc.one_sided) continue;
            const Face& f = m.face(fc.face);
            if (m.kappa(f.cells[0]) != m.kappa(f.cells[1])) harmonic = fc.weights.gamma == 1.2;
        }
        pass = pass && symmetric && kernel <= 1e-12 && eig.minCoeff() >= -1e-10 * norm && harmonic;
        detail += (detail.empty() ? "k=" : "; k=") + std::to_string(k) + ": symmetric " + (symmetric ? "yes" : "no") +
                  ", |A1|/|A||1| " + fmt(kernel) + ", min eig/|A| " + fmt(eig.minCoeff() / norm) + ", gamma 1.2 " +
                  (harmonic ? "yes" : "no");
    }
    const bool weights = swip_weights(1.0, 1.5).gamma == 1.2;
    return {pass && weights, detail};
}

// 10 -----------------------------------------------------------------------

Outcome schedule_properties() {
    std::mt19937 rng(7);
    std::size_t bad = 0, max_rounds = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
        std::bernoulli_distribution keep(std::uniform_real_distribution<double>(0.1, 0.9)(rng));
        std::uniform_int_distribution<std::size_t> w(1, 200);
        std::vector<CommEdge> edges;
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t j = i + 1; j <= n; ++j)
                if (keep(rng)) edges.push_back({i, j, w(rng)});
        const CommGraph g = CommGraph::make(n, edges);
        const CommSchedule s = greedy_schedule(g);
        const bool bound = g.edges.empty() ? s.rounds.empty() : s.rounds.size() <= 2 * g.max_degree() - 1;
        if (!check_schedule(g, s).empty() || s.num_edges() != g.edges.size() || !bound) ++bad;
        max_rounds = std::max(max_rounds, s.rounds.size());
    }
    return {bad == 0, std::to_string(bad) + " of 1000 graphs violate a property (max rounds " + std::to_string(max_rounds) + ")"};
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "scheduler golden", 1, golden_schedule},
        {2, "one-subdomain degeneracy", 10, degeneracy},
        {3, "prediction locality", 30, prediction_locality},
        {4, "temporal order two", 300, temporal_order},
        {5, "spatial accuracy", 300, spatial_order},
        {6, "energy conservation", 120, energy},
        {7, "overlap trend (prism)", 900, overlap_trend},
        {8, "determinism", 120, determinism},
        {9, "SWIP operator suite", 60, swip_suite},
        {10, "scheduler properties", 30, schedule_properties},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_seconds;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("%s  [%2d] %-26s %7.2fs (< %gs%s)  %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_seconds,
                    in_time ? "" : ", over budget", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d criterion(s) failed\n", failed);
    return failed == 0 ? 0 : 1;
}
