#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "dsdg/errors.hpp"
#include "dsdg/integrators.hpp"

using namespace dsdg;

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

Vec as_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<long>(v.size())); }

Mat dense(const SparseSymMatrix& s) {
    Mat d = Mat::Zero(static_cast<long>(s.size()), static_cast<long>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t p = s.row_ptr()[i]; p < s.row_ptr()[i + 1]; ++p)
            d(static_cast<long>(i), static_cast<long>(s.cols()[p])) = s.vals()[p];
    return d;
}

Mesh wave_mesh(std::size_t n) {
    Mesh m = build_structured_mesh(n, n, Rectangle{0, 0, 1, 1});
    m.sample_kappa([](Point x) { return x.y < 0.5 ? 1.0 : 1.5; });
    return classify_boundary(std::move(m), [](Point x) { return x.x < 1e-12; });
}

ProblemData forced_data() {
    ProblemData d;
    d.u0 = [](Point x) { return std::sin(std::numbers::pi * x.x) * x.y; };
    d.v0 = [](Point x) { return x.x * (1.0 - x.y); };
    d.f = [](Point x, double t) { return std::cos(3.0 * t) * (x.x + x.y); };
    d.g = [](Point x, double t) { return std::sin(2.0 * t) * (1.0 + x.y); };
    return d;
}

ProblemData free_data() {
    ProblemData d;
    d.u0 = [](Point x) { return std::exp(-40.0 * ((x.x - 0.5) * (x.x - 0.5) + (x.y - 0.4) * (x.y - 0.4))); };
    return d;
}

}  // namespace

TEST_CASE("Crank-Nicolson step matches the dense first-order system") {
    // Oracle: the (u, v) form
    //   u¹ − τ/2 v¹ = u + τ/2 v
    //   M v¹ + τ/2 A u¹ = M v − τ/2 A u + τ/2 (M f⁰ + M f¹ + G⁰ + G¹)
    const Mesh m = wave_mesh(3);
    const BrokenSpace space(m, 2);
    const Discretization d = make_global_discretization(space, default_penalty(2));
    const ProblemData data = forced_data();
    const double tau = 0.05;
    State s = initial_state(d, data, tau);
    s.step = 3;
    const Vec u0 = as_vec(s.u), v0 = as_vec(s.v);

    CrankNicolson cn(d, tau, {1e-14, 5000});
    cn.step(s, data);

    const long n = static_cast<long>(d.size());
    const Mat a = dense(d.op.matrix);
    const Mat mm = as_vec(d.op.mass).asDiagonal();
    const double t0 = 3 * tau, t1 = 4 * tau;
    const Vec load = mm * (as_vec(projected_source(d, data, t0)) + as_vec(projected_source(d, data, t1))) +
                     as_vec(dirichlet_load(d, data, t0)) + as_vec(dirichlet_load(d, data, t1));
    Mat big = Mat::Zero(2 * n, 2 * n);
    big.topLeftCorner(n, n) = Mat::Identity(n, n);
    big.topRightCorner(n, n) = -0.5 * tau * Mat::Identity(n, n);
    big.bottomLeftCorner(n, n) = 0.5 * tau * a;
    big.bottomRightCorner(n, n) = mm;
    Vec rhs(2 * n);
    rhs.head(n) = u0 + 0.5 * tau * v0;
    rhs.tail(n) = mm * v0 - 0.5 * tau * a * u0 + 0.5 * tau * load;
    const Vec x = big.partialPivLu().solve(rhs);

    CHECK((as_vec(s.u) - x.head(n)).cwiseAbs().maxCoeff() < 1e-10 * x.head(n).cwiseAbs().maxCoeff());
    CHECK((as_vec(s.v) - x.tail(n)).cwiseAbs().maxCoeff() < 1e-9 * x.tail(n).cwiseAbs().maxCoeff());
    CHECK(s.step == 4);
}

TEST_CASE("leapfrog step matches the explicit formula") {
    const Mesh m = wave_mesh(3);
    const BrokenSpace space(m, 1);
    const Discretization d = make_global_discretization(space, default_penalty(1));
    const ProblemData data = forced_data();
    const double tau = 0.2 * leapfrog_stable_step(d.op);
    State s = initial_state(d, data, tau);
    const Vec u0 = as_vec(s.u), v0 = as_vec(s.v);
    Leapfrog lf(d, tau);
    lf.step(s, data);

    const Mat a = dense(d.op.matrix);
    const Vec minv = as_vec(d.op.mass).cwiseInverse();
    auto accel = [&](const Vec& u, double t) {
        const Vec rhs = -a * u + as_vec(d.op.mass).cwiseProduct(as_vec(projected_source(d, data, t))) +
                        as_vec(dirichlet_load(d, data, t));
        return Vec(minv.cwiseProduct(rhs));
    };
    const Vec vh = v0 + 0.5 * tau * accel(u0, 0.0);
    const Vec u1 = u0 + tau * vh;
    const Vec v1 = vh + 0.5 * tau * accel(u1, tau);
    CHECK((as_vec(s.u) - u1).cwiseAbs().maxCoeff() < 1e-12 * u1.cwiseAbs().maxCoeff());
    CHECK((as_vec(s.v) - v1).cwiseAbs().maxCoeff() < 1e-12 * v1.cwiseAbs().maxCoeff());
}

TEST_CASE("energy is conserved without sources") {
    const Mesh m = wave_mesh(4);
    const BrokenSpace space(m, 2);
    const Discretization d = make_global_discretization(space, default_penalty(2));
    const ProblemData data = free_data();
    SUBCASE("Crank-Nicolson") {
        const double tau = 0.05;
        State s = initial_state(d, data, tau);
        CrankNicolson cn(d, tau, {1e-13, 5000});
        const double e0 = cn_energy(d, s);
        for (int n = 0; n < 40; ++n) cn.step(s, data);
        CHECK(cn_energy(d, s) == doctest::Approx(e0).epsilon(1e-9));
    }
    SUBCASE("leapfrog") {
        const double tau = 0.9 * leapfrog_stable_step(d.op);
        State s = initial_state(d, data, tau);
        Leapfrog lf(d, tau);
        const double e0 = leapfrog_energy(d, s);
        for (int n = 0; n < 200; ++n) lf.step(s, data);
        CHECK(leapfrog_energy(d, s) == doctest::Approx(e0).epsilon(1e-10));
    }
}

TEST_CASE("power iteration bounds the largest eigenvalue of M^-1 A") {
    const Mesh m = wave_mesh(4);
    const BrokenSpace space(m, 1);
    const Discretization d = make_global_discretization(space, default_penalty(1));
    const Vec s = as_vec(d.op.mass).cwiseSqrt().cwiseInverse();
    const Mat sym = s.asDiagonal() * dense(d.op.matrix) * s.asDiagonal();
    const double exact = Eigen::SelfAdjointEigenSolver<Mat>(sym).eigenvalues().maxCoeff();
    const double est = estimate_max_eigenvalue(d.op, 20);
    CHECK(est <= exact * (1.0 + 1e-12));
    CHECK(est >= 0.8 * exact);
    CHECK(leapfrog_stable_step(d.op) == doctest::Approx(0.95 * 2.0 / std::sqrt(est)));
}

TEST_CASE("stability guards") {
    const Mesh m = wave_mesh(4);
    const BrokenSpace space(m, 1);
    const Discretization d = make_global_discretization(space, default_penalty(1));
    const double limit = leapfrog_stable_step(d.op);
    CHECK_THROWS_AS(Leapfrog(d, 1.5 * limit), InstabilityError);
    // Without the CFL check the blow-up is caught by the norm guard.
    const double tau = 2.0 / std::sqrt(estimate_max_eigenvalue(d.op, 200)) * 1.3;
    const ProblemData data = free_data();
    State s = initial_state(d, data, tau);
    Leapfrog lf(d, tau, false);
    lf.set_reference_norm(std::sqrt(dot(s.u, s.u)));
    CHECK_THROWS_AS(
        [&] {
            for (int n = 0; n < 5000; ++n) lf.step(s, data);
        }(),
        InstabilityError);
    CHECK_THROWS_AS(CrankNicolson(d, 0.0), ConfigError);
    CHECK_THROWS_AS(Leapfrog(d, -1.0), ConfigError);
}

TEST_CASE("time grid") {
    CHECK(time_grid(0.25, 1.0) == std::pair<std::size_t, double>{4, 0.25});
    const auto [n, t] = time_grid(0.3, 1.0);
    CHECK(n == 4);
    CHECK(t == 0.25);
    CHECK(time_grid(0.1, 1.0).first == 10);
    CHECK(time_grid(0.002, 1.0).first == 500);
    CHECK(time_grid(0.1, 0.0).first == 0);
    CHECK_THROWS_AS(time_grid(0.0, 1.0), ConfigError);
    CHECK_THROWS_AS(time_grid(0.1, -1.0), ConfigError);
}

TEST_CASE("run reports adjusted steps and snapshots") {
    const Mesh m = wave_mesh(2);
    const BrokenSpace space(m, 1);
    const Discretization d = make_global_discretization(space, default_penalty(1));
    RunOptions options;
    options.snapshot_every = 2;
    const RunResult r = run(Method::CrankNicolson, d, free_data(), 0.3, 1.0, options);
    CHECK(r.steps == 4);
    CHECK(r.tau == 0.25);
    CHECK(r.warnings.size() == 1);
    CHECK(r.snapshots.size() == 3);
    CHECK(r.final.step == 4);
    CHECK(r.final.time() == doctest::Approx(1.0));
}

TEST_CASE("Crank-Nicolson is second order in time") {
    // Fixed space; reference from a much smaller step. The steps must resolve
    // the stiff end of the spectrum before the asymptotic rate shows.
    const Mesh m = wave_mesh(3);
    const BrokenSpace space(m, 1);
    const Discretization d = make_global_discretization(space, default_penalty(1));
    const ProblemData data = forced_data();
    RunOptions options;
    options.solver = {1e-14, 5000};
    const double T = 0.5;
    const State ref = run(Method::CrankNicolson, d, data, T / 8192, T, options).final;
    std::vector<double> errs;
    for (double tau : {T / 128, T / 256, T / 512}) {
        const State s = run(Method::CrankNicolson, d, data, tau, T, options).final;
        std::vector<double> e(s.u.size());
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = s.u[i] - ref.u[i];
        errs.push_back(a_norm(d.op, e));
    }
    CHECK(std::log2(errs[0] / errs[1]) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(std::log2(errs[1] / errs[2]) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("preconditioner names") {
    CHECK(parse_preconditioner("ic0") == PreconditionerKind::IncompleteCholesky);
    CHECK(parse_preconditioner("none") == PreconditionerKind::None);
    CHECK(parse_preconditioner("block_jacobi") == PreconditionerKind::BlockJacobi);
    CHECK_THROWS_AS(parse_preconditioner("amg"), ConfigError);
}
