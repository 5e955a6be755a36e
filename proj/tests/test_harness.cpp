#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dsdg/errors.hpp"
#include "dsdg/harness.hpp"

using namespace dsdg;

namespace {

RunConfig small_wave(const std::string& method) {
    RunConfig c;
    c.nx = c.ny = 6;
    c.degree = 1;
    c.method = method;
    c.tau = 0.02;
    c.T = 0.2;
    c.u0 = "standing_wave";
    c.exact = "standing_wave";
    c.reference = "exact";
    c.tol = 1e-12;
    return c;
}

}  // namespace

TEST_CASE("config text: sections, comments and errors") {
    const RunConfig c = parse_config(
        "# test\n[time]\nmethod = ds\ntau = 0.005   # step\n\n[split]\nsubdomains = 4\nlayers=3\n[mesh]\nkappa = "
        "triangle_region(3,1,5,1,4,3,1.0,1.5)\n");
    CHECK(c.method == "ds");
    CHECK(c.tau == 0.005);
    CHECK(c.subdomains == 4);
    CHECK(c.layers == 3);
    CHECK(c.kappa == "triangle_region(3,1,5,1,4,3,1.0,1.5)");

    try {
        parse_config("[time]\ntau = 0.1\nthis line is wrong\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    try {
        parse_config("[time]\ntau = abc\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("time.tau") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[time\n"), ParseError);

    RunConfig r;
    r.set("tau", "0.25");
    r.set("split.workers", "3");
    CHECK(r.tau == 0.25);
    CHECK(r.workers == 3);
    CHECK_THROWS_AS(r.set("bogus", "1"), ConfigError);
    CHECK_THROWS_AS(r.set("nx", "-2"), ConfigError);
    CHECK_THROWS_AS(r.set("debug_checks", "maybe"), ConfigError);
}

TEST_CASE("config round trip and validation") {
    RunConfig c = small_wave("ds");
    c.band = "1,1,2,2";
    c.seed = 99;
    const RunConfig back = parse_config(format_config(c));
    CHECK(back.entries() == c.entries());

    auto rejects = [](auto mutate, const std::string& field) {
        RunConfig bad;
        mutate(bad);
        try {
            bad.validate();
            FAIL("expected ConfigError for " << field);
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(field) != std::string::npos);
        }
    };
    rejects([](RunConfig& r) { r.tau = 0.0; }, "time.tau");
    rejects([](RunConfig& r) { r.method = "rk4"; }, "time.method");
    rejects([](RunConfig& r) { r.subdomains = 0; }, "split.subdomains");
    rejects([](RunConfig& r) { r.reference = "exact"; }, "reference.kind");
    rejects([](RunConfig& r) { r.u0 = "nonsense(1)"; }, "problem.u0");
    rejects([](RunConfig& r) { r.kappa = "constant(1,2)"; }, "mesh.kappa");
}

TEST_CASE("window profile") {
    CHECK(window_profile(0.0) == 0.0);
    CHECK(window_profile(0.5) == 0.0);
    CHECK(window_profile(0.75) == doctest::Approx(0.5));
    CHECK(window_profile(1.0) == 1.0);
    CHECK(window_profile(2.0) == 1.0);
    CHECK(window_profile(3.25) == doctest::Approx(0.5));
    CHECK(window_profile(3.5) == 0.0);
    CHECK(window_profile(4.0) == 0.0);
    // C² joins: first and second differences vanish at the ends of the ramps
    const double h = 1e-4;
    for (double y : {0.5, 1.0, 3.0, 3.5}) {
        CHECK(std::abs(window_profile(y + h) - window_profile(y - h)) / (2 * h) < 1e-6);
        CHECK(std::abs(window_profile(y + h) - 2 * window_profile(y) + window_profile(y - h)) / (h * h) < 1e-2);
    }
    for (double y = 0.0; y < 4.0; y += 0.01) {
        CHECK(window_profile(y) >= 0.0);
        CHECK(window_profile(y) <= 1.0);
    }
}

TEST_CASE("data forms") {
    using std::numbers::pi;
    CHECK(!parse_data("zero"));
    CHECK(parse_data("constant(2.5)")(Point{0.3, 0.1}, 7.0) == 2.5);
    const Point x{0.3, 0.6};
    CHECK(parse_data("standing_wave", 0)(x, 0.0) == doctest::Approx(std::sin(pi * 0.3) * std::sin(pi * 0.6)));
    // v is the time derivative of u
    const double t = 0.37, h = 1e-6;
    const auto u = parse_data("standing_wave", 0);
    CHECK(parse_data("standing_wave", 1)(x, t) == doctest::Approx((u(x, t + h) - u(x, t - h)) / (2 * h)).epsilon(1e-6));
    const auto g = parse_data("window_sine(0.0125)");
    CHECK(g(Point{0.0, 2.0}, 0.01) == doctest::Approx(std::sin(0.8)));
    CHECK(g(Point{0.0, 0.2}, 0.01) == 0.0);
    CHECK(parse_data("gaussian(0.5,0.5,0.1)")(Point{0.5, 0.5}, 0.0) == 1.0);
    CHECK_THROWS_AS(parse_data("window_sine(0)"), ConfigError);
    CHECK_THROWS_AS(parse_data("constant(1"), ConfigError);
    CHECK_THROWS_AS(parse_data("planewave(1)"), ConfigError);
}

TEST_CASE("mesh specs") {
    RunConfig c;
    c.extent = {0, 0, 8, 4};
    c.nx = 16;
    c.ny = 8;
    c.kappa = "triangle_region(3,1,5,1,4,3,1.0,1.5)";
    c.dirichlet = "x_eq(0)";
    const Mesh m = build_mesh(c);
    std::size_t inside = 0;
    for (std::size_t cell = 0; cell < m.num_cells(); ++cell) {
        const Point p = m.centroid(cell);
        // inside test by half-planes of the triangle (3,1), (5,1), (4,3)
        const bool in = p.y > 1.0 && p.y < 1.0 + 2.0 * (p.x - 3.0) && p.y < 1.0 + 2.0 * (5.0 - p.x);
        CHECK(m.kappa(cell) == (in ? 1.0 : 1.5));
        inside += in;
    }
    CHECK(inside > 0);
    for (const Face& f : m.faces()) {
        if (!f.is_boundary()) continue;
        const bool left = m.vertices()[f.vertices[0]].x == 0.0 && m.vertices()[f.vertices[1]].x == 0.0;
        CHECK((f.label == BoundaryLabel::Dirichlet) == left);
    }

    c.refine = 1;
    CHECK(build_mesh(c).num_cells() == 4 * m.num_cells());
    c.refine = 0;
    c.band = "2,0.5,6,3.5";
    c.band_factor = 2;
    const Mesh banded = build_mesh(c);
    CHECK(banded.num_cells() > m.num_cells());
    CHECK(banded.min_diameter() < m.min_diameter());
}

TEST_CASE("exit codes") {
    CHECK(exit_code(ConfigError("x")) == 2);
    CHECK(exit_code(ParseError("x", 3)) == 2);
    CHECK(exit_code(SolverError("x")) == 3);
    CHECK(exit_code(InstabilityError("x")) == 4);
    CHECK(exit_code(std::runtime_error("x")) == 1);
}

TEST_CASE("runs: one-subdomain splitting equals CN, and runs are reproducible") {
    const ErrorReport cn = run_experiment(small_wave("cn"));
    RunConfig ds_config = small_wave("ds");
    ds_config.subdomains = 1;
    const ErrorReport ds = run_experiment(ds_config);
    CHECK(cn.rel_l2_u == doctest::Approx(ds.rel_l2_u).epsilon(1e-9));
    CHECK(cn.steps == 10);
    CHECK(cn.rel_l2_u < 0.1);

    RunConfig four = small_wave("ds");
    four.subdomains = 4;
    four.layers = 2;
    const ErrorReport a = run_experiment(four);
    const ErrorReport b = run_experiment(four);
    CHECK(a.rel_l2_u == b.rel_l2_u);
    CHECK(a.rel_combined == b.rel_combined);
    CHECK(a.subdomains == 4);
}

TEST_CASE("artifacts") {
    const auto dir = std::filesystem::temp_directory_path() / "dsdg_harness_test";
    std::filesystem::create_directories(dir);
    RunConfig c = small_wave("ds");
    c.subdomains = 2;
    c.csv = (dir / "runs.csv").string();
    c.energy = (dir / "energy.csv").string();
    c.diagnostics = (dir / "diag.csv").string();
    c.vtk = (dir / "snap").string();
    c.snapshot_every = 5;
    run_experiment(c);
    auto lines = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        std::size_t n = 0;
        for (std::string s; std::getline(in, s);) ++n;
        return n;
    };
    CHECK(lines(dir / "runs.csv") == 2);
    CHECK(lines(dir / "energy.csv") == 12);
    CHECK(lines(dir / "diag.csv") == 11);
    CHECK(std::filesystem::exists(dir / "snap_000000.vtk"));
    CHECK(std::filesystem::exists(dir / "snap_000010.vtk"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("convergence drivers") {
    // the mesh must resolve the projected data well enough that unresolved
    // stiff modes do not mask the temporal error
    RunConfig c = small_wave("cn");
    c.nx = c.ny = 8;
    c.degree = 3;
    c.reference = "fine_tau";
    c.reference_factor = 16;
    c.tau = 1.0 / 40;
    c.T = 0.5;
    const auto rows = converge_time(c, 3);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].order_u == doctest::Approx(2.0).epsilon(0.15));
    CHECK(rows[2].order_u == doctest::Approx(2.0).epsilon(0.15));
    std::ostringstream out;
    write_convergence_table(out, rows);
    CHECK(out.str().find("order") != std::string::npos);

    RunConfig s = small_wave("cn");
    s.nx = s.ny = 4;
    s.tau = 0.002;
    s.T = 1.0;
    const auto srows = converge_space(s, 3);
    REQUIRE(srows.size() == 3);
    CHECK(srows[2].order_u > 1.7);
}
