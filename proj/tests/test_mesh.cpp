#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dsdg/errors.hpp"
#include "dsdg/layout.hpp"
#include "dsdg/mesh.hpp"
#include "dsdg/msh_io.hpp"

using namespace dsdg;

namespace {

const Rectangle unit{0, 0, 1, 1};

bool share_vertex(const Mesh& m, std::size_t a, std::size_t b) {
    for (std::size_t va : m.cell(a))
        for (std::size_t vb : m.cell(b))
            if (va == vb) return true;
    return false;
}

// Closure-intersection extension by brute force over all cell pairs.
CellSet brute_extend(const Mesh& m, CellSet base, std::size_t layers) {
    for (std::size_t l = 0; l < layers; ++l) {
        std::vector<std::size_t> next(base.begin(), base.end());
        for (std::size_t c = 0; c < m.num_cells(); ++c)
            for (std::size_t b : base)
                if (share_vertex(m, c, b)) next.push_back(c);
        base = CellSet(next);
    }
    return base;
}

}  // namespace

TEST_CASE("structured mesh counts") {
    const Mesh one = build_structured_mesh(1, 1, unit);
    CHECK(one.num_cells() == 2);
    CHECK(one.num_faces() == 5);
    CHECK(one.num_interior_faces() == 1);

    const Mesh two = build_structured_mesh(2, 1, Rectangle{0, 0, 2, 1});
    CHECK(two.num_cells() == 4);
    CHECK(two.num_faces() == 9);
    CHECK(two.num_interior_faces() == 3);

    for (auto [nx, ny] : {std::pair<std::size_t, std::size_t>{3, 5}, {7, 2}, {4, 4}}) {
        const Mesh m = build_structured_mesh(nx, ny, unit);
        CHECK(m.num_cells() == 2 * nx * ny);
        const long euler = static_cast<long>(m.num_vertices()) - static_cast<long>(m.num_faces()) +
                           static_cast<long>(m.num_cells());
        CHECK(euler == 1);
        double area = 0.0;
        for (std::size_t c = 0; c < m.num_cells(); ++c) area += m.cell_area(c);
        CHECK(area == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(build_structured_mesh(0, 2, unit), DomainError);
    CHECK_THROWS_AS(build_structured_mesh(2, 2, Rectangle{0, 0, 0, 1}), DomainError);
}

TEST_CASE("face topology is consistent") {
    const Mesh m = build_structured_mesh(3, 4, unit);
    for (std::size_t f = 0; f < m.num_faces(); ++f) {
        const Face& face = m.face(f);
        const std::size_t c0 = face.cells[0];
        REQUIRE(c0 != npos);
        const Point n = m.outward_normal(f, c0);
        CHECK(std::hypot(n.x, n.y) == doctest::Approx(1.0));
        // the normal points away from the cell's centroid
        const Point mid = m.face_midpoint(f);
        const Point d = mid - m.centroid(c0);
        CHECK(n.x * d.x + n.y * d.y > 0.0);
        if (!face.is_boundary()) {
            CHECK(face.cells[0] < face.cells[1]);
            CHECK(m.neighbor(c0, f) == face.cells[1]);
        }
    }
}

TEST_CASE("boundary classification") {
    Mesh m = classify_boundary(build_structured_mesh(4, 4, unit), [](Point p) { return p.x < 1e-12; });
    std::size_t d = 0, n = 0;
    for (const Face& f : m.faces()) {
        if (!f.is_boundary()) {
            CHECK(f.label == BoundaryLabel::None);
            continue;
        }
        if (f.label == BoundaryLabel::Dirichlet) ++d;
        if (f.label == BoundaryLabel::Neumann) ++n;
    }
    CHECK(d == 4);
    CHECK(n == 12);
    m = classify_boundary(std::move(m), [](Point) { return false; });
    CHECK(labeled_faces(m, CellSet::all(m.num_cells()), BoundaryLabel::Dirichlet).empty());
    m = classify_boundary(std::move(m), [](Point) { return true; });
    CHECK(labeled_faces(m, CellSet::all(m.num_cells()), BoundaryLabel::Dirichlet).size() == 16);
}

TEST_CASE("extend_cells matches closure intersection") {
    const Mesh m = build_structured_mesh(4, 4, unit);
    const CellSet base({12});
    CHECK(extend_cells(m, base, 0) == base);
    for (std::size_t l = 1; l <= 3; ++l) CHECK(extend_cells(m, base, l) == brute_extend(m, base, l));
    const CellSet b2({0, 31});
    CHECK(extend_cells(m, extend_cells(m, b2, 1), 2) == extend_cells(m, b2, 3));
    const CellSet all = extend_cells(m, base, 20);
    CHECK(all.size() == m.num_cells());
    CHECK(extend_cells(m, all, 1) == all);
}

TEST_CASE("interface_cells by vertex incidence") {
    const Mesh m = build_structured_mesh(4, 4, unit);
    CHECK(interface_cells(m, {}).empty());
    std::size_t f = 0;
    while (m.face(f).is_boundary()) ++f;
    const std::vector<std::size_t> faces{f};
    std::vector<std::size_t> expected;
    for (std::size_t c = 0; c < m.num_cells(); ++c)
        for (std::size_t v : m.cell(c))
            if (v == m.face(f).vertices[0] || v == m.face(f).vertices[1]) expected.push_back(c);
    const CellSet got = interface_cells(m, faces);
    CHECK(got == CellSet(expected));
    CHECK(got.contains(m.face(f).cells[0]));
    CHECK(got.contains(m.face(f).cells[1]));
}

TEST_CASE("uniform refinement") {
    Mesh m = build_structured_mesh(2, 3, unit);
    std::vector<double> kappa(m.num_cells());
    for (std::size_t c = 0; c < kappa.size(); ++c) kappa[c] = 1.0 + 0.1 * static_cast<double>(c);
    m.set_kappa(kappa);
    m = classify_boundary(std::move(m), [](Point p) { return p.y < 1e-12; });
    const Mesh r = refine_uniform(m);
    REQUIRE(r.num_cells() == 4 * m.num_cells());
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        double area = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            area += r.cell_area(4 * c + k);
            CHECK(r.kappa(4 * c + k) == m.kappa(c));
        }
        CHECK(area == doctest::Approx(m.cell_area(c)).epsilon(1e-13));
    }
    std::size_t dm = labeled_faces(m, CellSet::all(m.num_cells()), BoundaryLabel::Dirichlet).size();
    std::size_t dr = labeled_faces(r, CellSet::all(r.num_cells()), BoundaryLabel::Dirichlet).size();
    CHECK(dr == 2 * dm);
    CHECK(r.max_diameter() == doctest::Approx(0.5 * m.max_diameter()));
}

TEST_CASE("banded tensor mesh") {
    const auto xs = banded_coordinates(0.0, 8.0, 8, 3.0, 5.0, 2);
    // intervals with midpoints 3.5 and 4.5 are halved
    CHECK(xs.size() == 11);
    CHECK(xs.front() == 0.0);
    CHECK(xs.back() == 8.0);
    CHECK(xs[4] == doctest::Approx(3.5));
    const auto ys = uniform_coordinates(0.0, 4.0, 4);
    const Mesh m = build_tensor_mesh(xs, ys);
    CHECK(m.num_cells() == 2 * 10 * 4);
    const long euler = static_cast<long>(m.num_vertices()) - static_cast<long>(m.num_faces()) +
                       static_cast<long>(m.num_cells());
    CHECK(euler == 1);
}

TEST_CASE("msh round trip and errors") {
    Mesh m = build_structured_mesh(3, 2, Rectangle{0, 0, 3, 2});
    std::vector<int> regions(m.num_cells());
    for (std::size_t c = 0; c < regions.size(); ++c) regions[c] = m.centroid(c).x < 1.5 ? 1 : 2;
    m.set_regions(regions);
    m = classify_boundary(std::move(m), [](Point p) { return p.x < 1e-12; });
    const std::string text = write_msh_string(m);

    MshImportOptions opts;
    opts.kappa_by_tag = {{1, 1.0}, {2, 1.5}};
    opts.dirichlet_tags = {1};
    const Mesh r = read_msh_string(text, opts);
    REQUIRE(r.num_cells() == m.num_cells());
    REQUIRE(r.num_vertices() == m.num_vertices());
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        CHECK(r.region(c) == m.region(c));
        CHECK(r.kappa(c) == (m.region(c) == 1 ? 1.0 : 1.5));
        std::set<std::size_t> a(m.cell(c).begin(), m.cell(c).end()), b(r.cell(c).begin(), r.cell(c).end());
        CHECK(a == b);
    }
    CHECK(labeled_faces(r, CellSet::all(r.num_cells()), BoundaryLabel::Dirichlet) ==
          labeled_faces(m, CellSet::all(m.num_cells()), BoundaryLabel::Dirichlet));

    const std::string two =
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n"
        "$Elements\n2\n1 2 2 7 1 1 2 3\n2 2 2 7 1 1 3 4\n$EndElements\n";
    const Mesh small = read_msh_string(two);
    CHECK(small.num_cells() == 2);
    CHECK(small.kappa(0) == small.kappa(1));

    std::string bad = two;
    bad.replace(bad.find("1 2 2 7 1 1 2 3"), 15, "1 3 2 7 1 1 2 3 4");
    CHECK_THROWS_AS(read_msh_string(bad), UnsupportedElementError);
    std::string broken = two;
    broken.replace(broken.find("2 1 0 0"), 7, "2 x 0 0");
    try {
        read_msh_string(broken);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
    }
}

TEST_CASE("partitioning") {
    const Mesh m = build_structured_mesh(2, 2, unit);
    const OwnerMap one = partition_cells(m, 1, 7);
    CHECK(std::all_of(one.begin(), one.end(), [](std::size_t o) { return o == 0; }));
    const OwnerMap single = partition_cells(m, m.num_cells(), 7);
    CHECK(std::set<std::size_t>(single.begin(), single.end()).size() == m.num_cells());
    const OwnerMap two = partition_cells(m, 2, 7);
    CHECK(std::count(two.begin(), two.end(), 0) == 4);
    CHECK(std::count(two.begin(), two.end(), 1) == 4);
    CHECK_THROWS_AS(partition_cells(m, 0, 1), ConfigError);
    CHECK_THROWS_AS(partition_cells(m, 9, 1), ConfigError);

    const Mesh big = build_structured_mesh(16, 12, unit);
    for (std::size_t count : {3u, 4u, 6u}) {
        const OwnerMap a = partition_cells(big, count, 42);
        CHECK(a == partition_cells(big, count, 42));
        std::vector<std::size_t> size(count, 0);
        for (std::size_t o : a) ++size[o];
        const double mean = static_cast<double>(big.num_cells()) / static_cast<double>(count);
        for (std::size_t s : size) CHECK(static_cast<double>(s) <= 1.2 * mean);
    }
}

TEST_CASE("subdomain layout invariants") {
    const Mesh m = classify_boundary(build_structured_mesh(12, 12, unit), [](Point) { return true; });
    SUBCASE("single subdomain") {
        const SubdomainLayout l = build_layout(m, OwnerMap(m.num_cells(), 0), 2);
        CHECK(l.count() == 1);
        CHECK(l.subdomains[0].overlapped.size() == m.num_cells());
        CHECK(l.subdomains[0].interface_faces.empty());
        CHECK(l.subdomains[0].prediction.empty());
        CHECK(validate_layout(m, l).empty());
    }
    SUBCASE("two halves") {
        OwnerMap owner(m.num_cells());
        for (std::size_t c = 0; c < m.num_cells(); ++c) owner[c] = m.centroid(c).x < 0.5 ? 0 : 1;
        const SubdomainLayout l = build_layout(m, owner, 1);
        CHECK(validate_layout(m, l).empty());
        const CellSet s = l.overlap(0, 1);
        CHECK(!s.empty());
        CHECK(s == l.overlap(1, 0));
        CHECK(s == set_intersection(l.subdomains[0].overlapped, l.subdomains[1].overlapped));
        for (const Subdomain& sd : l.subdomains) {
            // the prediction strip straddles the interface
            CHECK(!set_difference(sd.prediction, sd.overlapped).empty());
            for (std::size_t f : sd.interface_faces) {
                CHECK(sd.prediction.contains(m.face(f).cells[0]));
                CHECK(sd.prediction.contains(m.face(f).cells[1]));
            }
        }
    }
    SUBCASE("overlap width scales with layers") {
        OwnerMap owner(m.num_cells());
        for (std::size_t c = 0; c < m.num_cells(); ++c) {
            const Point x = m.centroid(c);
            owner[c] = (x.x < 0.5 ? 0 : 1) + (x.y < 0.5 ? 0 : 2);
        }
        const double h = 1.0 / 12.0;
        for (std::size_t layers : {1u, 2u, 3u}) {
            const SubdomainLayout l = build_layout(m, owner, layers);
            CHECK(validate_layout(m, l).empty());
            const double ratio = l.overlap_width / (static_cast<double>(layers) * h);
            CHECK(ratio >= 0.5);
            CHECK(ratio <= 2.0);
        }
    }
    SUBCASE("swallowing extension warns") {
        OwnerMap owner(m.num_cells(), 0);
        owner[0] = 1;
        const SubdomainLayout l = build_layout(m, owner, 30);
        CHECK(!l.warnings.empty());
    }
}
