#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dsdg/errors.hpp"
#include "dsdg/linalg.hpp"
#include "dsdg/swip.hpp"

using namespace dsdg;

namespace {

// SPD test matrix: 2D five-point Laplacian plus a small diagonal shift.
SparseSymMatrix laplacian(std::size_t n, double shift = 0.1) {
    std::vector<Triplet> t;
    auto id = [n](std::size_t i, std::size_t j) { return i * n + j; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            t.push_back({id(i, j), id(i, j), 4.0 + shift});
            if (i + 1 < n) {
                t.push_back({id(i, j), id(i + 1, j), -1.0});
                t.push_back({id(i + 1, j), id(i, j), -1.0});
            }
            if (j + 1 < n) {
                t.push_back({id(i, j), id(i, j + 1), -1.0});
                t.push_back({id(i, j + 1), id(i, j), -1.0});
            }
        }
    }
    return SparseSymMatrix::from_triplets(n * n, t);
}

Eigen::MatrixXd dense(const SparseSymMatrix& s) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<long>(s.size()), static_cast<long>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) d(static_cast<long>(i), static_cast<long>(j)) = s.at(i, j);
    return d;
}

std::vector<double> random_vector(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (double& x : v) x = nd(rng);
    return v;
}

}  // namespace

TEST_CASE("CSR construction and products") {
    const SparseSymMatrix a = SparseSymMatrix::from_triplets(3, {{0, 0, 2.0}, {0, 2, 1.0}, {2, 0, 1.0}, {0, 0, 1.0}, {1, 1, 5.0}, {2, 2, 4.0}});
    CHECK(a.nnz() == 5);
    CHECK(a.at(0, 0) == 3.0);
    CHECK(a.at(0, 1) == 0.0);
    CHECK(a.is_symmetric());
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto y = a * std::span<const double>(x);
    CHECK(y == std::vector<double>{6.0, 10.0, 13.0});
    CHECK(a.max_abs() == 5.0);
    const std::vector<double> d{1.0, 1.0, 1.0};
    const auto s = a.scaled_plus_diagonal(2.0, d);
    CHECK(s.at(0, 0) == 7.0);
    CHECK(s.at(0, 2) == 2.0);
    CHECK(SparseSymMatrix::from_triplets(2, {{0, 1, 1.0}, {1, 1, 1.0}, {0, 0, 1.0}}).is_symmetric() == false);
}

TEST_CASE("matrix market output") {
    const auto path = std::filesystem::temp_directory_path() / "dsdg_linalg.mtx";
    write_matrix_market(laplacian(2), path.string());
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("%%MatrixMarket", 0) == 0);
    std::filesystem::remove(path);
}

TEST_CASE("CG agrees with a dense solve for every preconditioner") {
    const SparseSymMatrix a = laplacian(9);
    const auto b = random_vector(a.size(), 1);
    const Eigen::VectorXd oracle = dense(a).llt().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<long>(b.size())));

    IdentityPreconditioner none;
    const IncompleteCholesky ic(a);
    const BlockJacobi bj(a, 9);
    for (const Preconditioner* p : std::initializer_list<const Preconditioner*>{&none, &ic, &bj}) {
        CAPTURE(p->name());
        std::vector<double> x(a.size(), 0.0);
        const SolverReport r = cg_solve(a, b, x, {1e-12, 1000}, *p);
        CHECK(r.converged);
        double err = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - oracle(static_cast<long>(i))));
        CHECK(err < 1e-9);
    }
    std::vector<double> x(a.size(), 0.0), y(a.size(), 0.0);
    const auto plain = cg_solve(a, b, x, {1e-10, 1000}, none);
    const auto pre = cg_solve(a, b, y, {1e-10, 1000}, ic);
    CHECK(pre.iterations < plain.iterations);
}

TEST_CASE("CG error decreases monotonically in the A-norm") {
    // CG minimizes ‖x − x*‖_A over growing Krylov spaces, so the A-norm error
    // is non-increasing; the residual itself is not.
    const SparseSymMatrix a = laplacian(7, 0.3);
    const auto b = random_vector(a.size(), 3);
    const Eigen::MatrixXd ad = dense(a);
    const Eigen::VectorXd xs = ad.llt().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<long>(b.size())));
    IdentityPreconditioner none;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= 25; ++it) {
        std::vector<double> x(a.size(), 0.0);
        cg_solve(a, b, x, {1e-300, it}, none);
        const Eigen::VectorXd e = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<long>(x.size())) - xs;
        const double err = std::sqrt(e.dot(ad * e));
        CHECK(err <= prev * (1.0 + 1e-12));
        prev = err;
    }
}

TEST_CASE("warm start and iteration limit") {
    const SparseSymMatrix a = laplacian(6);
    const auto b = random_vector(a.size(), 4);
    IdentityPreconditioner none;
    std::vector<double> x(a.size(), 0.0);
    cg_solve(a, b, x, {1e-12, 1000}, none);
    const auto again = cg_solve(a, b, x, {1e-10, 1000}, none);
    CHECK(again.iterations == 0);
    CHECK(again.converged);
    std::vector<double> z(a.size(), 0.0);
    const auto capped = cg_solve(a, b, z, {1e-14, 2}, none);
    CHECK_FALSE(capped.converged);
    CHECK(capped.iterations == 2);
    CHECK(capped.preconditioned_residuals.size() == 3);
}

TEST_CASE("indefinite matrix is detected") {
    const SparseSymMatrix a = SparseSymMatrix::from_triplets(2, {{0, 0, 1.0}, {1, 1, -1.0}});
    const std::vector<double> b{1.0, 1.0};
    std::vector<double> x(2, 0.0);
    IdentityPreconditioner none;
    CHECK_THROWS_AS(cg_solve(a, b, x, {}, none), IndefiniteMatrixError);
}

TEST_CASE("IC(0) is exact on tridiagonal matrices") {
    // No fill-in occurs for a tridiagonal matrix, so IC(0) equals the Cholesky factor.
    std::vector<Triplet> t;
    const std::size_t n = 12;
    for (std::size_t i = 0; i < n; ++i) {
        t.push_back({i, i, 3.0 + 0.1 * static_cast<double>(i)});
        if (i + 1 < n) {
            t.push_back({i, i + 1, -1.0});
            t.push_back({i + 1, i, -1.0});
        }
    }
    const SparseSymMatrix a = SparseSymMatrix::from_triplets(n, t);
    const IncompleteCholesky ic(a);
    CHECK(ic.shift() == 0.0);
    const auto r = random_vector(n, 8);
    std::vector<double> z(n);
    ic.apply(r, z);
    const auto az = a * std::span<const double>(z);
    for (std::size_t i = 0; i < n; ++i) CHECK(az[i] == doctest::Approx(r[i]).epsilon(1e-12));
}

TEST_CASE("IC(0) shifts on a non-positive pivot") {
    const SparseSymMatrix a = SparseSymMatrix::from_triplets(2, {{0, 0, 1.0}, {0, 1, 1.05}, {1, 0, 1.05}, {1, 1, 1.0}});
    const IncompleteCholesky ic(a);
    CHECK(ic.shift() > 0.0);
}

TEST_CASE("block Jacobi inverts block-diagonal matrices") {
    std::vector<Triplet> t;
    for (std::size_t b = 0; b < 3; ++b) {
        const std::size_t o = 3 * b;
        for (std::size_t i = 0; i < 3; ++i) {
            t.push_back({o + i, o + i, 4.0 + static_cast<double>(b)});
            for (std::size_t j = 0; j < 3; ++j)
                if (i != j) t.push_back({o + i, o + j, 0.5});
        }
    }
    const SparseSymMatrix a = SparseSymMatrix::from_triplets(9, t);
    const BlockJacobi bj(a, 3);
    const auto r = random_vector(9, 12);
    std::vector<double> z(9);
    bj.apply(r, z);
    const auto az = a * std::span<const double>(z);
    for (std::size_t i = 0; i < 9; ++i) CHECK(az[i] == doctest::Approx(r[i]).epsilon(1e-12));
}

TEST_CASE("CG is bitwise reproducible") {
    const SparseSymMatrix a = laplacian(8);
    const auto b = random_vector(a.size(), 6);
    const IncompleteCholesky ic(a);
    std::vector<double> x1(a.size(), 0.0), x2(a.size(), 0.0);
    cg_solve(a, b, x1, {}, ic);
    cg_solve(a, b, x2, {}, ic);
    CHECK(x1 == x2);
}
