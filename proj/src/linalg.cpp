#include "dsdg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "dsdg/errors.hpp"

namespace dsdg {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

SparseSymMatrix::SparseSymMatrix(std::size_t n, std::vector<std::size_t> row_ptr, std::vector<std::size_t> cols,
                                 std::vector<double> vals)
    : n_(n), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)), vals_(std::move(vals)) {
    if (row_ptr_.size() != n_ + 1 || cols_.size() != vals_.size() || row_ptr_.back() != cols_.size()) {
        throw DomainError("inconsistent CSR arrays");
    }
}

SparseSymMatrix SparseSymMatrix::from_triplets(std::size_t n, std::vector<Triplet> triplets) {
    std::sort(triplets.begin(), triplets.end(),
              [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
    std::vector<std::size_t> row_ptr(n + 1, 0), cols;
    std::vector<double> vals;
    for (std::size_t k = 0; k < triplets.size();) {
        const Triplet& t = triplets[k];
        if (t.row >= n || t.col >= n) throw DomainError("triplet index out of range");
        double v = 0.0;
        std::size_t e = k;
        while (e < triplets.size() && triplets[e].row == t.row && triplets[e].col == t.col) v += triplets[e++].value;
        cols.push_back(t.col);
        vals.push_back(v);
        ++row_ptr[t.row + 1];
        k = e;
    }
    for (std::size_t i = 0; i < n; ++i) row_ptr[i + 1] += row_ptr[i];
    return SparseSymMatrix(n, std::move(row_ptr), std::move(cols), std::move(vals));
}

SparseSymMatrix SparseSymMatrix::identity(std::size_t n) {
    std::vector<std::size_t> row_ptr(n + 1), cols(n);
    for (std::size_t i = 0; i <= n; ++i) row_ptr[i] = i;
    for (std::size_t i = 0; i < n; ++i) cols[i] = i;
    return SparseSymMatrix(n, std::move(row_ptr), std::move(cols), std::vector<double>(n, 1.0));
}

void SparseSymMatrix::multiply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != n_ || y.size() != n_) throw DomainError("matrix-vector size mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
        double s = 0.0;
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += vals_[k] * x[cols_[k]];
        y[i] = s;
    }
}

std::vector<double> SparseSymMatrix::operator*(std::span<const double> x) const {
    std::vector<double> y(n_);
    multiply(x, y);
    return y;
}

double SparseSymMatrix::at(std::size_t i, std::size_t j) const {
    auto b = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    auto e = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    auto it = std::lower_bound(b, e, j);
    return it != e && *it == j ? vals_[static_cast<std::size_t>(it - cols_.begin())] : 0.0;
}

std::vector<double> SparseSymMatrix::diagonal() const {
    std::vector<double> d(n_);
    for (std::size_t i = 0; i < n_; ++i) d[i] = at(i, i);
    return d;
}

double SparseSymMatrix::max_abs() const {
    double m = 0.0;
    for (double v : vals_) m = std::max(m, std::abs(v));
    return m;
}

bool SparseSymMatrix::is_symmetric() const {
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
            if (at(cols_[k], i) != vals_[k]) return false;
    return true;
}

SparseSymMatrix SparseSymMatrix::scaled_plus_diagonal(double scale, std::span<const double> d) const {
    if (d.size() != n_) throw DomainError("diagonal length mismatch");
    std::vector<double> vals(vals_.size());
    for (std::size_t i = 0; i < n_; ++i) {
        bool found = false;
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            vals[k] = scale * vals_[k];
            if (cols_[k] == i) {
                vals[k] += d[i];
                found = true;
            }
        }
        if (!found) throw DomainError("missing diagonal entry in row " + std::to_string(i));
    }
    return SparseSymMatrix(n_, row_ptr_, cols_, std::move(vals));
}

void write_matrix_market(const SparseSymMatrix& a, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.size() << ' ' << a.size() << ' ' << a.nnz() << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k)
            out << i + 1 << ' ' << a.cols()[k] + 1 << ' ' << a.vals()[k] << '\n';
}

void IdentityPreconditioner::apply(std::span<const double> r, std::span<double> z) const {
    std::copy(r.begin(), r.end(), z.begin());
}

IncompleteCholesky::IncompleteCholesky(const SparseSymMatrix& a) : n_(a.size()) {
    row_ptr_.assign(n_ + 1, 0);
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) {
            if (a.cols()[k] <= i) {
                cols_.push_back(a.cols()[k]);
                ++row_ptr_[i + 1];
            }
        }
        if (cols_.empty() || row_ptr_[i + 1] == 0 || cols_.back() != i) {
            throw SolverError("incomplete Cholesky needs an explicit diagonal in row " + std::to_string(i));
        }
        row_ptr_[i + 1] += row_ptr_[i];
    }
    vals_.resize(cols_.size());
    if (factor(a, 0.0)) return;

    const auto d = a.diagonal();
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(n_, 1));
    double shift = 1e-3 * mean;
    for (int retry = 0; retry < 8; ++retry, shift *= 2.0) {
        if (factor(a, shift)) return;
    }
    throw SolverError("incomplete Cholesky failed: negative pivot after 8 diagonal shifts");
}

bool IncompleteCholesky::factor(const SparseSymMatrix& a, double shift) {
    shift_ = shift;
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
            const std::size_t k = cols_[p];
            double s = a.at(i, k) + (k == i ? shift : 0.0);
            // Σ_{j<k} L_ij L_kj over the common pattern
            std::size_t pi = row_ptr_[i], pk = row_ptr_[k];
            while (pi < p && pk < row_ptr_[k + 1] - 1) {
                if (cols_[pi] == cols_[pk]) {
                    s -= vals_[pi] * vals_[pk];
                    ++pi;
                    ++pk;
                } else if (cols_[pi] < cols_[pk]) {
                    ++pi;
                } else {
                    ++pk;
                }
            }
            if (k == i) {
                if (!(s > 0.0)) return false;
                vals_[p] = std::sqrt(s);
            } else {
                vals_[p] = s / vals_[row_ptr_[k + 1] - 1];
            }
        }
    }
    return true;
}

void IncompleteCholesky::apply(std::span<const double> r, std::span<double> z) const {
    std::vector<double> y(r.begin(), r.end());
    for (std::size_t i = 0; i < n_; ++i) {
        double s = y[i];
        const std::size_t diag = row_ptr_[i + 1] - 1;
        for (std::size_t p = row_ptr_[i]; p < diag; ++p) s -= vals_[p] * y[cols_[p]];
        y[i] = s / vals_[diag];
    }
    for (std::size_t i = n_; i-- > 0;) {
        const std::size_t diag = row_ptr_[i + 1] - 1;
        const double zi = y[i] / vals_[diag];
        z[i] = zi;
        for (std::size_t p = row_ptr_[i]; p < diag; ++p) y[cols_[p]] -= vals_[p] * zi;
    }
}

BlockJacobi::BlockJacobi(const SparseSymMatrix& a, std::vector<std::pair<std::size_t, std::size_t>> blocks)
    : blocks_(std::move(blocks)) {
    std::size_t expected = 0;
    for (const auto& [offset, size] : blocks_) {
        if (offset != expected) throw SolverError("blocks do not partition the index range");
        expected += size;
        factor_offsets_.push_back(factors_.size());
        std::vector<double> l(size * size, 0.0);
        for (std::size_t j = 0; j < size; ++j) {
            double d = a.at(offset + j, offset + j);
            for (std::size_t k = 0; k < j; ++k) d -= l[j * size + k] * l[j * size + k];
            if (!(d > 0.0)) throw SolverError("singular diagonal block at offset " + std::to_string(offset));
            l[j * size + j] = std::sqrt(d);
            for (std::size_t i = j + 1; i < size; ++i) {
                double s = a.at(offset + i, offset + j);
                for (std::size_t k = 0; k < j; ++k) s -= l[i * size + k] * l[j * size + k];
                l[i * size + j] = s / l[j * size + j];
            }
        }
        factors_.insert(factors_.end(), l.begin(), l.end());
    }
    if (expected != a.size()) throw SolverError("blocks do not partition the index range");
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> uniform_blocks(std::size_t n, std::size_t bs) {
    if (bs == 0 || n % bs != 0) throw SolverError("block size does not divide matrix size");
    std::vector<std::pair<std::size_t, std::size_t>> b;
    for (std::size_t o = 0; o < n; o += bs) b.emplace_back(o, bs);
    return b;
}

}  // namespace

BlockJacobi::BlockJacobi(const SparseSymMatrix& a, std::size_t block_size)
    : BlockJacobi(a, uniform_blocks(a.size(), block_size)) {}

void BlockJacobi::apply(std::span<const double> r, std::span<double> z) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto [offset, size] = blocks_[b];
        const double* l = factors_.data() + factor_offsets_[b];
        for (std::size_t i = 0; i < size; ++i) {
            double s = r[offset + i];
            for (std::size_t k = 0; k < i; ++k) s -= l[i * size + k] * z[offset + k];
            z[offset + i] = s / l[i * size + i];
        }
        for (std::size_t i = size; i-- > 0;) {
            double s = z[offset + i];
            for (std::size_t k = i + 1; k < size; ++k) s -= l[k * size + i] * z[offset + k];
            z[offset + i] = s / l[i * size + i];
        }
    }
}

std::unique_ptr<Preconditioner> ic0_precondition(const SparseSymMatrix& a) {
    return std::make_unique<IncompleteCholesky>(a);
}

std::unique_ptr<Preconditioner> block_jacobi_precondition(const SparseSymMatrix& a, std::size_t block_size) {
    return std::make_unique<BlockJacobi>(a, block_size);
}

SolverReport cg_solve(const SparseSymMatrix& a, std::span<const double> b, std::span<double> x,
                      const SolverOptions& options, const Preconditioner& precond) {
    if (!(options.tol > 0.0)) throw SolverError("tolerance must be positive");
    const std::size_t n = a.size();
    if (b.size() != n || x.size() != n) throw DomainError("solver vector size mismatch");
    SolverReport report;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        report.converged = true;
        return report;
    }
    std::vector<double> r(n), z(n), p(n), ap(n);
    a.multiply(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double rnorm = norm2(r);
    const double target = options.tol * bnorm;
    if (rnorm <= target) {
        report.residual = rnorm;
        report.converged = true;
        return report;
    }
    precond.apply(r, z);
    double rz = dot(r, z);
    report.preconditioned_residuals.push_back(rz);
    p = z;
    for (std::size_t it = 1; it <= options.maxit; ++it) {
        a.multiply(p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) throw IndefiniteMatrixError("CG breakdown: pᵀAp = " + std::to_string(pap));
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(r);
        report.iterations = it;
        report.residual = rnorm;
        if (rnorm <= target) {
            report.converged = true;
            return report;
        }
        precond.apply(r, z);
        const double rz_new = dot(r, z);
        report.preconditioned_residuals.push_back(rz_new);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return report;
}

}  // namespace dsdg
