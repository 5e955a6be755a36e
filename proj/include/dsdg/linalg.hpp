/**
 * @file linalg.hpp
 * @brief CSR matrices, preconditioned conjugate gradients and the
 *        preconditioners used for the Crank-Nicolson systems.
 *
 * All reductions run in a fixed sequential order, so results are bitwise
 * reproducible for identical inputs.
 */
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dsdg {

struct Triplet {
    std::size_t row, col;
    double value;
};

/// Structurally symmetric CSR matrix with sorted column indices per row.
class SparseSymMatrix {
public:
    SparseSymMatrix() = default;
    SparseSymMatrix(std::size_t n, std::vector<std::size_t> row_ptr, std::vector<std::size_t> cols,
                    std::vector<double> vals);
    /// Duplicates are summed; entries are sorted per row.
    static SparseSymMatrix from_triplets(std::size_t n, std::vector<Triplet> triplets);
    static SparseSymMatrix identity(std::size_t n);

    std::size_t size() const { return n_; }
    std::size_t nnz() const { return vals_.size(); }
    const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
    const std::vector<std::size_t>& cols() const { return cols_; }
    const std::vector<double>& vals() const { return vals_; }

    void multiply(std::span<const double> x, std::span<double> y) const;
    std::vector<double> operator*(std::span<const double> x) const;
    double at(std::size_t i, std::size_t j) const;
    std::vector<double> diagonal() const;
    /// max_ij |a_ij|
    double max_abs() const;
    bool is_symmetric() const;

    /// diag(d) + scale * this, on this matrix's sparsity pattern (diagonal entries must exist).
    SparseSymMatrix scaled_plus_diagonal(double scale, std::span<const double> d) const;

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> cols_;
    std::vector<double> vals_;
};

void write_matrix_market(const SparseSymMatrix& a, const std::string& path);

class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual void apply(std::span<const double> r, std::span<double> z) const = 0;
    virtual std::string name() const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    void apply(std::span<const double> r, std::span<double> z) const override;
    std::string name() const override { return "none"; }
};

/// Zero fill-in incomplete Cholesky on the lower-triangular pattern of A.
/// A non-positive pivot triggers a retry on A + shift I with shift starting at
/// 1e-3 times the mean diagonal, doubled on each of at most 8 retries.
class IncompleteCholesky final : public Preconditioner {
public:
    explicit IncompleteCholesky(const SparseSymMatrix& a);
    void apply(std::span<const double> r, std::span<double> z) const override;
    std::string name() const override { return "ic0"; }
    double shift() const { return shift_; }

private:
    bool factor(const SparseSymMatrix& a, double shift);

    std::size_t n_ = 0;
    std::vector<std::size_t> row_ptr_;  // lower triangle incl. diagonal (last entry of each row)
    std::vector<std::size_t> cols_;
    std::vector<double> vals_;
    double shift_ = 0.0;
};

/// Dense Cholesky on each diagonal block.
class BlockJacobi final : public Preconditioner {
public:
    /// `blocks` lists (offset, size) pairs partitioning [0, n).
    BlockJacobi(const SparseSymMatrix& a, std::vector<std::pair<std::size_t, std::size_t>> blocks);
    /// Uniform blocks of the given size.
    BlockJacobi(const SparseSymMatrix& a, std::size_t block_size);
    void apply(std::span<const double> r, std::span<double> z) const override;
    std::string name() const override { return "block_jacobi"; }

private:
    std::vector<std::pair<std::size_t, std::size_t>> blocks_;
    std::vector<std::size_t> factor_offsets_;
    std::vector<double> factors_;
};

std::unique_ptr<Preconditioner> ic0_precondition(const SparseSymMatrix& a);
std::unique_ptr<Preconditioner> block_jacobi_precondition(const SparseSymMatrix& a, std::size_t block_size);

struct SolverOptions {
    double tol = 1e-10;
    std::size_t maxit = 5000;
};

struct SolverReport {
    std::size_t iterations = 0;
    double residual = 0.0;       ///< final ‖b − Ax‖ (recursively updated)
    bool converged = false;
    /// r_kᵀ z_k per iteration, starting with the initial residual.
    std::vector<double> preconditioned_residuals;
};

/// Preconditioned CG. `x` holds the initial guess on entry. Stops when
/// ‖r‖ ≤ tol·‖b‖. Throws IndefiniteMatrixError if pᵀAp ≤ 0.
SolverReport cg_solve(const SparseSymMatrix& a, std::span<const double> b, std::span<double> x,
                      const SolverOptions& options, const Preconditioner& precond);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace dsdg
