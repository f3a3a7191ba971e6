#pragma once

#include <atomic>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "topograd/ops.hpp"

namespace topograd {

/// Counts factorizations and solves so tests can assert the reuse property:
/// one factorization per forward solve, none during backward.
struct SparseCounters {
    std::atomic<long> factorizations{0};
    std::atomic<long> solves{0};
    void reset() {
        factorizations = 0;
        solves = 0;
    }
};

inline SparseCounters& sparse_counters() {
    static SparseCounters c;
    return c;
}

/// Immutable compressed-column sparsity structure (sorted row indices).
struct SparsePattern {
    int n = 0;
    std::vector<int> colptr;  // size n+1
    std::vector<int> rowidx;  // size nnz, strictly increasing per column
    long nnz() const { return static_cast<long>(rowidx.size()); }
};

/// Symmetric coordinate-form matrix under construction. Duplicate (row,col)
/// positions are permitted and sum on assembly. `vals` rides the tape.
struct TripletList {
    std::vector<int> rows;
    std::vector<int> cols;
    Tensor vals;
    int n = 0;
};

/// LDL^T factors of the matrix reduced to its free dofs, with a
/// fill-reducing (AMD) permutation. Immutable once built; both the forward
/// solve and the solve inside the pullback reuse it.
class Factorization {
public:
    Factorization(const SparsePattern& pat, const std::vector<double>& vals,
                  std::vector<int> free_dofs)
        : free_(std::move(free_dofs)) {
        const int n = pat.n;
        full2red_.assign(n, -1);
        for (size_t r = 0; r < free_.size(); ++r) {
            int d = free_[r];
            if (d < 0 || d >= n)
                throw std::invalid_argument("factorize: free dof " + std::to_string(d) +
                                            " out of range for n = " + std::to_string(n));
            if (full2red_[d] != -1)
                throw std::invalid_argument("factorize: duplicate free dof " + std::to_string(d));
            full2red_[d] = static_cast<int>(r);
        }
        const int nr = static_cast<int>(free_.size());

        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(pat.rowidx.size());
        for (int j = 0; j < n; ++j) {
            int cj = full2red_[j];
            if (cj < 0) continue;
            for (int k = pat.colptr[j]; k < pat.colptr[j + 1]; ++k) {
                int ci = full2red_[pat.rowidx[k]];
                if (ci < 0) continue;
                trips.emplace_back(ci, cj, vals[static_cast<size_t>(k)]);
            }
        }
        a_red_.resize(nr, nr);
        a_red_.setFromTriplets(trips.begin(), trips.end());
        a_red_.makeCompressed();

        ldlt_.compute(a_red_);
        check_pivots();
    }

    const std::vector<int>& free_dofs() const { return free_; }
    int reduced_size() const { return static_cast<int>(free_.size()); }

    /// Solve on full-length vectors: fixed entries of the right-hand side
    /// are ignored and the solution carries zeros there.
    std::vector<double> solve_full(const std::vector<double>& rhs_full) const {
        const int nr = reduced_size();
        Eigen::VectorXd b(nr);
        for (int r = 0; r < nr; ++r) b[r] = rhs_full[static_cast<size_t>(free_[r])];
        Eigen::VectorXd x = ldlt_.solve(b);

        double bn = b.norm();
        if (bn > 0.0) {
            Eigen::VectorXd resid = b - a_red_ * x;
            if (resid.norm() > kResidualTol * bn) {
                x += ldlt_.solve(resid);  // one refinement step
                resid = b - a_red_ * x;
                if (resid.norm() > kResidualTol * bn)
                    throw std::runtime_error("solve: relative residual " +
                                             std::to_string(resid.norm() / bn) +
                                             " exceeds tolerance");
            }
        }

        std::vector<double> out(full2red_.size(), 0.0);
        for (int r = 0; r < nr; ++r) out[static_cast<size_t>(free_[r])] = x[r];
        return out;
    }

    /// Frobenius-norm relative error of L D L^T against the permuted
    /// reduced matrix.
    double reconstruction_residual() const {
        Eigen::SparseMatrix<double> l = ldlt_.matrixL();
        Eigen::VectorXd d = ldlt_.vectorD();
        Eigen::SparseMatrix<double> ldl = l * d.asDiagonal() * Eigen::SparseMatrix<double>(l.transpose());
        Eigen::SparseMatrix<double> perm =
            ldlt_.permutationP() * a_red_ * ldlt_.permutationP().transpose();
        double an = perm.norm();
        return an > 0.0 ? (ldl - perm).norm() / an : (ldl - perm).norm();
    }

    std::vector<double> pivot_values() const {
        Eigen::VectorXd d = ldlt_.vectorD();
        return std::vector<double>(d.data(), d.data() + d.size());
    }

    long factor_nonzeros() const {
        Eigen::SparseMatrix<double> l = ldlt_.matrixL();
        return l.nonZeros();
    }

    static constexpr double kResidualTol = 1e-9;

private:
    void check_pivots() const {
        Eigen::VectorXd d = ldlt_.vectorD();
        int bad = -1;
        for (int i = 0; i < d.size(); ++i) {
            if (!(d[i] > 0.0) || !std::isfinite(d[i])) {
                bad = i;
                break;
            }
        }
        if (bad < 0 && ldlt_.info() == Eigen::Success) return;
        int red = bad;
        if (bad >= 0) red = ldlt_.permutationPinv().indices()[bad];
        std::string where =
            red >= 0 ? " at dof " + std::to_string(free_[static_cast<size_t>(red)]) : "";
        throw std::runtime_error(
            "factorize: non-positive pivot" + where +
            " (reduced matrix is not positive definite; check the stiffness floor and "
            "boundary conditions)");
    }

    std::vector<int> free_;
    std::vector<int> full2red_;
    Eigen::SparseMatrix<double> a_red_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                          Eigen::AMDOrdering<int>>
        ldlt_;
};

/// Symmetric sparse matrix in compressed-column form. The value vector is a
/// tape-tracked tensor in CSC entry order; the structure is constant data.
/// After the first factorize() the factor handle is cached here and reused
/// by later solves with the same free-dof set.
struct SparseMatrix {
    std::shared_ptr<const SparsePattern> pattern;
    Tensor vals;  // shape {nnz}
    bool symmetric = false;

    mutable std::shared_ptr<const Factorization> factor_cache;

    int dim() const { return pattern->n; }
    long nnz() const { return pattern->nnz(); }

    /// Dense value at (i, j); zero off the pattern. Test/debug helper.
    double at(int i, int j) const {
        for (int k = pattern->colptr[j]; k < pattern->colptr[j + 1]; ++k)
            if (pattern->rowidx[k] == i) return vals.data[static_cast<size_t>(k)];
        return 0.0;
    }
};

namespace detail {

struct AssembleCtx {
    std::vector<int> pos;  // triplet k -> CSC entry index
};

struct SolveCtx {
    std::shared_ptr<const Factorization> factor;
    std::shared_ptr<const SparsePattern> pattern;
};

inline void register_sparse_pullbacks(PullbackRegistry& r) {
    // Triplet assembly: each triplet reads the adjoint at its own (row,col)
    // position, so duplicated positions each receive the full positional
    // adjoint.
    r.register_pullback("sparse_assemble", [](const TapeNode& n, const Tensor& g) {
        const auto& pos = std::static_pointer_cast<const AssembleCtx>(n.ctx)->pos;
        Tensor gv = Tensor::zeros({static_cast<int>(pos.size())});
        for (size_t k = 0; k < pos.size(); ++k)
            gv.data[k] = g.data[static_cast<size_t>(pos[k])];
        return std::vector<Tensor>{std::move(gv)};
    });

    // Adjoint of U = K \ F for symmetric K: solve once more with the cached
    // factors to get the F adjoint, then form the K adjoint only at stored
    // nonzero positions. No factorization happens here.
    r.register_pullback("sparse_solve", [](const TapeNode& n, const Tensor& g) {
        const auto ctx = std::static_pointer_cast<const SolveCtx>(n.ctx);
        const Tensor& u = n.saved[0];
        std::vector<double> fbar = ctx->factor->solve_full(g.data);

        const SparsePattern& pat = *ctx->pattern;
        Tensor gk = Tensor::zeros({static_cast<int>(pat.nnz())});
        for (int j = 0; j < pat.n; ++j) {
            double uj = u.data[static_cast<size_t>(j)];
            if (uj == 0.0) continue;
            for (int k = pat.colptr[j]; k < pat.colptr[j + 1]; ++k)
                gk.data[static_cast<size_t>(k)] = -fbar[static_cast<size_t>(pat.rowidx[k])] * uj;
        }
        Tensor gf({pat.n}, std::move(fbar));
        return std::vector<Tensor>{std::move(gk), std::move(gf)};
    });
}

inline void ensure_sparse_ops() {
    static const bool once = [] {
        register_sparse_pullbacks(PullbackRegistry::builtin());
        return true;
    }();
    (void)once;
}

}  // namespace detail

/// Populate a registry with the sparse rules (for custom registries).
inline void register_sparse_pullbacks(PullbackRegistry& r) {
    detail::register_sparse_pullbacks(r);
}

/// Build a CSC matrix from triplets, summing duplicates: K[i,j] = sum of
/// values with indices (i,j). Differentiable in the triplet values.
inline SparseMatrix assemble_sparse(const TripletList& t) {
    detail::ensure_sparse_ops();
    const size_t m = t.rows.size();
    if (t.cols.size() != m || static_cast<size_t>(t.vals.numel()) != m)
        throw std::invalid_argument("assemble_sparse: triplet arrays have lengths " +
                                    std::to_string(t.rows.size()) + "/" +
                                    std::to_string(t.cols.size()) + "/" +
                                    std::to_string(t.vals.numel()));
    if (t.n <= 0) throw std::invalid_argument("assemble_sparse: dimension must be positive");
    for (size_t k = 0; k < m; ++k)
        if (t.rows[k] < 0 || t.rows[k] >= t.n || t.cols[k] < 0 || t.cols[k] >= t.n)
            throw std::invalid_argument("assemble_sparse: index (" + std::to_string(t.rows[k]) +
                                        "," + std::to_string(t.cols[k]) +
                                        ") out of range for n = " + std::to_string(t.n));

    // Sort triplet ids by (col, row) to lay out CSC entries. The stable sort
    // keeps duplicates in emission order, so symmetric positions accumulate
    // identical value sequences and the assembled matrix is bitwise symmetric
    // when the triplets are.
    std::vector<int> order(m);
    for (size_t k = 0; k < m; ++k) order[k] = static_cast<int>(k);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (t.cols[a] != t.cols[b]) return t.cols[a] < t.cols[b];
        return t.rows[a] < t.rows[b];
    });

    auto pat = std::make_shared<SparsePattern>();
    pat->n = t.n;
    pat->colptr.assign(static_cast<size_t>(t.n) + 1, 0);
    auto ctx = std::make_shared<detail::AssembleCtx>();
    ctx->pos.assign(m, -1);

    std::vector<double> vals;
    vals.reserve(m);
    int prev_row = -1, prev_col = -1;
    for (size_t s = 0; s < m; ++s) {
        int k = order[s];
        int rr = t.rows[k], cc = t.cols[k];
        if (cc != prev_col || rr != prev_row) {
            pat->rowidx.push_back(rr);
            vals.push_back(0.0);
            pat->colptr[static_cast<size_t>(cc) + 1]++;
            prev_row = rr;
            prev_col = cc;
        }
        ctx->pos[static_cast<size_t>(k)] = static_cast<int>(vals.size()) - 1;
        vals.back() += t.vals.data[static_cast<size_t>(k)];
    }
    for (int j = 0; j < t.n; ++j) pat->colptr[static_cast<size_t>(j) + 1] += pat->colptr[j];

    // Structural + numeric symmetry probe (exact equality).
    bool sym = true;
    {
        SparseMatrix probe;
        probe.pattern = pat;
        probe.vals = Tensor({static_cast<int>(vals.size())}, vals);
        for (int j = 0; j < t.n && sym; ++j)
            for (int k = pat->colptr[j]; k < pat->colptr[j + 1] && sym; ++k) {
                int i = pat->rowidx[k];
                if (probe.at(j, i) != vals[static_cast<size_t>(k)]) sym = false;
            }
    }

    const int nnz = static_cast<int>(vals.size());
    Tensor out({nnz}, std::move(vals));
    SparseMatrix km;
    km.pattern = pat;
    km.vals = detail::record("sparse_assemble", {&t.vals}, std::move(out), {}, {}, {}, ctx);
    km.symmetric = sym;
    return km;
}

/// Factor the reduced SPD system, caching on the matrix for reuse.
inline std::shared_ptr<const Factorization> factorize(const SparseMatrix& k,
                                                      const std::vector<int>& free_dofs) {
    if (k.factor_cache && k.factor_cache->free_dofs() == free_dofs) return k.factor_cache;
    auto f = std::make_shared<Factorization>(*k.pattern, k.vals.data, free_dofs);
    sparse_counters().factorizations++;
    k.factor_cache = f;
    return f;
}

/// Solve K U = F on the free dofs (fixed dofs of U are zero), differentiable
/// in both the matrix values and the load. The pullback reuses the forward
/// factorization: one extra triangular solve pair, no refactorization, and
/// the K adjoint is formed only at stored nonzero positions.
inline Tensor solve(const SparseMatrix& k, const Tensor& f,
                    const std::vector<int>& free_dofs) {
    detail::ensure_sparse_ops();
    if (f.numel() != k.dim())
        throw std::invalid_argument("solve: load length " + std::to_string(f.numel()) +
                                    " does not match matrix dimension " +
                                    std::to_string(k.dim()));
    if (!k.symmetric)
        throw std::invalid_argument("solve: matrix is not symmetric");

    auto factor = factorize(k, free_dofs);
    sparse_counters().solves++;
    std::vector<double> u = factor->solve_full(f.data);

    auto ctx = std::make_shared<detail::SolveCtx>();
    ctx->factor = factor;
    ctx->pattern = k.pattern;
    Tensor out({k.dim()}, std::move(u));
    Tensor saved_u = out.detached();
    return detail::record("sparse_solve", {&k.vals, &f}, std::move(out), {std::move(saved_u)},
                          {}, {}, ctx);
}

}  // namespace topograd
