#pragma once

#include <array>

#include "topograd/sparse.hpp"

namespace topograd {

/// Structured grid of unit square elements, nx wide by ny tall. Nodes are
/// numbered column-major with the y index running down from the top image
/// row, so a ny-by-nx density field maps directly onto the element grid.
/// The y displacement dof points physically up; a downward load is a
/// negative value.
struct Mesh {
    int nx = 0;
    int ny = 0;

    Mesh() = default;
    Mesh(int nx_, int ny_) : nx(nx_), ny(ny_) {
        if (nx < 1 || ny < 1)
            throw std::invalid_argument("Mesh: dimensions must be at least 1x1, got " +
                                        std::to_string(nx) + "x" + std::to_string(ny));
    }

    int node(int xi, int yi) const { return xi * (ny + 1) + yi; }
    int nnode() const { return (nx + 1) * (ny + 1); }
    int ndof() const { return 2 * nnode(); }
    int nelem() const { return nx * ny; }
    int elem_index(int ex, int ey) const { return ey * nx + ex; }

    /// Displacement dofs of element (ex, ey), corner order counter-clockwise
    /// in the physical frame starting at the element's lower-left corner
    /// (which is image row ey+1).
    std::array<int, 8> edofs(int ex, int ey) const {
        int a = node(ex, ey + 1);
        int b = node(ex + 1, ey + 1);
        int c = node(ex + 1, ey);
        int d = node(ex, ey);
        return {2 * a, 2 * a + 1, 2 * b, 2 * b + 1, 2 * c, 2 * c + 1, 2 * d, 2 * d + 1};
    }
};

/// Isotropic material model with the penalized stiffness interpolation
/// E(x) = Emin + x^p (E0 - Emin). The floor keeps the system SPD at x = 0.
struct Material {
    double E0 = 1.0;
    double Emin = 1e-9;
    double nu = 0.3;
    double p = 3.0;

    void validate() const {
        if (!(Emin > 0.0) || !(Emin < E0))
            throw std::invalid_argument("Material: need 0 < Emin < E0");
        if (!(nu >= 0.0) || !(nu < 0.5))
            throw std::invalid_argument("Material: need 0 <= nu < 0.5");
        if (!(p >= 1.0)) throw std::invalid_argument("Material: need p >= 1");
    }
};

/// Unit-modulus plane-stress stiffness of a bilinear square element,
/// 2x2 Gauss quadrature. Identical for every element; exactly symmetric.
inline Tensor element_stiffness(double nu) {
    if (!(nu >= 0.0) || !(nu < 0.5))
        throw std::invalid_argument("element_stiffness: need 0 <= nu < 0.5");

    // Plane-stress constitutive matrix for E = 1.
    const double c = 1.0 / (1.0 - nu * nu);
    const double c00 = c, c01 = c * nu, c22 = c * (1.0 - nu) / 2.0;

    Tensor k = Tensor::zeros({8, 8});
    const double gp = 1.0 / std::sqrt(3.0);
    const double pts[2] = {-gp, gp};
    for (double xi : pts) {
        for (double eta : pts) {
            // dN/dxi on the reference square, corners ccw from (-1,-1);
            // chain rule to the unit element multiplies by 2.
            double dndx[4] = {-(1 - eta) / 4 * 2, (1 - eta) / 4 * 2, (1 + eta) / 4 * 2,
                              -(1 + eta) / 4 * 2};
            double dndy[4] = {-(1 - xi) / 4 * 2, -(1 + xi) / 4 * 2, (1 + xi) / 4 * 2,
                              (1 - xi) / 4 * 2};
            // B is 3x8: rows (exx, eyy, gxy).
            double b0[8] = {}, b1[8] = {}, b2[8] = {};
            for (int i = 0; i < 4; ++i) {
                b0[2 * i] = dndx[i];
                b1[2 * i + 1] = dndy[i];
                b2[2 * i] = dndy[i];
                b2[2 * i + 1] = dndx[i];
            }
            const double detj = 0.25;
            for (int a = 0; a < 8; ++a)
                for (int b = a; b < 8; ++b) {
                    double v = b0[a] * (c00 * b0[b] + c01 * b1[b]) +
                               b1[a] * (c01 * b0[b] + c00 * b1[b]) + b2[a] * c22 * b2[b];
                    k.at(a, b) += v * detj;
                }
        }
    }
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < a; ++b) k.at(a, b) = k.at(b, a);
    return k;
}

/// Assemble the penalized global stiffness as triplets: per element,
/// 64 entries E_e * K0[a][b] at its dof positions, with
/// E_e = Emin + x_e^p (E0 - Emin). Differentiable in x.
inline TripletList assemble_K(const Mesh& mesh, const Tensor& x, const Material& mat) {
    mat.validate();
    if (x.shape != std::vector<int>{mesh.ny, mesh.nx})
        throw std::invalid_argument("assemble_K: density shape " + Tensor::shape_str(x.shape) +
                                    " does not match mesh (" + std::to_string(mesh.ny) + "," +
                                    std::to_string(mesh.nx) + ")");
    const int ne = mesh.nelem();
    Tensor k0 = element_stiffness(mat.nu);

    Tensor stiff = add(smul(mat.E0 - mat.Emin, pow_elem(reshape(x, {ne}), mat.p)),
                       Tensor::full({ne}, mat.Emin));

    auto rep = std::make_shared<std::vector<long>>();
    rep->reserve(static_cast<size_t>(ne) * 64);
    Tensor k0_tile = Tensor::zeros({ne * 64});
    for (int e = 0; e < ne; ++e)
        for (int q = 0; q < 64; ++q) {
            rep->push_back(e);
            k0_tile.data[static_cast<size_t>(e) * 64 + q] = k0.data[q];
        }

    TripletList t;
    t.n = mesh.ndof();
    t.vals = mul(gather(stiff, std::shared_ptr<const std::vector<long>>(rep)), k0_tile);
    t.rows.reserve(static_cast<size_t>(ne) * 64);
    t.cols.reserve(static_cast<size_t>(ne) * 64);
    for (int ey = 0; ey < mesh.ny; ++ey)
        for (int ex = 0; ex < mesh.nx; ++ex) {
            auto ed = mesh.edofs(ex, ey);
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b) {
                    t.rows.push_back(ed[a]);
                    t.cols.push_back(ed[b]);
                }
        }
    return t;
}

/// Point loads as (dof, value) pairs.
using PointLoads = std::vector<std::pair<int, double>>;

inline Tensor load_vector(const Mesh& mesh, const PointLoads& loads) {
    Tensor f = Tensor::zeros({mesh.ndof()});
    for (auto [dof, val] : loads) {
        if (dof < 0 || dof >= mesh.ndof())
            throw std::invalid_argument("load_vector: dof " + std::to_string(dof) +
                                        " out of range");
        f.data[static_cast<size_t>(dof)] += val;
    }
    return f;
}

inline std::vector<int> complement_dofs(int ndof, const std::vector<int>& fixed_sorted) {
    std::vector<int> free;
    free.reserve(static_cast<size_t>(ndof) - fixed_sorted.size());
    size_t k = 0;
    for (int d = 0; d < ndof; ++d) {
        if (k < fixed_sorted.size() && fixed_sorted[k] == d) {
            ++k;
            continue;
        }
        free.push_back(d);
    }
    return free;
}

/// Full displacement field for one load case: assemble, reduce by the fixed
/// dofs, solve. Fixed dofs carry zeros. End-to-end on the tape when x is.
inline Tensor displacements(const Mesh& mesh, const Material& mat, const Tensor& x,
                            const std::vector<int>& fixed_dofs, const PointLoads& loads) {
    TripletList t = assemble_K(mesh, x, mat);
    SparseMatrix k = assemble_sparse(t);
    Tensor f = load_vector(mesh, loads);
    return solve(k, f, complement_dofs(mesh.ndof(), fixed_dofs));
}

/// Compliance F^T U, equal to U^T K U at the solution of K U = F.
inline Tensor compliance(const Tensor& u, const Tensor& f) {
    if (u.shape != f.shape)
        throw std::invalid_argument("compliance: length mismatch " +
                                    Tensor::shape_str(u.shape) + " vs " +
                                    Tensor::shape_str(f.shape));
    return sum(mul(u, f));
}

}  // namespace topograd
