#pragma once

#include "topograd/fem.hpp"

namespace topograd {

struct AdamParams {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter-tensor moment estimates.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
};

/// Standard bias-corrected Adam update, in place.
inline void adam_step(Tensor& theta, const Tensor& grad, AdamState& st, const AdamParams& hp) {
    require_same_shape("adam_step", theta, grad);
    if (!all_finite(grad))
        throw std::runtime_error("adam_step: non-finite gradient (broken pullback upstream?)");
    const size_t n = theta.data.size();
    if (st.m.empty()) {
        st.m.assign(n, 0.0);
        st.v.assign(n, 0.0);
    }
    if (st.m.size() != n)
        throw std::invalid_argument("adam_step: state size " + std::to_string(st.m.size()) +
                                    " does not match parameter size " + std::to_string(n));
    st.t += 1;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < n; ++i) {
        double g = grad.data[i];
        st.m[i] = hp.beta1 * st.m[i] + (1.0 - hp.beta1) * g;
        st.v[i] = hp.beta2 * st.v[i] + (1.0 - hp.beta2) * g * g;
        double mhat = st.m[i] / c1;
        double vhat = st.v[i] / c2;
        theta.data[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

/// Analytic compliance sensitivity under fixed loads:
/// dC/dx_e = -p x_e^(p-1) (E0 - Emin) u_e^T K0 u_e. Non-positive everywhere
/// (adding material cannot increase compliance).
inline Tensor sensitivity(const Tensor& x, const Tensor& u, const Mesh& mesh,
                          const Material& mat) {
    if (x.shape != std::vector<int>{mesh.ny, mesh.nx})
        throw std::invalid_argument("sensitivity: density shape " + Tensor::shape_str(x.shape) +
                                    " does not match mesh");
    if (u.numel() != mesh.ndof())
        throw std::invalid_argument("sensitivity: displacement length " +
                                    std::to_string(u.numel()) + " != " +
                                    std::to_string(mesh.ndof()));
    Tensor k0 = element_stiffness(mat.nu);
    Tensor dc = Tensor::zeros(x.shape);
    for (int ey = 0; ey < mesh.ny; ++ey)
        for (int ex = 0; ex < mesh.nx; ++ex) {
            auto ed = mesh.edofs(ex, ey);
            double ue[8];
            for (int a = 0; a < 8; ++a) ue[a] = u.data[static_cast<size_t>(ed[a])];
            double quad = 0.0;
            for (int a = 0; a < 8; ++a) {
                double row = 0.0;
                for (int b = 0; b < 8; ++b) row += k0.at(a, b) * ue[b];
                quad += ue[a] * row;
            }
            double xe = x.data[static_cast<size_t>(mesh.elem_index(ex, ey))];
            dc.data[static_cast<size_t>(mesh.elem_index(ex, ey))] =
                -mat.p * std::pow(xe, mat.p - 1.0) * (mat.E0 - mat.Emin) * quad;
        }
    return dc;
}

/// Cone-weighted neighborhood average with weights max(0, rmin - dist),
/// dist in element units, normalized per element. rmin = 1 is the identity.
inline Tensor density_filter(const Tensor& field, double rmin) {
    if (field.ndim() != 2)
        throw std::invalid_argument("density_filter: expected a 2-D field, got " +
                                    Tensor::shape_str(field.shape));
    if (!(rmin >= 1.0)) throw std::invalid_argument("density_filter: rmin must be >= 1");
    const int ny = field.shape[0], nx = field.shape[1];
    const int reach = static_cast<int>(std::ceil(rmin));
    Tensor out = Tensor::zeros(field.shape);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int dy = -reach; dy <= reach; ++dy) {
                int yy = y + dy;
                if (yy < 0 || yy >= ny) continue;
                for (int dx = -reach; dx <= reach; ++dx) {
                    int xx = x + dx;
                    if (xx < 0 || xx >= nx) continue;
                    double w = rmin - (std::abs(dy) + std::abs(dx));
                    if (w <= 0.0) continue;
                    acc += w * field.data[static_cast<size_t>(yy) * nx + xx];
                    wsum += w;
                }
            }
            out.data[static_cast<size_t>(y) * nx + x] = acc / wsum;
        }
    return out;
}

struct OCParams {
    double move = 0.2;
    double eta = 0.5;
    double vol_tol = 1e-4;

    void validate() const {
        if (!(move > 0.0) || !(move <= 1.0))
            throw std::invalid_argument("OCParams: need 0 < move <= 1");
        if (!(eta > 0.0) || !(eta <= 1.0))
            throw std::invalid_argument("OCParams: need 0 < eta <= 1");
    }
};

/// Optimality-criteria density update: multiplicative step x B^eta clamped
/// by the move limit and [0,1], with the Lagrange multiplier bisected until
/// the mean density meets the volume fraction.
inline Tensor oc_update(const Tensor& x, const Tensor& dc, double volfrac,
                        const OCParams& params) {
    require_same_shape("oc_update", x, dc);
    params.validate();
    if (!(volfrac > 0.0) || !(volfrac < 1.0))
        throw std::invalid_argument("oc_update: volume fraction must be in (0,1)");
    for (long i = 0; i < dc.numel(); ++i)
        if (dc.data[static_cast<size_t>(i)] > 0.0)
            throw std::invalid_argument(
                "oc_update: positive sensitivity at element " + std::to_string(i) +
                " (compliance sensitivity must be non-positive; sign bug upstream?)");

    Tensor xnew = Tensor::zeros(x.shape);
    auto apply = [&](double lambda) {
        double total = 0.0;
        for (long i = 0; i < x.numel(); ++i) {
            double xi = x.data[static_cast<size_t>(i)];
            double be = -dc.data[static_cast<size_t>(i)] / lambda;
            double cand = xi * std::pow(be, params.eta);
            double lo = std::max(0.0, xi - params.move);
            double hi = std::min(1.0, xi + params.move);
            double v = std::min(hi, std::max(lo, cand));
            xnew.data[static_cast<size_t>(i)] = v;
            total += v;
        }
        return total / static_cast<double>(x.numel());
    };

    double lo = 1e-12, hi = 1e12;
    for (int it = 0; it < 400; ++it) {
        double lambda = std::sqrt(lo * hi);  // geometric midpoint; lambda spans decades
        double m = apply(lambda);
        if (std::fabs(m - volfrac) <= params.vol_tol) break;
        if (m > volfrac)
            lo = lambda;
        else
            hi = lambda;
        if (hi / lo < 1.0 + 1e-14) break;
    }
    return xnew;
}

}  // namespace topograd
