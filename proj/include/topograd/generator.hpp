#pragma once

#include "topograd/ops.hpp"

namespace topograd {

/// Learnable weights of the convolutional design generator: a dense layer
/// from the seed, then two stride-2 transposed convolutions that each double
/// the spatial size. The fixed smoothing kernel at the output is not part of
/// this record (it is not learnable).
struct GeneratorParams {
    int nx = 0, ny = 0;
    // Short seed: with Adam's per-coordinate steps the latent grid moves by
    // about lr * sum(|seed|) per iteration, so a long seed destabilizes the
    // dense layer.
    int c0 = 32, c1 = 16, seed_len = 8;
    Tensor dense_w;  // ((ny/4)*(nx/4)*c0, seed_len)
    Tensor dense_b;
    Tensor k1;  // (c0, c1, 4, 4)
    Tensor b1;
    Tensor k2;  // (c1, 1, 4, 4)
    Tensor b2;

    std::vector<Tensor*> tensors() {
        return {&dense_w, &dense_b, &k1, &b1, &k2, &b2};
    }
    std::vector<const Tensor*> tensors() const {
        return {&dense_w, &dense_b, &k1, &b1, &k2, &b2};
    }
    long count() const {
        long n = 0;
        for (const Tensor* t : tensors()) n += t->numel();
        return n;
    }
};

/// Fixed input of the generator, drawn once and held constant for a run.
struct SeedVector {
    Tensor values;
};

inline SeedVector make_seed_vector(std::uint64_t rng_seed, int seed_len = 8) {
    Rng rng(rng_seed);
    Tensor v = Tensor::zeros({seed_len});
    for (double& x : v.data) x = rng.normal();
    return SeedVector{std::move(v)};
}

/// He-style initialization: zero-mean normals with variance 2/fan_in,
/// zero biases. Deterministic for a given seed.
inline GeneratorParams init_params(int nx, int ny, std::uint64_t rng_seed, int seed_len = 8,
                                   int c0 = 32, int c1 = 16) {
    if (nx < 4 || ny < 4 || nx % 4 != 0 || ny % 4 != 0)
        throw std::invalid_argument("init_params: mesh dimensions must be divisible by 4 (two "
                                    "doubling layers), got " +
                                    std::to_string(nx) + "x" + std::to_string(ny));
    GeneratorParams p;
    p.nx = nx;
    p.ny = ny;
    p.seed_len = seed_len;
    p.c0 = c0;
    p.c1 = c1;
    const int hidden = (ny / 4) * (nx / 4) * p.c0;

    Rng rng(rng_seed);
    auto he = [&rng](Tensor& t, long fan_in) {
        double std = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& v : t.data) v = rng.normal(0.0, std);
    };
    p.dense_w = Tensor::zeros({hidden, p.seed_len});
    he(p.dense_w, p.seed_len);
    p.dense_b = Tensor::zeros({hidden});
    p.k1 = Tensor::zeros({p.c0, p.c1, 4, 4});
    he(p.k1, static_cast<long>(p.c0) * 16);
    p.b1 = Tensor::zeros({p.c1});
    p.k2 = Tensor::zeros({p.c1, 1, 4, 4});
    he(p.k2, static_cast<long>(p.c1) * 16);
    p.b2 = Tensor::zeros({1});
    return p;
}

/// Copy of the parameters with every tensor placed on `tape` as a leaf.
inline GeneratorParams track(Tape& tape, const GeneratorParams& p) {
    GeneratorParams t = p;
    for (Tensor* q : t.tensors()) *q = tape.leaf(std::move(*q));
    return t;
}

/// Reciprocal valid-tap counts for the boundary-renormalized 3x3 box filter.
inline Tensor smoothing_norm(int ny, int nx) {
    Tensor w = Tensor::zeros({1, ny, nx});
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            int cy = (y > 0) + 1 + (y < ny - 1);
            int cx = (x > 0) + 1 + (x < nx - 1);
            w.data[static_cast<size_t>(y) * nx + x] = 1.0 / (cy * cx);
        }
    return w;
}

/// Raw design image in [-1, 1]: dense -> reshape -> two stride-2 transposed
/// convolutions (rectifier, then tanh) -> fixed neighborhood-averaging
/// convolution that suppresses checkerboard patterns. The averaging kernel is
/// uniform 3x3, renormalized at the boundary so its weights always sum to 1.
inline Tensor generate_raw(const GeneratorParams& p, const SeedVector& seed) {
    if (seed.values.numel() != p.seed_len)
        throw std::invalid_argument("generate_raw: seed length " +
                                    std::to_string(seed.values.numel()) + " != " +
                                    std::to_string(p.seed_len));
    Tensor h = dense(p.dense_w, seed.values, p.dense_b);
    Tensor grid = reshape(h, {p.c0, p.ny / 4, p.nx / 4});
    Tensor up1 = relu(bias_add(conv_transpose2d(grid, p.k1, 1), p.b1));
    Tensor up2 = tanh(bias_add(conv_transpose2d(up1, p.k2, 1), p.b2));
    Tensor smoothed = mul(conv2d(up2, Tensor::full({1, 1, 3, 3}, 1.0), 1),
                          smoothing_norm(p.ny, p.nx));
    return reshape(smoothed, {p.ny, p.nx});
}

/// Offset b such that mean(logistic(beta * raw + b)) equals volfrac, found
/// by bisection (the mean is strictly increasing in b; the bracket expands
/// until the target is enclosed, then shrinks to roundoff so the projection
/// is smooth under finite-difference probes).
inline double project_mass_offset(const Tensor& raw, double volfrac, double beta) {
    if (!(volfrac > 0.0) || !(volfrac < 1.0))
        throw std::invalid_argument("project_mass: volume fraction must be in (0,1), got " +
                                    std::to_string(volfrac));
    if (!(beta > 0.0)) throw std::invalid_argument("project_mass: beta must be positive");

    auto mean_at = [&](double b) {
        double s = 0.0;
        for (double r : raw.data) {
            double z = beta * r + b;
            s += z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        }
        return s / static_cast<double>(raw.numel());
    };

    double lo = -1.0, hi = 1.0;
    while (mean_at(lo) > volfrac && lo > -1e8) lo *= 2.0;
    while (mean_at(hi) < volfrac && hi < 1e8) hi *= 2.0;
    double b = 0.0;
    for (int it = 0; it < 200; ++it) {
        b = 0.5 * (lo + hi);
        if (hi - lo <= 1e-13 * std::max(1.0, std::fabs(b))) break;
        if (mean_at(b) < volfrac)
            lo = b;
        else
            hi = b;
    }
    return b;
}

namespace detail {

/// Pullback of the mass projection. The offset solves the constraint
/// mean(x) = volfrac, so by implicit differentiation
///   db/draw_j = -beta s_j / sum(s),   s_e = x_e (1 - x_e),
/// and the raw adjoint is the constraint-tangent component
///   rawbar_j = beta s_j (xbar_j - sum(xbar s) / sum(s)).
/// Without the centering term a compliance gradient pushes every element
/// up at once and the optimizer stalls against the constraint.
inline void register_generator_pullbacks(PullbackRegistry& r) {
    r.register_pullback("mass_project", [](const TapeNode& n, const Tensor& g) {
        const Tensor& x = n.saved[0];
        double beta = n.dattrs[0];
        double num = 0.0, den = 0.0;
        for (long i = 0; i < x.numel(); ++i) {
            double s = x.data[i] * (1.0 - x.data[i]);
            num += g.data[i] * s;
            den += s;
        }
        double c = num / den;
        Tensor gr = g.detached();
        for (long i = 0; i < x.numel(); ++i) {
            double s = x.data[i] * (1.0 - x.data[i]);
            gr.data[i] = beta * s * (g.data[i] - c);
        }
        return std::vector<Tensor>{std::move(gr)};
    });
}

inline void ensure_generator_ops() {
    static const bool once = [] {
        register_generator_pullbacks(PullbackRegistry::builtin());
        return true;
    }();
    (void)once;
}

}  // namespace detail

/// Populate a registry with the projection rule (for custom registries).
inline void register_generator_pullbacks(PullbackRegistry& r) {
    detail::register_generator_pullbacks(r);
}

/// Enforce the mass constraint: x = logistic(beta * raw + b) with the offset
/// b solved so the mean density equals volfrac. Differentiable in raw, with
/// the offset's dependence on raw handled implicitly by the registered
/// pullback. Output values lie strictly in (0, 1).
inline Tensor project_mass(const Tensor& raw, double volfrac, double beta) {
    detail::ensure_generator_ops();
    double b = project_mass_offset(raw, volfrac, beta);
    Tensor out = raw.detached();
    for (double& v : out.data) {
        double z = beta * v + b;
        v = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    Tensor saved = out.detached();
    return detail::record("mass_project", {&raw}, std::move(out), {std::move(saved)}, {},
                          {beta});
}

}  // namespace topograd
