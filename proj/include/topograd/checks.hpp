#pragma once

#include <functional>
#include <set>

#include "topograd/gradcheck.hpp"
#include "topograd/io.hpp"

namespace topograd {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double threshold = 0.0;
    bool passed = false;
    int instances = 0;
};

namespace checks_detail {

/// View a contiguous slice of a packed 1-D tensor as `shape`, on the tape.
inline Tensor slice_as(const Tensor& packed, long offset, std::vector<int> shape) {
    long n = Tensor::numel_of(shape);
    auto idx = std::make_shared<std::vector<long>>();
    idx->reserve(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) idx->push_back(offset + i);
    return reshape(gather(packed, std::shared_ptr<const std::vector<long>>(idx)),
                   std::move(shape));
}

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Scalar head: weighted sum with fixed random weights, so every output
/// coordinate of the op under test influences the objective.
inline Tensor weighted_sum(const Tensor& y, const Tensor& weights) {
    return sum(mul(y, weights));
}

using Instance = std::function<double(Rng&, const PullbackRegistry*)>;

inline GradCheckResult run_instances(const std::string& name, double threshold, int count,
                                     Rng& rng, const PullbackRegistry* reg,
                                     const Instance& one) {
    GradCheckResult res;
    res.name = name;
    res.threshold = threshold;
    res.instances = count;
    for (int i = 0; i < count; ++i) res.max_rel_err = std::max(res.max_rel_err, one(rng, reg));
    res.passed = res.max_rel_err <= threshold;
    return res;
}

/// Elementwise binary op instance over two packed operands.
inline double binary_instance(Rng& rng, const PullbackRegistry* reg,
                              const std::function<Tensor(const Tensor&, const Tensor&)>& op,
                              double lo_a, double hi_a, double lo_b, double hi_b,
                              bool keep_b_away_from_zero = false) {
    int m = 2 + static_cast<int>(rng.index(10));
    Tensor packed = Tensor::zeros({2 * m});
    for (int i = 0; i < m; ++i) packed.data[i] = rng.uniform(lo_a, hi_a);
    for (int i = 0; i < m; ++i) {
        double v = rng.uniform(lo_b, hi_b);
        if (keep_b_away_from_zero) {
            while (std::fabs(v) < 0.3) v = rng.uniform(lo_b, hi_b);
        }
        packed.data[m + i] = v;
    }
    Tensor w = random_tensor(rng, {m}, -1.0, 1.0);
    auto f = [&](const Tensor& x) {
        Tensor a = slice_as(x, 0, {m});
        Tensor b = slice_as(x, m, {m});
        return weighted_sum(op(a, b), w);
    };
    return finite_difference_check(f, packed, 1e-6, reg);
}

/// Unary op instance; values drawn in [lo, hi], optionally resampled until
/// |v| >= margin (kinked ops probed away from the kink). Head weights are
/// sized to the op's output.
inline double unary_instance(Rng& rng, const PullbackRegistry* reg,
                             const std::function<Tensor(const Tensor&)>& op, double lo,
                             double hi, double margin = 0.0) {
    int m = 2 + static_cast<int>(rng.index(10));
    Tensor x = Tensor::zeros({m});
    for (double& v : x.data) {
        v = rng.uniform(lo, hi);
        while (margin > 0.0 && std::fabs(v) < margin) v = rng.uniform(lo, hi);
    }
    Tensor w = random_tensor(rng, op(x.detached()).shape, -1.0, 1.0);
    auto f = [&](const Tensor& t) { return weighted_sum(op(t), w); };
    return finite_difference_check(f, x, 1e-6, reg);
}

inline double matmul_instance(Rng& rng, const PullbackRegistry* reg) {
    int m = 2 + static_cast<int>(rng.index(3));
    int k = 2 + static_cast<int>(rng.index(3));
    int n = 2 + static_cast<int>(rng.index(3));
    Tensor packed = random_tensor(rng, {m * k + k * n}, -1.5, 1.5);
    Tensor w = random_tensor(rng, {m, n}, -1.0, 1.0);
    auto f = [&](const Tensor& x) {
        Tensor a = slice_as(x, 0, {m, k});
        Tensor b = slice_as(x, static_cast<long>(m) * k, {k, n});
        return weighted_sum(matmul(a, b), w);
    };
    return finite_difference_check(f, packed, 1e-6, reg);
}

inline double gather_instance(Rng& rng, const PullbackRegistry* reg) {
    int m = 4 + static_cast<int>(rng.index(6));
    int picks = m + 2;  // more picks than slots forces duplicates
    auto idx = std::make_shared<std::vector<long>>();
    for (int i = 0; i < picks; ++i) idx->push_back(rng.index(m));
    Tensor x = random_tensor(rng, {m}, -2.0, 2.0);
    Tensor w = random_tensor(rng, {picks}, -1.0, 1.0);
    auto f = [&](const Tensor& t) {
        return weighted_sum(gather(t, std::shared_ptr<const std::vector<long>>(idx)), w);
    };
    return finite_difference_check(f, x, 1e-6, reg);
}

inline double dense_instance(Rng& rng, const PullbackRegistry* reg) {
    int m = 2 + static_cast<int>(rng.index(4));
    int n = 2 + static_cast<int>(rng.index(4));
    Tensor packed = random_tensor(rng, {m * n + n + m}, -1.5, 1.5);
    Tensor w = random_tensor(rng, {m}, -1.0, 1.0);
    auto f = [&](const Tensor& x) {
        Tensor wt = slice_as(x, 0, {m, n});
        Tensor xv = slice_as(x, static_cast<long>(m) * n, {n});
        Tensor b = slice_as(x, static_cast<long>(m) * n + n, {m});
        return weighted_sum(dense(wt, xv, b), w);
    };
    return finite_difference_check(f, packed, 1e-6, reg);
}

inline double bias_add_instance(Rng& rng, const PullbackRegistry* reg) {
    int c = 1 + static_cast<int>(rng.index(3));
    int h = 2 + static_cast<int>(rng.index(3));
    int wdt = 2 + static_cast<int>(rng.index(3));
    Tensor packed = random_tensor(rng, {c * h * wdt + c}, -1.5, 1.5);
    Tensor w = random_tensor(rng, {c, h, wdt}, -1.0, 1.0);
    auto f = [&](const Tensor& x) {
        Tensor img = slice_as(x, 0, {c, h, wdt});
        Tensor b = slice_as(x, static_cast<long>(c) * h * wdt, {c});
        return weighted_sum(bias_add(img, b), w);
    };
    return finite_difference_check(f, packed, 1e-6, reg);
}

inline double conv2d_instance(Rng& rng, const PullbackRegistry* reg) {
    int c = 1 + static_cast<int>(rng.index(2));
    int fch = 1 + static_cast<int>(rng.index(2));
    int h = 3 + static_cast<int>(rng.index(3));
    int wdt = 3 + static_cast<int>(rng.index(3));
    int k = 2 + static_cast<int>(rng.index(2));
    int pad = static_cast<int>(rng.index(2));
    int oh = h + 2 * pad - k + 1, ow = wdt + 2 * pad - k + 1;
    Tensor packed = random_tensor(rng, {c * h * wdt + fch * c * k * k}, -1.5, 1.5);
    Tensor w = random_tensor(rng, {fch, oh, ow}, -1.0, 1.0);
    auto f = [&](const Tensor& x) {
        Tensor img = slice_as(x, 0, {c, h, wdt});
        Tensor ker = slice_as(x, static_cast<long>(c) * h * wdt, {fch, c, k, k});
        return weighted_sum(conv2d(img, ker, pad), w);
    };
    return finite_difference_check(f, packed, 1e-6, reg);
}

inline double conv_transpose2d_instance(Rng& rng, const PullbackRegistry* reg) {
    int c = 1 + static_cast<int>(rng.index(2));
    int fch = 1 + static_cast<int>(rng.index(2));
    int h = 2 + static_cast<int>(rng.index(3));
    int wdt = 2 + static_cast<int>(rng.index(3));
    int k = 3 + static_cast<int>(rng.index(2));
    int pad = static_cast<int>(rng.index(2));
    int oh = (h - 1) * 2 + k - 2 * pad, ow = (wdt - 1) * 2 + k - 2 * pad;
    Tensor packed = random_tensor(rng, {c * h * wdt + c * fch * k * k}, -1.5, 1.5);
    Tensor w = random_tensor(rng, {fch, oh, ow}, -1.0, 1.0);
    auto f = [&](const Tensor& x) {
        Tensor img = slice_as(x, 0, {c, h, wdt});
        Tensor ker = slice_as(x, static_cast<long>(c) * h * wdt, {c, fch, k, k});
        return weighted_sum(conv_transpose2d(img, ker, pad), w);
    };
    return finite_difference_check(f, packed, 1e-6, reg);
}

inline double sparse_assemble_instance(Rng& rng, const PullbackRegistry* reg) {
    int n = 4 + static_cast<int>(rng.index(4));
    int m = 8 + static_cast<int>(rng.index(8));
    std::vector<int> rows, cols;
    for (int i = 0; i < m; ++i) {
        rows.push_back(static_cast<int>(rng.index(n)));
        cols.push_back(static_cast<int>(rng.index(n)));
    }
    rows.push_back(rows[0]);  // guaranteed duplicate position
    cols.push_back(cols[0]);
    m += 1;
    Tensor packed = random_tensor(rng, {m}, -2.0, 2.0);
    auto f = [&](const Tensor& x) {
        TripletList t;
        t.rows = rows;
        t.cols = cols;
        t.n = n;
        t.vals = x;
        SparseMatrix k = assemble_sparse(t);
        Tensor w = Tensor::zeros({static_cast<int>(k.nnz())});
        Rng wrng(1234);  // fixed head weights per pattern
        for (double& v : w.data) v = wrng.uniform(-1.0, 1.0);
        return weighted_sum(k.vals, w);
    };
    return finite_difference_check(f, packed, 1e-6, reg);
}

/// Random banded SPD system solved end-to-end through assemble and solve,
/// differentiating both the matrix values and the load. Symmetric pairs
/// share one packed coordinate so probes stay symmetric.
inline double sparse_solve_instance(Rng& rng, const PullbackRegistry* reg) {
    int n = 6 + static_cast<int>(rng.index(4));
    std::vector<int> rows, cols;
    std::vector<long> vmap;  // triplet -> packed coordinate
    long nparam = 0;
    for (int i = 0; i < n; ++i) {  // diagonal
        rows.push_back(i);
        cols.push_back(i);
        vmap.push_back(nparam++);
    }
    for (int band = 1; band <= 2; ++band)
        for (int i = 0; i + band < n; ++i) {
            long id = nparam++;
            rows.push_back(i);
            cols.push_back(i + band);
            vmap.push_back(id);
            rows.push_back(i + band);
            cols.push_back(i);
            vmap.push_back(id);
        }
    long nload = n;
    Tensor packed = Tensor::zeros({static_cast<int>(nparam + nload)});
    for (int i = 0; i < n; ++i) packed.data[i] = 6.0 + rng.uniform(0.0, 1.0);  // dominant diagonal
    for (long i = n; i < nparam; ++i) packed.data[i] = rng.uniform(-1.0, 1.0);
    for (long i = nparam; i < nparam + nload; ++i) packed.data[i] = rng.uniform(-1.0, 1.0);

    std::vector<int> free;
    for (int d = 1; d < n; ++d) free.push_back(d);  // dof 0 fixed
    Tensor w = random_tensor(rng, {n}, -1.0, 1.0);
    auto vmap_ptr = std::make_shared<const std::vector<long>>(vmap);
    auto f = [&](const Tensor& x) {
        TripletList t;
        t.rows = rows;
        t.cols = cols;
        t.n = n;
        t.vals = gather(x, vmap_ptr);
        SparseMatrix k = assemble_sparse(t);
        Tensor load = slice_as(x, nparam, {n});
        Tensor u = solve(k, load, free);
        return weighted_sum(u, w);
    };
    return finite_difference_check(f, packed, 1e-6, reg);
}

/// Flat view of all generator parameters, and the inverse.
inline Tensor pack_params(const GeneratorParams& p) {
    Tensor flat = Tensor::zeros({static_cast<int>(p.count())});
    long off = 0;
    for (const Tensor* t : p.tensors()) {
        std::copy(t->data.begin(), t->data.end(), flat.data.begin() + off);
        off += t->numel();
    }
    return flat;
}

inline GeneratorParams unpack_params(const Tensor& flat, const GeneratorParams& like) {
    GeneratorParams p = like;
    long off = 0;
    for (Tensor* t : p.tensors()) {
        *t = slice_as(flat, off, t->shape);
        off += t->numel();
    }
    return p;
}

}  // namespace checks_detail

/// End-to-end gradient of the objective with respect to the generator
/// weights on a small half-MBB problem. The difference probes re-solve the
/// mass-projection offset, so this validates the implicit treatment of the
/// constraint along with every other pullback in the chain.
inline GradCheckResult theta_gradient_check(std::uint64_t seed, int n_coords = 25) {
    ProblemSpec pr = make_problem("mbb", 8, 4, 0.3, 3.0);
    Mesh mesh = pr.mesh();
    Material mat = pr.material();
    std::vector<int> free = pr.free_dofs();
    const double beta = 5.0;

    GeneratorParams params = init_params(pr.nx, pr.ny, seed);
    SeedVector seedvec = make_seed_vector(seed ^ 0xd1b54a32d192ed03ULL, params.seed_len);
    Tensor packed = checks_detail::pack_params(params);

    auto loss_at = [&](const Tensor& theta) {
        GeneratorParams p = checks_detail::unpack_params(theta, params);
        Tensor raw = generate_raw(p, seedvec);
        Tensor x = project_mass(raw, pr.volfrac, beta);
        Tensor u = displacements(mesh, mat, x, pr.fixed_dofs, pr.load_cases[0].forces);
        return objective_displacement(u, pr);
    };

    Tape tape;
    Tensor theta = tape.leaf(packed.detached());
    GradientMap gm = backward(loss_at(theta));
    const Tensor& ad = gm.grad(theta);

    Rng rng(seed + 17);
    const double h = 1e-5;  // deep pipeline: larger step keeps probe roundoff small
    GradCheckResult res;
    res.name = "theta_end_to_end";
    res.threshold = 1e-4;
    res.instances = n_coords;
    for (int c = 0; c < n_coords; ++c) {
        long i = rng.index(packed.numel());
        Tensor tp = packed.detached(), tm = packed.detached();
        tp.data[static_cast<size_t>(i)] += h;
        tm.data[static_cast<size_t>(i)] -= h;
        double central = (loss_at(tp).value() - loss_at(tm).value()) / (2.0 * h);
        double err = std::fabs(ad.data[static_cast<size_t>(i)] - central) /
                     std::max(1.0, std::fabs(central));
        res.max_rel_err = std::max(res.max_rel_err, err);
    }
    res.passed = res.max_rel_err <= res.threshold;
    return res;
}

/// One explicit gradient step along the full weight gradient must decrease
/// the objective (offset re-solved after the step).
inline GradCheckResult theta_descent_check(std::uint64_t seed) {
    ProblemSpec pr = make_problem("mbb", 8, 4, 0.3, 3.0);
    Mesh mesh = pr.mesh();
    Material mat = pr.material();
    const double beta = 5.0;

    GeneratorParams params = init_params(pr.nx, pr.ny, seed);
    SeedVector seedvec = make_seed_vector(seed ^ 0xd1b54a32d192ed03ULL, params.seed_len);

    auto loss_full = [&](const GeneratorParams& p) {
        Tensor raw = generate_raw(p, seedvec);
        Tensor x = project_mass(raw, pr.volfrac, beta);
        Tensor u = displacements(mesh, mat, x, pr.fixed_dofs, pr.load_cases[0].forces);
        return objective_displacement(u, pr).value();
    };

    Tape tape;
    GeneratorParams tracked = track(tape, params);
    Tensor raw = generate_raw(tracked, seedvec);
    Tensor x = project_mass(raw, pr.volfrac, beta);
    Tensor u = displacements(mesh, mat, x, pr.fixed_dofs, pr.load_cases[0].forces);
    Tensor loss = objective_displacement(u, pr);
    GradientMap gm = backward(loss);

    double gmax = 0.0;
    for (const Tensor* t : tracked.tensors())
        if (gm.has(*t))
            for (double v : gm.grad(*t).data) gmax = std::max(gmax, std::fabs(v));

    GeneratorParams stepped = params;
    auto live = tracked.tensors();
    auto dst = stepped.tensors();
    const double step = 1e-3 / std::max(gmax, 1e-12);
    for (size_t i = 0; i < live.size(); ++i) {
        if (!gm.has(*live[i])) continue;
        const Tensor& g = gm.grad(*live[i]);
        for (long j = 0; j < g.numel(); ++j)
            dst[i]->data[static_cast<size_t>(j)] -= step * g.data[static_cast<size_t>(j)];
    }

    double before = loss.value();
    double after = loss_full(stepped);
    GradCheckResult res;
    res.name = "theta_descent";
    res.threshold = 0.0;
    res.instances = 1;
    res.max_rel_err = after < before ? 0.0 : after - before;
    res.passed = after < before;
    return res;
}

/// Full finite-difference suite: >= 20 random instances per registered
/// pullback (scaled by `scale`), the end-to-end weight gradient on a tiny
/// mesh, the descent validation, and a coverage row confirming that every
/// registered rule was exercised.
inline std::vector<GradCheckResult> run_gradient_checks(
    int scale = 1, std::uint64_t seed = 42,
    const PullbackRegistry* reg = nullptr) {
    using namespace checks_detail;
    if (scale < 1) throw std::invalid_argument("run_gradient_checks: scale must be >= 1");
    ensure_builtin_ops();
    detail::ensure_sparse_ops();
    detail::ensure_generator_ops();
    if (reg == nullptr) reg = &PullbackRegistry::builtin();
    const int n = 20 * scale;

    Rng rng(seed);
    std::vector<GradCheckResult> out;
    auto push = [&](const std::string& name, double thr, const Instance& inst) {
        out.push_back(run_instances(name, thr, n, rng, reg, inst));
    };

    push("add", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return binary_instance(r, rg, [](const Tensor& a, const Tensor& b) { return add(a, b); },
                               -2, 2, -2, 2);
    });
    push("sub", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return binary_instance(r, rg, [](const Tensor& a, const Tensor& b) { return sub(a, b); },
                               -2, 2, -2, 2);
    });
    push("mul", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return binary_instance(r, rg, [](const Tensor& a, const Tensor& b) { return mul(a, b); },
                               -2, 2, -2, 2);
    });
    push("div", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return binary_instance(r, rg, [](const Tensor& a, const Tensor& b) { return div(a, b); },
                               -2, 2, -2, 2, /*keep_b_away_from_zero=*/true);
    });
    push("smul", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        double c = r.uniform(-2.0, 2.0);
        return unary_instance(r, rg, [c](const Tensor& t) { return smul(c, t); }, -2, 2);
    });
    push("pow", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        const double exps[4] = {1.0, 1.5, 2.0, 3.0};
        double p = exps[r.index(4)];
        return unary_instance(r, rg, [p](const Tensor& t) { return pow_elem(t, p); }, 0.2, 2.0);
    });
    push("tanh", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) { return tanh(t); }, -2, 2);
    });
    push("sigmoid", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) { return sigmoid(t); }, -2, 2);
    });
    push("relu", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) { return relu(t); }, -2, 2, 0.05);
    });
    push("abs", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) { return abs(t); }, -2, 2, 0.05);
    });
    push("sin", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) { return sin(t); }, -3, 3);
    });
    push("cos", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) { return cos(t); }, -3, 3);
    });
    push("sum", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) { return sum(t); }, -2, 2);
    });
    push("mean", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) { return mean(t); }, -2, 2);
    });
    push("matmul", 1e-6, matmul_instance);
    push("gather", 1e-6, gather_instance);
    push("reshape", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        return unary_instance(r, rg, [](const Tensor& t) {
            return reshape(t, {1, t.shape[0]});
        }, -2, 2);
    });
    push("dense", 1e-6, dense_instance);
    push("bias_add", 1e-6, bias_add_instance);
    push("conv2d", 1e-6, conv2d_instance);
    push("conv_transpose2d", 1e-6, conv_transpose2d_instance);
    push("sparse_assemble", 1e-8, sparse_assemble_instance);
    push("sparse_solve", 1e-6, sparse_solve_instance);
    push("mass_project", 1e-6, [](Rng& r, const PullbackRegistry* rg) {
        int m = 6 + static_cast<int>(r.index(10));
        double vf = r.uniform(0.2, 0.8);
        double beta = r.uniform(2.0, 6.0);
        Tensor raw = random_tensor(r, {m}, -1.0, 1.0);
        Tensor w = random_tensor(r, {m}, -1.0, 1.0);
        auto f = [&](const Tensor& t) { return weighted_sum(project_mass(t, vf, beta), w); };
        return finite_difference_check(f, raw, 1e-6, rg);
    });

    out.push_back(theta_gradient_check(seed + 1));
    out.push_back(theta_descent_check(seed + 2));

    // Coverage: every registered rule must appear among the checks above.
    std::set<std::string> covered;
    for (const auto& r : out) covered.insert(r.name);
    GradCheckResult cov;
    cov.name = "pullback_coverage";
    cov.threshold = 0.0;
    cov.passed = true;
    for (const std::string& op : reg->op_ids()) {
        ++cov.instances;
        if (!covered.count(op)) {
            cov.passed = false;
            cov.max_rel_err += 1.0;  // counts uncovered rules
        }
    }
    out.push_back(cov);
    return out;
}

}  // namespace topograd
