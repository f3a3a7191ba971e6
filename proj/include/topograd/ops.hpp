#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "topograd/tape.hpp"

namespace topograd {

void ensure_builtin_ops();

namespace detail {

inline Tape* tape_of(std::initializer_list<const Tensor*> ins) {
    Tape* t = nullptr;
    for (const Tensor* p : ins) {
        if (!p->tracked()) continue;
        if (t != nullptr && t != p->tape)
            throw std::invalid_argument("operands belong to different tapes");
        t = p->tape;
    }
    return t;
}

/// Emit a node for `op` if any input is tracked; otherwise pass the value
/// through as a constant.
inline Tensor record(const char* op, std::initializer_list<const Tensor*> ins, Tensor out,
                     std::vector<Tensor> saved = {}, std::vector<long> iattrs = {},
                     std::vector<double> dattrs = {}, std::shared_ptr<void> ctx = nullptr) {
    ensure_builtin_ops();
    Tape* tape = tape_of(ins);
    if (tape == nullptr) return out;
    TapeNode n;
    n.op = op;
    for (const Tensor* p : ins) n.inputs.push_back(p->tracked() ? p->node : -1);
    n.saved = std::move(saved);
    n.iattrs = std::move(iattrs);
    n.dattrs = std::move(dattrs);
    n.ctx = std::move(ctx);
    n.out_shape = out.shape;
    int id = tape->emit(std::move(n));
    out.tape = tape;
    out.node = id;
    return out;
}

inline std::vector<int> shape_from_iattrs(const std::vector<long>& ia, size_t from = 0) {
    std::vector<int> s;
    for (size_t i = from; i < ia.size(); ++i) s.push_back(static_cast<int>(ia[i]));
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction primitives
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    Tensor out = a.detached();
    for (long i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
    return detail::record("add", {&a, &b}, std::move(out));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Tensor out = a.detached();
    for (long i = 0; i < out.numel(); ++i) out.data[i] -= b.data[i];
    return detail::record("sub", {&a, &b}, std::move(out));
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    Tensor out = a.detached();
    for (long i = 0; i < out.numel(); ++i) out.data[i] *= b.data[i];
    return detail::record("mul", {&a, &b}, std::move(out), {a.detached(), b.detached()});
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    Tensor out = a.detached();
    for (long i = 0; i < out.numel(); ++i) out.data[i] /= b.data[i];
    return detail::record("div", {&a, &b}, std::move(out), {a.detached(), b.detached()});
}

/// Scalar constant times tensor.
inline Tensor smul(double c, const Tensor& a) {
    Tensor out = a.detached();
    for (double& v : out.data) v *= c;
    return detail::record("smul", {&a}, std::move(out), {}, {}, {c});
}

/// Elementwise x^p for a fixed real exponent.
inline Tensor pow_elem(const Tensor& a, double p) {
    Tensor out = a.detached();
    for (double& v : out.data) v = std::pow(v, p);
    return detail::record("pow", {&a}, std::move(out), {a.detached()}, {}, {p});
}

inline Tensor tanh(const Tensor& a) {
    Tensor out = a.detached();
    for (double& v : out.data) v = std::tanh(v);
    Tensor y = out.detached();
    return detail::record("tanh", {&a}, std::move(out), {std::move(y)});
}

inline Tensor sigmoid(const Tensor& a) {
    Tensor out = a.detached();
    for (double& v : out.data) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    Tensor y = out.detached();
    return detail::record("sigmoid", {&a}, std::move(out), {std::move(y)});
}

inline Tensor relu(const Tensor& a) {
    Tensor out = a.detached();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return detail::record("relu", {&a}, std::move(out), {a.detached()});
}

inline Tensor abs(const Tensor& a) {
    Tensor out = a.detached();
    for (double& v : out.data) v = std::fabs(v);
    return detail::record("abs", {&a}, std::move(out), {a.detached()});
}

inline Tensor sin(const Tensor& a) {
    Tensor out = a.detached();
    for (double& v : out.data) v = std::sin(v);
    return detail::record("sin", {&a}, std::move(out), {a.detached()});
}

inline Tensor cos(const Tensor& a) {
    Tensor out = a.detached();
    for (double& v : out.data) v = std::cos(v);
    return detail::record("cos", {&a}, std::move(out), {a.detached()});
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    std::vector<long> ia(a.shape.begin(), a.shape.end());
    return detail::record("sum", {&a}, Tensor::scalar(s), {}, std::move(ia));
}

inline Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : a.data) s += v;
    std::vector<long> ia(a.shape.begin(), a.shape.end());
    return detail::record("mean", {&a}, Tensor::scalar(s / static_cast<double>(a.numel())),
                          {}, std::move(ia));
}

// ---------------------------------------------------------------------------
// Linear-algebra and structural primitives
// ---------------------------------------------------------------------------

/// C = A * B for 2-D operands.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul: shape mismatch " + Tensor::shape_str(a.shape) +
                                    " vs " + Tensor::shape_str(b.shape));
    int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
            double av = a.data[static_cast<size_t>(i) * k + l];
            for (int j = 0; j < n; ++j)
                out.data[static_cast<size_t>(i) * n + j] += av * b.data[static_cast<size_t>(l) * n + j];
        }
    return detail::record("matmul", {&a, &b}, std::move(out), {a.detached(), b.detached()});
}

/// Select data[idx[k]] over the flattened input. Duplicate indices are
/// allowed; the pullback scatter-adds, so duplicates accumulate.
inline Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<long>> idx) {
    for (long i : *idx)
        if (i < 0 || i >= a.numel())
            throw std::invalid_argument("gather: index " + std::to_string(i) +
                                        " out of range for " + Tensor::shape_str(a.shape));
    Tensor out = Tensor::zeros({static_cast<int>(idx->size())});
    for (size_t k = 0; k < idx->size(); ++k) out.data[k] = a.data[static_cast<size_t>((*idx)[k])];
    std::vector<long> ia(a.shape.begin(), a.shape.end());
    return detail::record("gather", {&a}, std::move(out), {}, std::move(ia), {},
                          std::const_pointer_cast<std::vector<long>>(idx));
}

inline Tensor gather(const Tensor& a, std::vector<long> idx) {
    return gather(a, std::make_shared<const std::vector<long>>(std::move(idx)));
}

inline Tensor gather(const Tensor& a, long idx) { return gather(a, std::vector<long>{idx}); }

inline Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
    if (Tensor::numel_of(new_shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + Tensor::shape_str(a.shape) +
                                    " as " + Tensor::shape_str(new_shape));
    Tensor out(new_shape, a.data);
    std::vector<long> ia(a.shape.begin(), a.shape.end());
    return detail::record("reshape", {&a}, std::move(out), {}, std::move(ia));
}

/// Dense affine layer y = W x + b with W (m,n), x (n), b (m).
inline Tensor dense(const Tensor& w, const Tensor& x, const Tensor& b) {
    if (w.ndim() != 2 || x.ndim() != 1 || b.ndim() != 1 || w.shape[1] != x.shape[0] ||
        w.shape[0] != b.shape[0])
        throw std::invalid_argument("dense: shape mismatch W" + Tensor::shape_str(w.shape) +
                                    " x" + Tensor::shape_str(x.shape) + " b" +
                                    Tensor::shape_str(b.shape));
    int m = w.shape[0], n = w.shape[1];
    Tensor out = b.detached();
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += w.data[static_cast<size_t>(i) * n + j] * x.data[j];
        out.data[i] += s;
    }
    return detail::record("dense", {&w, &x, &b}, std::move(out), {w.detached(), x.detached()});
}

/// Per-channel bias: y[c,h,w] = x[c,h,w] + b[c].
inline Tensor bias_add(const Tensor& x, const Tensor& b) {
    if (x.ndim() != 3 || b.ndim() != 1 || b.shape[0] != x.shape[0])
        throw std::invalid_argument("bias_add: shape mismatch " + Tensor::shape_str(x.shape) +
                                    " vs " + Tensor::shape_str(b.shape));
    Tensor out = x.detached();
    long hw = static_cast<long>(x.shape[1]) * x.shape[2];
    for (int c = 0; c < x.shape[0]; ++c)
        for (long i = 0; i < hw; ++i) out.data[c * hw + i] += b.data[c];
    return detail::record("bias_add", {&x, &b}, std::move(out));
}

/// 2-D cross-correlation, stride 1. x (C,H,W), kernel (F,C,kh,kw),
/// zero padding `pad` on all spatial sides.
inline Tensor conv2d(const Tensor& x, const Tensor& k, int pad) {
    if (x.ndim() != 3 || k.ndim() != 4 || k.shape[1] != x.shape[0])
        throw std::invalid_argument("conv2d: shape mismatch x" + Tensor::shape_str(x.shape) +
                                    " k" + Tensor::shape_str(k.shape));
    int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    int F = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    int oh = H + 2 * pad - kh + 1, ow = W + 2 * pad - kw + 1;
    if (pad < 0 || oh < 1 || ow < 1)
        throw std::invalid_argument("conv2d: kernel " + Tensor::shape_str(k.shape) +
                                    " too large for input " + Tensor::shape_str(x.shape) +
                                    " with pad " + std::to_string(pad));
    Tensor out = Tensor::zeros({F, oh, ow});
    for (int f = 0; f < F; ++f)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double s = 0.0;
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox + kx - pad;
                            if (ix < 0 || ix >= W) continue;
                            s += k.data[((static_cast<size_t>(f) * C + c) * kh + ky) * kw + kx] *
                                 x.data[(static_cast<size_t>(c) * H + iy) * W + ix];
                        }
                    }
                    out.data[(static_cast<size_t>(f) * oh + oy) * ow + ox] += s;
                }
    return detail::record("conv2d", {&x, &k}, std::move(out), {x.detached(), k.detached()},
                          {pad});
}

/// 2-D transposed convolution, stride 2. x (C,H,W), kernel (C,F,kh,kw).
/// Output spatial size (H-1)*2 + kh - 2*pad; with kh = 4, pad = 1 the size
/// exactly doubles. The pullback is the exact linear transpose of this map.
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& k, int pad) {
    if (x.ndim() != 3 || k.ndim() != 4 || k.shape[0] != x.shape[0])
        throw std::invalid_argument("conv_transpose2d: shape mismatch x" +
                                    Tensor::shape_str(x.shape) + " k" +
                                    Tensor::shape_str(k.shape));
    constexpr int stride = 2;
    int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    int F = k.shape[1], kh = k.shape[2], kw = k.shape[3];
    int oh = (H - 1) * stride + kh - 2 * pad, ow = (W - 1) * stride + kw - 2 * pad;
    if (pad < 0 || oh < 1 || ow < 1)
        throw std::invalid_argument("conv_transpose2d: invalid output size for input " +
                                    Tensor::shape_str(x.shape) + " kernel " +
                                    Tensor::shape_str(k.shape) + " pad " + std::to_string(pad));
    Tensor out = Tensor::zeros({F, oh, ow});
    for (int c = 0; c < C; ++c)
        for (int iy = 0; iy < H; ++iy)
            for (int ix = 0; ix < W; ++ix) {
                double xv = x.data[(static_cast<size_t>(c) * H + iy) * W + ix];
                for (int f = 0; f < F; ++f)
                    for (int ky = 0; ky < kh; ++ky) {
                        int oy = iy * stride + ky - pad;
                        if (oy < 0 || oy >= oh) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ox = ix * stride + kx - pad;
                            if (ox < 0 || ox >= ow) continue;
                            out.data[(static_cast<size_t>(f) * oh + oy) * ow + ox] +=
                                k.data[((static_cast<size_t>(c) * F + f) * kh + ky) * kw + kx] * xv;
                        }
                    }
            }
    return detail::record("conv_transpose2d", {&x, &k}, std::move(out),
                          {x.detached(), k.detached()}, {pad});
}

// ---------------------------------------------------------------------------
// Pullback rules
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor scale_like(const Tensor& g, double c) {
    Tensor out = g.detached();
    for (double& v : out.data) v *= c;
    return out;
}

inline void register_builtin_pullbacks(PullbackRegistry& r) {
    r.register_pullback("add", [](const TapeNode&, const Tensor& g) {
        return std::vector<Tensor>{g.detached(), g.detached()};
    });

    r.register_pullback("sub", [](const TapeNode&, const Tensor& g) {
        return std::vector<Tensor>{g.detached(), scale_like(g, -1.0)};
    });

    r.register_pullback("mul", [](const TapeNode& n, const Tensor& g) {
        const Tensor& a = n.saved[0];
        const Tensor& b = n.saved[1];
        Tensor ga = g.detached(), gb = g.detached();
        for (long i = 0; i < g.numel(); ++i) {
            ga.data[i] *= b.data[i];
            gb.data[i] *= a.data[i];
        }
        return std::vector<Tensor>{std::move(ga), std::move(gb)};
    });

    r.register_pullback("div", [](const TapeNode& n, const Tensor& g) {
        const Tensor& a = n.saved[0];
        const Tensor& b = n.saved[1];
        Tensor ga = g.detached(), gb = g.detached();
        for (long i = 0; i < g.numel(); ++i) {
            ga.data[i] /= b.data[i];
            gb.data[i] *= -a.data[i] / (b.data[i] * b.data[i]);
        }
        return std::vector<Tensor>{std::move(ga), std::move(gb)};
    });

    r.register_pullback("smul", [](const TapeNode& n, const Tensor& g) {
        return std::vector<Tensor>{scale_like(g, n.dattrs[0])};
    });

    r.register_pullback("pow", [](const TapeNode& n, const Tensor& g) {
        const Tensor& x = n.saved[0];
        double p = n.dattrs[0];
        Tensor gx = g.detached();
        for (long i = 0; i < g.numel(); ++i) gx.data[i] *= p * std::pow(x.data[i], p - 1.0);
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("tanh", [](const TapeNode& n, const Tensor& g) {
        const Tensor& y = n.saved[0];
        Tensor gx = g.detached();
        for (long i = 0; i < g.numel(); ++i) gx.data[i] *= 1.0 - y.data[i] * y.data[i];
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("sigmoid", [](const TapeNode& n, const Tensor& g) {
        const Tensor& y = n.saved[0];
        Tensor gx = g.detached();
        for (long i = 0; i < g.numel(); ++i) gx.data[i] *= y.data[i] * (1.0 - y.data[i]);
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("relu", [](const TapeNode& n, const Tensor& g) {
        const Tensor& x = n.saved[0];
        Tensor gx = g.detached();
        for (long i = 0; i < g.numel(); ++i)
            if (x.data[i] <= 0.0) gx.data[i] = 0.0;  // subgradient 0 at the kink
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("abs", [](const TapeNode& n, const Tensor& g) {
        const Tensor& x = n.saved[0];
        Tensor gx = g.detached();
        for (long i = 0; i < g.numel(); ++i) {
            double s = x.data[i] > 0.0 ? 1.0 : (x.data[i] < 0.0 ? -1.0 : 0.0);
            gx.data[i] *= s;
        }
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("sin", [](const TapeNode& n, const Tensor& g) {
        const Tensor& x = n.saved[0];
        Tensor gx = g.detached();
        for (long i = 0; i < g.numel(); ++i) gx.data[i] *= std::cos(x.data[i]);
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("cos", [](const TapeNode& n, const Tensor& g) {
        const Tensor& x = n.saved[0];
        Tensor gx = g.detached();
        for (long i = 0; i < g.numel(); ++i) gx.data[i] *= -std::sin(x.data[i]);
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("sum", [](const TapeNode& n, const Tensor& g) {
        return std::vector<Tensor>{Tensor::full(shape_from_iattrs(n.iattrs), g.data[0])};
    });

    r.register_pullback("mean", [](const TapeNode& n, const Tensor& g) {
        std::vector<int> shp = shape_from_iattrs(n.iattrs);
        double scale = 1.0 / static_cast<double>(Tensor::numel_of(shp));
        return std::vector<Tensor>{Tensor::full(std::move(shp), g.data[0] * scale)};
    });

    r.register_pullback("matmul", [](const TapeNode& n, const Tensor& g) {
        const Tensor& a = n.saved[0];
        const Tensor& b = n.saved[1];
        int m = a.shape[0], k = a.shape[1], nn = b.shape[1];
        Tensor ga = Tensor::zeros({m, k});
        Tensor gb = Tensor::zeros({k, nn});
        // ga = g * b^T ; gb = a^T * g
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nn; ++j) {
                double gv = g.data[static_cast<size_t>(i) * nn + j];
                for (int l = 0; l < k; ++l) {
                    ga.data[static_cast<size_t>(i) * k + l] += gv * b.data[static_cast<size_t>(l) * nn + j];
                    gb.data[static_cast<size_t>(l) * nn + j] += a.data[static_cast<size_t>(i) * k + l] * gv;
                }
            }
        return std::vector<Tensor>{std::move(ga), std::move(gb)};
    });

    r.register_pullback("gather", [](const TapeNode& n, const Tensor& g) {
        const auto& idx = *std::static_pointer_cast<const std::vector<long>>(n.ctx);
        Tensor gx = Tensor::zeros(shape_from_iattrs(n.iattrs));
        for (size_t k = 0; k < idx.size(); ++k) gx.data[static_cast<size_t>(idx[k])] += g.data[k];
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("reshape", [](const TapeNode& n, const Tensor& g) {
        Tensor gx(shape_from_iattrs(n.iattrs), g.data);
        return std::vector<Tensor>{std::move(gx)};
    });

    r.register_pullback("dense", [](const TapeNode& n, const Tensor& g) {
        const Tensor& w = n.saved[0];
        const Tensor& x = n.saved[1];
        int m = w.shape[0], nn = w.shape[1];
        Tensor gw = Tensor::zeros({m, nn});
        Tensor gx = Tensor::zeros({nn});
        for (int i = 0; i < m; ++i) {
            double gi = g.data[i];
            for (int j = 0; j < nn; ++j) {
                gw.data[static_cast<size_t>(i) * nn + j] += gi * x.data[j];
                gx.data[j] += w.data[static_cast<size_t>(i) * nn + j] * gi;
            }
        }
        return std::vector<Tensor>{std::move(gw), std::move(gx), g.detached()};
    });

    r.register_pullback("bias_add", [](const TapeNode& n, const Tensor& g) {
        int C = n.out_shape[0];
        long hw = static_cast<long>(n.out_shape[1]) * n.out_shape[2];
        Tensor gb = Tensor::zeros({C});
        for (int c = 0; c < C; ++c)
            for (long i = 0; i < hw; ++i) gb.data[c] += g.data[c * hw + i];
        return std::vector<Tensor>{g.detached(), std::move(gb)};
    });

    r.register_pullback("conv2d", [](const TapeNode& n, const Tensor& g) {
        const Tensor& x = n.saved[0];
        const Tensor& k = n.saved[1];
        int pad = static_cast<int>(n.iattrs[0]);
        int C = x.shape[0], H = x.shape[1], W = x.shape[2];
        int F = k.shape[0], kh = k.shape[2], kw = k.shape[3];
        int oh = n.out_shape[1], ow = n.out_shape[2];
        Tensor gx = Tensor::zeros(x.shape);
        Tensor gk = Tensor::zeros(k.shape);
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < C; ++c)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        double gv = g.data[(static_cast<size_t>(f) * oh + oy) * ow + ox];
                        for (int ky = 0; ky < kh; ++ky) {
                            int iy = oy + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                int ix = ox + kx - pad;
                                if (ix < 0 || ix >= W) continue;
                                size_t ki = ((static_cast<size_t>(f) * C + c) * kh + ky) * kw + kx;
                                size_t xi = (static_cast<size_t>(c) * H + iy) * W + ix;
                                gx.data[xi] += k.data[ki] * gv;
                                gk.data[ki] += x.data[xi] * gv;
                            }
                        }
                    }
        return std::vector<Tensor>{std::move(gx), std::move(gk)};
    });

    r.register_pullback("conv_transpose2d", [](const TapeNode& n, const Tensor& g) {
        const Tensor& x = n.saved[0];
        const Tensor& k = n.saved[1];
        int pad = static_cast<int>(n.iattrs[0]);
        constexpr int stride = 2;
        int C = x.shape[0], H = x.shape[1], W = x.shape[2];
        int F = k.shape[1], kh = k.shape[2], kw = k.shape[3];
        int oh = n.out_shape[1], ow = n.out_shape[2];
        Tensor gx = Tensor::zeros(x.shape);
        Tensor gk = Tensor::zeros(k.shape);
        for (int c = 0; c < C; ++c)
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < W; ++ix) {
                    size_t xi = (static_cast<size_t>(c) * H + iy) * W + ix;
                    double xv = x.data[xi];
                    double acc = 0.0;
                    for (int f = 0; f < F; ++f)
                        for (int ky = 0; ky < kh; ++ky) {
                            int oy = iy * stride + ky - pad;
                            if (oy < 0 || oy >= oh) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                int ox = ix * stride + kx - pad;
                                if (ox < 0 || ox >= ow) continue;
                                size_t ki = ((static_cast<size_t>(c) * F + f) * kh + ky) * kw + kx;
                                double gv = g.data[(static_cast<size_t>(f) * oh + oy) * ow + ox];
                                acc += k.data[ki] * gv;
                                gk.data[ki] += xv * gv;
                            }
                        }
                    gx.data[xi] = acc;
                }
        return std::vector<Tensor>{std::move(gx), std::move(gk)};
    });
}

}  // namespace detail

inline void ensure_builtin_ops() {
    static const bool once = [] {
        detail::register_builtin_pullbacks(PullbackRegistry::builtin());
        return true;
    }();
    (void)once;
}

/// Populate a registry with every built-in rule (for custom registries in
/// tests; the built-in registry is populated automatically on first use).
inline void register_builtin_pullbacks(PullbackRegistry& r) {
    detail::register_builtin_pullbacks(r);
}

}  // namespace topograd
