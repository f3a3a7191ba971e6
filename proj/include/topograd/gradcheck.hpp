#pragma once

#include "topograd/ops.hpp"

namespace topograd {

/// Compare the reverse-mode gradient of a scalar function against central
/// finite differences. Returns the max over coordinates of
/// |AD - central| / max(1, |central|).
///
/// `f` is called once with a tracked tensor (AD path) and twice per
/// coordinate with plain constants (difference probes), so it must accept
/// both. Throws if any probe produces a non-finite value.
inline double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                      const Tensor& x, double h,
                                      const PullbackRegistry* registry = nullptr) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: h must be positive");
    ensure_builtin_ops();
    if (registry == nullptr) registry = &PullbackRegistry::builtin();

    Tape tape(registry);
    Tensor xv = tape.leaf(x.detached());
    Tensor y = f(xv);
    if (y.numel() != 1)
        throw std::invalid_argument("finite_difference_check: f must be scalar-valued");
    if (!all_finite(y))
        throw std::runtime_error("finite_difference_check: non-finite value at base point");

    Tensor ad = Tensor::zeros(x.shape);  // constant f: zero gradient
    if (y.tracked()) {
        GradientMap gm = backward(y);
        if (gm.has(xv)) ad = gm.grad(xv).detached();
    }

    double max_err = 0.0;
    for (long i = 0; i < x.numel(); ++i) {
        Tensor xp = x.detached();
        Tensor xm = x.detached();
        xp.data[i] += h;
        xm.data[i] -= h;
        double yp = f(xp).value();
        double ym = f(xm).value();
        if (!std::isfinite(yp) || !std::isfinite(ym))
            throw std::runtime_error("finite_difference_check: non-finite value at probe " +
                                     std::to_string(i));
        double central = (yp - ym) / (2.0 * h);
        double err = std::fabs(ad.data[i] - central) / std::max(1.0, std::fabs(central));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace topograd
