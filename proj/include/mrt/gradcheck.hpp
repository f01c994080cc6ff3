#pragma once

#include <cmath>
#include <functional>

#include "mrt/graph.hpp"
#include "mrt/ops.hpp"

namespace mrt {

// f builds a scalar from x inside the given graph. When x is passed as an
// untracked constant the same function evaluates graph-free, which is what
// the central-difference side below relies on.
using ScalarFn = std::function<Tensor(GradGraph&, const Tensor&)>;

// Central finite differences against the analytic gradient. Returns
// max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
inline double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-6) {
    Tensor analytic;
    {
        GradGraph g;
        Tensor xt = g.leaf(x);
        Tensor y = f(g, xt);
        if (y.numel() != 1) throw contract_error("grad_check: function is not scalar-valued");
        g.backward(y);
        analytic = g.grad(xt);
    }

    const int64_t n = x.numel();
    double worst = 0.0;
    std::vector<double> base(x.data(), x.data() + n);
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> lo = base, hi = base;
        lo[static_cast<size_t>(i)] -= h;
        hi[static_cast<size_t>(i)] += h;
        GradGraph g; // untracked evals, nothing recorded
        const double flo = f(g, Tensor::from(x.shape(), std::move(lo))).item();
        const double fhi = f(g, Tensor::from(x.shape(), std::move(hi))).item();
        const double numeric = (fhi - flo) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace mrt
