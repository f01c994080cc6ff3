#pragma once

// Naive reference implementations the tests check the library against.
// Everything here is deliberately independent of the mrt op code paths:
// plain loops, no graph, no shared helpers.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mrt/rng.hpp"
#include "mrt/tensor.hpp"

namespace oracle {

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int m,
                                  int k, int n) {
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p)
                out[static_cast<size_t>(i * n + j)] +=
                    a[static_cast<size_t>(i * k + p)] * b[static_cast<size_t>(p * n + j)];
    return out;
}

// six nested loops, bounds checked the slow way
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w, int B,
                                  int C, int H, int W, int F, int kh, int kw, int stride, int pad) {
    const int OH = (H + 2 * pad - kh) / stride + 1;
    const int OW = (W + 2 * pad - kw) / stride + 1;
    std::vector<double> out(static_cast<size_t>(B) * F * OH * OW, 0.0);
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int r = 0; r < kh; ++r)
                            for (int s = 0; s < kw; ++s) {
                                const int ih = oh * stride + r - pad;
                                const int iw = ow * stride + s - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x[static_cast<size_t>(((b * C + c) * H + ih) * W + iw)] *
                                       w[static_cast<size_t>(((f * C + c) * kh + r) * kw + s)];
                            }
                    out[static_cast<size_t>(((b * F + f) * OH + oh) * OW + ow)] = acc;
                }
    return out;
}

inline double cross_entropy(const std::vector<double>& logits, const std::vector<int>& labels, int L,
                            int C) {
    double loss = 0.0;
    for (int n = 0; n < L; ++n) {
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(logits[static_cast<size_t>(n * C + c)]);
        const double p = std::exp(logits[static_cast<size_t>(n * C + labels[static_cast<size_t>(n)])]) / z;
        loss += -std::log(p);
    }
    return loss;
}

inline std::vector<double> pairwise(const std::vector<double>& a, int L, int D, double eps) {
    std::vector<double> out(static_cast<size_t>(L) * L, 0.0);
    for (int n = 0; n < L; ++n)
        for (int m = 0; m < L; ++m) {
            if (n == m) continue;
            double ssd = 0.0;
            for (int d = 0; d < D; ++d) {
                const double diff = a[static_cast<size_t>(n * D + d)] - a[static_cast<size_t>(m * D + d)];
                ssd += diff * diff;
            }
            out[static_cast<size_t>(n * L + m)] = std::sqrt(ssd + eps) - std::sqrt(eps);
        }
    return out;
}

// Eq.-style double loop over ordered pairs + lambda * ||theta||^2
inline double distance_preserving(const std::vector<double>& ak, int Dk, const std::vector<double>& akm1,
                                  int Dkm1, int L, const std::vector<double>& theta, double lambda,
                                  double eps) {
    const std::vector<double> dk = pairwise(ak, L, Dk, eps);
    const std::vector<double> dkm1 = pairwise(akm1, L, Dkm1, eps);
    double loss = 0.0;
    for (int n = 0; n < L; ++n)
        for (int m = 0; m < L; ++m) {
            const double diff = dk[static_cast<size_t>(n * L + m)] - dkm1[static_cast<size_t>(n * L + m)];
            loss += diff * diff;
        }
    double reg = 0.0;
    for (double t : theta) reg += t * t;
    return loss + lambda * reg;
}

// Cyclic Jacobi eigensolver for small symmetric matrices; returns
// eigenvalues sorted descending.
inline std::vector<double> sym_eigenvalues(std::vector<double> a, int n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[static_cast<size_t>(p * n + q)] * a[static_cast<size_t>(p * n + q)];
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<size_t>(p * n + q)];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[static_cast<size_t>(p * n + p)];
                const double aqq = a[static_cast<size_t>(q * n + q)];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[static_cast<size_t>(k * n + p)];
                    const double akq = a[static_cast<size_t>(k * n + q)];
                    a[static_cast<size_t>(k * n + p)] = c * akp - s * akq;
                    a[static_cast<size_t>(k * n + q)] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[static_cast<size_t>(p * n + k)];
                    const double aqk = a[static_cast<size_t>(q * n + k)];
                    a[static_cast<size_t>(p * n + k)] = c * apk - s * aqk;
                    a[static_cast<size_t>(q * n + k)] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> vals;
    for (int i = 0; i < n; ++i) vals.push_back(a[static_cast<size_t>(i * n + i)]);
    std::sort(vals.begin(), vals.end(), std::greater<double>());
    return vals;
}

inline mrt::Tensor random_tensor(mrt::Shape shape, mrt::Rng& rng, double scale = 1.0) {
    mrt::Tensor t = mrt::Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.mutable_data()[i] = rng.normal() * scale;
    return t;
}

} // namespace oracle
