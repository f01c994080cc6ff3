#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mrt/graph.hpp"
#include "mrt/tensor.hpp"

// Differentiable tensor ops. Every op computes its value eagerly; a graph
// node is recorded only when at least one input is tracked, so the same
// functions serve both training and graph-free evaluation.

namespace mrt::ops {

namespace detail {

inline std::vector<int> input_ids(std::initializer_list<const Tensor*> ts) {
    std::vector<int> ids;
    for (const Tensor* t : ts) ids.push_back(t->node());
    return ids;
}

inline bool any_tracked(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->tracked()) return true;
    return false;
}

} // namespace detail

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

inline void matmul_value(const double* a, const double* b, double* out, int64_t m, int64_t k, int64_t n) {
    std::fill(out, out + m * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            double* orow = out + i * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

inline Tensor matmul(GradGraph& g, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw dimension_error("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                              shape_str(b.shape()));
    require_finite(a, "matmul lhs");
    require_finite(b, "matmul rhs");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    matmul_value(a.data(), b.data(), out.mutable_data(), m, k, n);
    if (!detail::any_tracked({&a, &b})) return out;

    return g.emit("matmul", out, detail::input_ids({&a, &b}), {a, b},
                  [a, b, m, k, n](GradGraph& gg, const Tensor& go) {
                      const double* gp = go.data();
                      if (a.tracked()) { // gA = gO * B^T
                          Tensor ga = Tensor::zeros({m, k});
                          double* gap = ga.mutable_data();
                          const double* bp = b.data();
                          for (int64_t i = 0; i < m; ++i)
                              for (int64_t j = 0; j < n; ++j) {
                                  const double gv = gp[i * n + j];
                                  if (gv == 0.0) continue;
                                  for (int64_t p = 0; p < k; ++p) gap[i * k + p] += gv * bp[p * n + j];
                              }
                          gg.accumulate_grad(a.node(), ga);
                      }
                      if (b.tracked()) { // gB = A^T * gO
                          Tensor gb = Tensor::zeros({k, n});
                          double* gbp = gb.mutable_data();
                          const double* ap = a.data();
                          for (int64_t i = 0; i < m; ++i)
                              for (int64_t p = 0; p < k; ++p) {
                                  const double av = ap[i * k + p];
                                  if (av == 0.0) continue;
                                  const double* grow = gp + i * n;
                                  double* brow = gbp + p * n;
                                  for (int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                              }
                          gg.accumulate_grad(b.node(), gb);
                      }
                  });
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation (no kernel flip), x[B,C,H,W] * w[F,C,kh,kw]
// ---------------------------------------------------------------------------

inline Tensor conv2d(GradGraph& g, const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 4 || w.rank() != 4)
        throw dimension_error("conv2d: expected 4-d input and kernel, got " + shape_str(x.shape()) +
                              " and " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw dimension_error("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                              shape_str(w.shape()));
    if (stride < 1) throw contract_error("conv2d: stride must be >= 1");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (kh > H + 2 * pad || kw > W + 2 * pad)
        throw dimension_error("conv2d: kernel larger than padded input");
    if ((H + 2 * pad - kh) % stride != 0 || (W + 2 * pad - kw) % stride != 0)
        throw dimension_error("conv2d: non-integral output size");
    const int64_t OH = (H + 2 * pad - kh) / stride + 1;
    const int64_t OW = (W + 2 * pad - kw) / stride + 1;
    require_finite(x, "conv2d input");
    require_finite(w, "conv2d kernel");

    Tensor out = Tensor::zeros({B, F, OH, OW});
    {
        double* op = out.mutable_data();
        const double* xp = x.data();
        const double* wp = w.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t f = 0; f < F; ++f)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t r = 0; r < kh; ++r)
                        for (int64_t s = 0; s < kw; ++s) {
                            const double wv = wp[((f * C + c) * kh + r) * kw + s];
                            if (wv == 0.0) continue;
                            for (int64_t oh = 0; oh < OH; ++oh) {
                                const int64_t ih = oh * stride + r - pad;
                                if (ih < 0 || ih >= H) continue;
                                const double* xrow = xp + ((b * C + c) * H + ih) * W;
                                double* orow = op + ((b * F + f) * OH + oh) * OW;
                                for (int64_t ow = 0; ow < OW; ++ow) {
                                    const int64_t iw = ow * stride + s - pad;
                                    if (iw < 0 || iw >= W) continue;
                                    orow[ow] += wv * xrow[iw];
                                }
                            }
                        }
    }
    if (!detail::any_tracked({&x, &w})) return out;

    return g.emit("conv2d", out, detail::input_ids({&x, &w}), {x, w},
                  [x, w, stride, pad, B, C, H, W, F, kh, kw, OH, OW](GradGraph& gg, const Tensor& go) {
                      const double* gp = go.data();
                      if (x.tracked()) {
                          Tensor gx = Tensor::zeros(x.shape());
                          double* gxp = gx.mutable_data();
                          const double* wp = w.data();
                          for (int64_t b = 0; b < B; ++b)
                              for (int64_t f = 0; f < F; ++f)
                                  for (int64_t c = 0; c < C; ++c)
                                      for (int64_t r = 0; r < kh; ++r)
                                          for (int64_t s = 0; s < kw; ++s) {
                                              const double wv = wp[((f * C + c) * kh + r) * kw + s];
                                              if (wv == 0.0) continue;
                                              for (int64_t oh = 0; oh < OH; ++oh) {
                                                  const int64_t ih = oh * stride + r - pad;
                                                  if (ih < 0 || ih >= H) continue;
                                                  const double* grow = gp + ((b * F + f) * OH + oh) * OW;
                                                  double* xrow = gxp + ((b * C + c) * H + ih) * W;
                                                  for (int64_t ow = 0; ow < OW; ++ow) {
                                                      const int64_t iw = ow * stride + s - pad;
                                                      if (iw < 0 || iw >= W) continue;
                                                      xrow[iw] += wv * grow[ow];
                                                  }
                                              }
                                          }
                          gg.accumulate_grad(x.node(), gx);
                      }
                      if (w.tracked()) {
                          Tensor gw = Tensor::zeros(w.shape());
                          double* gwp = gw.mutable_data();
                          const double* xp = x.data();
                          for (int64_t b = 0; b < B; ++b)
                              for (int64_t f = 0; f < F; ++f)
                                  for (int64_t c = 0; c < C; ++c)
                                      for (int64_t r = 0; r < kh; ++r)
                                          for (int64_t s = 0; s < kw; ++s) {
                                              double acc = 0.0;
                                              for (int64_t oh = 0; oh < OH; ++oh) {
                                                  const int64_t ih = oh * stride + r - pad;
                                                  if (ih < 0 || ih >= H) continue;
                                                  const double* grow = gp + ((b * F + f) * OH + oh) * OW;
                                                  const double* xrow = xp + ((b * C + c) * H + ih) * W;
                                                  for (int64_t ow = 0; ow < OW; ++ow) {
                                                      const int64_t iw = ow * stride + s - pad;
                                                      if (iw < 0 || iw >= W) continue;
                                                      acc += grow[ow] * xrow[iw];
                                                  }
                                              }
                                              gwp[((f * C + c) * kh + r) * kw + s] += acc;
                                          }
                          gg.accumulate_grad(w.node(), gw);
                      }
                  });
}

// ---------------------------------------------------------------------------
// elementwise and structural ops
// ---------------------------------------------------------------------------

inline Tensor relu(GradGraph& g, const Tensor& x) {
    require_finite(x, "relu input");
    Tensor out = Tensor::zeros(x.shape());
    const double* xp = x.data();
    double* op = out.mutable_data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) op[i] = xp[i] > 0.0 ? xp[i] : 0.0;
    if (!x.tracked()) return out;

    // subgradient at 0 is 0: pass through only where the output is positive
    return g.emit("relu", out, {x.node()}, {},
                  [x, out, n](GradGraph& gg, const Tensor& go) {
                      Tensor gx = Tensor::zeros(x.shape());
                      double* gxp = gx.mutable_data();
                      const double* gp = go.data();
                      const double* op = out.data();
                      for (int64_t i = 0; i < n; ++i) gxp[i] = op[i] > 0.0 ? gp[i] : 0.0;
                      gg.accumulate_grad(x.node(), gx);
                  });
}

// 2x2 max pooling with stride 2; odd trailing rows/cols are dropped.
inline Tensor maxpool2(GradGraph& g, const Tensor& x) {
    if (x.rank() != 4) throw dimension_error("maxpool2: expected 4-d input, got " + shape_str(x.shape()));
    require_finite(x, "maxpool2 input");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < 2 || W < 2) throw dimension_error("maxpool2: input smaller than window");
    const int64_t OH = H / 2, OW = W / 2;
    Tensor out = Tensor::zeros({B, C, OH, OW});
    {
        const double* xp = x.data();
        double* op = out.mutable_data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t oh = 0; oh < OH; ++oh)
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const int64_t base = ((b * C + c) * H + oh * 2) * W + ow * 2;
                        double m = xp[base];
                        m = std::max(m, xp[base + 1]);
                        m = std::max(m, xp[base + W]);
                        m = std::max(m, xp[base + W + 1]);
                        op[((b * C + c) * OH + oh) * OW + ow] = m;
                    }
    }
    if (!x.tracked()) return out;

    // backward routes to the first maximum in scan order (deterministic ties)
    return g.emit("maxpool2", out, {x.node()}, {x},
                  [x, B, C, H, W, OH, OW](GradGraph& gg, const Tensor& go) {
                      Tensor gx = Tensor::zeros(x.shape());
                      double* gxp = gx.mutable_data();
                      const double* xp = x.data();
                      const double* gp = go.data();
                      for (int64_t b = 0; b < B; ++b)
                          for (int64_t c = 0; c < C; ++c)
                              for (int64_t oh = 0; oh < OH; ++oh)
                                  for (int64_t ow = 0; ow < OW; ++ow) {
                                      const int64_t base = ((b * C + c) * H + oh * 2) * W + ow * 2;
                                      const int64_t offs[4] = {0, 1, W, W + 1};
                                      int64_t best = base;
                                      for (int t = 1; t < 4; ++t)
                                          if (xp[base + offs[t]] > xp[best]) best = base + offs[t];
                                      gxp[best] += gp[((b * C + c) * OH + oh) * OW + ow];
                                  }
                      gg.accumulate_grad(x.node(), gx);
                  });
}

// [B, ...] -> [B, prod(rest)], bit-identical row-major values (shared buffer).
inline Tensor flatten(GradGraph& g, const Tensor& x) {
    if (x.rank() < 1) throw dimension_error("flatten: expected at least 1-d input");
    const int64_t B = x.dim(0);
    Tensor out = x.constant().reshaped({B, x.numel() / B});
    if (!x.tracked()) return out;
    return g.emit_alias("flatten", out, {x.node()}, [x](GradGraph& gg, const Tensor& go) {
        gg.accumulate_grad(x.node(), go.constant().reshaped(x.shape()));
    });
}

// Broadcast bias add: [M,N]+[N] over rows, or [B,F,H,W]+[F] over channels.
inline Tensor add_bias(GradGraph& g, const Tensor& x, const Tensor& b) {
    require_finite(x, "add_bias input");
    require_finite(b, "add_bias bias");
    Tensor out = Tensor::zeros(x.shape());
    const double* xp = x.data();
    const double* bp = b.data();
    double* op = out.mutable_data();
    int64_t outer, blen, inner;
    if (x.rank() == 2 && b.rank() == 1 && b.dim(0) == x.dim(1)) {
        outer = x.dim(0), blen = x.dim(1), inner = 1;
    } else if (x.rank() == 4 && b.rank() == 1 && b.dim(0) == x.dim(1)) {
        outer = x.dim(0), blen = x.dim(1), inner = x.dim(2) * x.dim(3);
    } else {
        throw dimension_error("add_bias: cannot broadcast " + shape_str(b.shape()) + " onto " +
                              shape_str(x.shape()));
    }
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < blen; ++j) {
            const double bv = bp[j];
            const int64_t base = (o * blen + j) * inner;
            for (int64_t i = 0; i < inner; ++i) op[base + i] = xp[base + i] + bv;
        }
    if (!detail::any_tracked({&x, &b})) return out;

    return g.emit("add_bias", out, detail::input_ids({&x, &b}), {},
                  [x, b, outer, blen, inner](GradGraph& gg, const Tensor& go) {
                      if (x.tracked()) gg.accumulate_grad(x.node(), go);
                      if (b.tracked()) {
                          Tensor gb = Tensor::zeros(b.shape());
                          double* gbp = gb.mutable_data();
                          const double* gp = go.data();
                          for (int64_t o = 0; o < outer; ++o)
                              for (int64_t j = 0; j < blen; ++j) {
                                  const int64_t base = (o * blen + j) * inner;
                                  double acc = 0.0;
                                  for (int64_t i = 0; i < inner; ++i) acc += gp[base + i];
                                  gbp[j] += acc;
                              }
                          gg.accumulate_grad(b.node(), gb);
                      }
                  });
}

inline Tensor add(GradGraph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    require_finite(a, "add lhs");
    require_finite(b, "add rhs");
    Tensor out = Tensor::zeros(a.shape());
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.mutable_data();
    for (int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] + bp[i];
    if (!detail::any_tracked({&a, &b})) return out;
    return g.emit("add", out, detail::input_ids({&a, &b}), {},
                  [a, b](GradGraph& gg, const Tensor& go) {
                      if (a.tracked()) gg.accumulate_grad(a.node(), go);
                      if (b.tracked()) gg.accumulate_grad(b.node(), go);
                  });
}

inline Tensor sub(GradGraph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    require_finite(a, "sub lhs");
    require_finite(b, "sub rhs");
    Tensor out = Tensor::zeros(a.shape());
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.mutable_data();
    for (int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] - bp[i];
    if (!detail::any_tracked({&a, &b})) return out;
    return g.emit("sub", out, detail::input_ids({&a, &b}), {},
                  [a, b](GradGraph& gg, const Tensor& go) {
                      if (a.tracked()) gg.accumulate_grad(a.node(), go);
                      if (b.tracked()) {
                          Tensor gb = Tensor::zeros(b.shape());
                          double* gbp = gb.mutable_data();
                          const double* gp = go.data();
                          for (int64_t i = 0; i < gb.numel(); ++i) gbp[i] = -gp[i];
                          gg.accumulate_grad(b.node(), gb);
                      }
                  });
}

inline Tensor mul(GradGraph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    require_finite(a, "mul lhs");
    require_finite(b, "mul rhs");
    Tensor out = Tensor::zeros(a.shape());
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.mutable_data();
    for (int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] * bp[i];
    if (!detail::any_tracked({&a, &b})) return out;
    return g.emit("mul", out, detail::input_ids({&a, &b}), {a, b},
                  [a, b](GradGraph& gg, const Tensor& go) {
                      const double* gp = go.data();
                      if (a.tracked()) {
                          Tensor ga = Tensor::zeros(a.shape());
                          double* p = ga.mutable_data();
                          const double* bp = b.data();
                          for (int64_t i = 0; i < ga.numel(); ++i) p[i] = gp[i] * bp[i];
                          gg.accumulate_grad(a.node(), ga);
                      }
                      if (b.tracked()) {
                          Tensor gb = Tensor::zeros(b.shape());
                          double* p = gb.mutable_data();
                          const double* ap = a.data();
                          for (int64_t i = 0; i < gb.numel(); ++i) p[i] = gp[i] * ap[i];
                          gg.accumulate_grad(b.node(), gb);
                      }
                  });
}

inline Tensor scale(GradGraph& g, const Tensor& a, double c) {
    require_finite(a, "scale input");
    Tensor out = Tensor::zeros(a.shape());
    const double* ap = a.data();
    double* op = out.mutable_data();
    for (int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] * c;
    if (!a.tracked()) return out;
    return g.emit("scale", out, {a.node()}, {}, [a, c](GradGraph& gg, const Tensor& go) {
        Tensor ga = Tensor::zeros(a.shape());
        double* p = ga.mutable_data();
        const double* gp = go.data();
        for (int64_t i = 0; i < ga.numel(); ++i) p[i] = gp[i] * c;
        gg.accumulate_grad(a.node(), ga);
    });
}

inline Tensor square(GradGraph& g, const Tensor& a) {
    require_finite(a, "square input");
    Tensor out = Tensor::zeros(a.shape());
    const double* ap = a.data();
    double* op = out.mutable_data();
    for (int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] * ap[i];
    if (!a.tracked()) return out;
    return g.emit("square", out, {a.node()}, {a}, [a](GradGraph& gg, const Tensor& go) {
        Tensor ga = Tensor::zeros(a.shape());
        double* p = ga.mutable_data();
        const double* gp = go.data();
        const double* ap = a.data();
        for (int64_t i = 0; i < ga.numel(); ++i) p[i] = 2.0 * ap[i] * gp[i];
        gg.accumulate_grad(a.node(), ga);
    });
}

inline Tensor sum(GradGraph& g, const Tensor& a) {
    require_finite(a, "sum input");
    double acc = 0.0;
    const double* ap = a.data();
    for (int64_t i = 0; i < a.numel(); ++i) acc += ap[i];
    Tensor out = Tensor::scalar(acc);
    if (!a.tracked()) return out;
    return g.emit("sum", out, {a.node()}, {}, [a](GradGraph& gg, const Tensor& go) {
        gg.accumulate_grad(a.node(), Tensor::full(a.shape(), go.item()));
    });
}

inline Tensor sum_sq(GradGraph& g, const Tensor& a) {
    require_finite(a, "sum_sq input");
    double acc = 0.0;
    const double* ap = a.data();
    for (int64_t i = 0; i < a.numel(); ++i) acc += ap[i] * ap[i];
    Tensor out = Tensor::scalar(acc);
    if (!a.tracked()) return out;
    return g.emit("sum_sq", out, {a.node()}, {a}, [a](GradGraph& gg, const Tensor& go) {
        const double gv = go.item();
        Tensor ga = Tensor::zeros(a.shape());
        double* p = ga.mutable_data();
        const double* ap = a.data();
        for (int64_t i = 0; i < ga.numel(); ++i) p[i] = 2.0 * ap[i] * gv;
        gg.accumulate_grad(a.node(), ga);
    });
}

} // namespace mrt::ops
