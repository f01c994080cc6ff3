#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "mrt/nn.hpp"
#include "mrt/ops.hpp"

namespace mrt {

// Weighting and wiring of the unsupervised objective. `scoped` restricts
// each distance-preserving term's gradient to its own layer pair by
// rebuilding the pair behind a stop-gradient barrier; `global` lets it
// backpropagate through the whole network (ablation).
struct LossWeights {
    std::vector<double> alpha; // one weight per regularized pair, in pair order
    double lambda = 1e-4;
    enum class Scope { scoped, global } scope_policy = Scope::scoped;
    double eps = 1e-12;          // smoothing inside the distance sqrt
    bool normalize_pairs = false; // divide the pair sum by L^2 (off: literal form)

    // Terms acting on the earlier half of the bottleneck get the smaller
    // weight. These numbers are this library's defaults, not reported ones.
    static std::vector<double> default_alpha(size_t n_pairs) {
        std::vector<double> a(n_pairs, 0.01);
        for (size_t i = 0; i < n_pairs / 2; ++i) a[i] = 0.001;
        return a;
    }

    void validate() const {
        if (lambda < 0) throw config_error("loss: lambda must be >= 0");
        for (double a : alpha)
            if (a < 0) throw config_error("loss: alpha entries must be >= 0");
    }
};

struct LossBreakdown {
    double supervised = 0.0;
    std::vector<double> unsupervised_per_k; // raw per-pair values (before alpha)
    double total = 0.0;
    Tensor total_tensor; // graph-tracked scalar, seed for backward()
};

namespace losses {

// Mini-batch cross-entropy, summed over samples (no mean), stabilized by
// per-row max subtraction.
inline Tensor cross_entropy(GradGraph& g, const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw dimension_error("cross_entropy: logits must be LxC");
    const int64_t L = logits.dim(0), C = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != L)
        throw contract_error("cross_entropy: batch size mismatch between logits and labels");
    for (int y : labels)
        if (y < 0 || y >= C) throw contract_error("cross_entropy: label out of range");
    require_finite(logits, "cross_entropy logits");

    Tensor probs = Tensor::zeros({L, C});
    double loss = 0.0;
    {
        const double* lp = logits.data();
        double* pp = probs.mutable_data();
        for (int64_t n = 0; n < L; ++n) {
            const double* row = lp + n * C;
            double m = row[0];
            for (int64_t c = 1; c < C; ++c) m = std::max(m, row[c]);
            double z = 0.0;
            for (int64_t c = 0; c < C; ++c) z += std::exp(row[c] - m);
            for (int64_t c = 0; c < C; ++c) pp[n * C + c] = std::exp(row[c] - m) / z;
            loss += -(row[labels[static_cast<size_t>(n)]] - m) + std::log(z);
        }
    }
    Tensor out = Tensor::scalar(loss);
    if (!logits.tracked()) return out;

    return g.emit("cross_entropy", out, {logits.node()}, {probs},
                  [logits, probs, labels, L, C](GradGraph& gg, const Tensor& go) {
                      const double gv = go.item();
                      Tensor gl = Tensor::zeros(logits.shape());
                      double* glp = gl.mutable_data();
                      const double* pp = probs.data();
                      for (int64_t n = 0; n < L; ++n)
                          for (int64_t c = 0; c < C; ++c)
                              glp[n * C + c] =
                                  gv * (pp[n * C + c] -
                                        (labels[static_cast<size_t>(n)] == c ? 1.0 : 0.0));
                      gg.accumulate_grad(logits.node(), gl);
                  },
                  /*extra_saved_elems=*/L * C);
}

// Pairwise Euclidean distances between rows, smoothed so the derivative is
// defined when two rows coincide: out[n][m] = sqrt(ssd + eps) - sqrt(eps).
// Symmetric with an exactly zero diagonal.
inline Tensor pairwise_distances(GradGraph& g, const Tensor& a, double eps = 1e-12) {
    if (a.rank() != 2) throw dimension_error("pairwise_distances: input must be LxD");
    require_finite(a, "pairwise_distances input");
    const int64_t L = a.dim(0), D = a.dim(1);
    const double sqrt_eps = std::sqrt(eps);

    Tensor out = Tensor::zeros({L, L});
    {
        const double* ap = a.data();
        double* op = out.mutable_data();
        for (int64_t n = 0; n < L; ++n)
            for (int64_t m = n + 1; m < L; ++m) {
                double ssd = 0.0;
                for (int64_t d = 0; d < D; ++d) {
                    const double diff = ap[n * D + d] - ap[m * D + d];
                    ssd += diff * diff;
                }
                const double v = std::sqrt(ssd + eps) - sqrt_eps;
                op[n * L + m] = v;
                op[m * L + n] = v;
            }
    }
    if (!a.tracked()) return out;

    return g.emit("pairwise_distances", out, {a.node()}, {a},
                  [a, out, L, D, sqrt_eps](GradGraph& gg, const Tensor& go) {
                      Tensor ga = Tensor::zeros(a.shape());
                      double* gap = ga.mutable_data();
                      const double* ap = a.data();
                      const double* gp = go.data();
                      const double* op = out.data();
                      for (int64_t n = 0; n < L; ++n)
                          for (int64_t m = n + 1; m < L; ++m) {
                              const double r = op[n * L + m] + sqrt_eps; // sqrt(ssd + eps) > 0
                              const double coef = (gp[n * L + m] + gp[m * L + n]) / r;
                              if (coef == 0.0) continue;
                              for (int64_t d = 0; d < D; ++d) {
                                  const double diff = ap[n * D + d] - ap[m * D + d];
                                  gap[n * D + d] += coef * diff;
                                  gap[m * D + d] -= coef * diff;
                              }
                          }
                      gg.accumulate_grad(a.node(), ga);
                  });
}

// Distance-preserving loss between adjacent layers' activations: the squared
// mismatch of the two pairwise-distance matrices over all ordered pairs,
// plus lambda * ||params||^2 over the layers involved.
inline Tensor distance_preserving_loss(GradGraph& g, const Tensor& acts_k, const Tensor& acts_km1,
                                       const std::vector<Tensor>& params, double lambda,
                                       double eps = 1e-12, bool normalize_pairs = false) {
    if (acts_k.dim(0) != acts_km1.dim(0))
        throw contract_error("distance_preserving_loss: batch sizes differ (" +
                             std::to_string(acts_k.dim(0)) + " vs " + std::to_string(acts_km1.dim(0)) +
                             ")");
    const int64_t L = acts_k.dim(0);
    Tensor dk = pairwise_distances(g, acts_k, eps);
    Tensor dkm1 = pairwise_distances(g, acts_km1, eps);
    Tensor term = ops::sum(g, ops::square(g, ops::sub(g, dk, dkm1)));
    if (normalize_pairs) term = ops::scale(g, term, 1.0 / static_cast<double>(L * L));
    if (lambda != 0.0)
        for (const Tensor& p : params) term = ops::add(g, term, ops::scale(g, ops::sum_sq(g, p), lambda));
    return term;
}

// Regularized layer pairs (k, k-1): the term is backpropagated every two
// layers, one pair per width level, and the pair touching the extractor
// output is not regularized.
inline std::vector<std::pair<int, int>> regularized_pairs(size_t n_taps) {
    std::vector<std::pair<int, int>> pairs;
    for (size_t k = 1; k < n_taps; k += 2) pairs.emplace_back(static_cast<int>(k), static_cast<int>(k) - 1);
    return pairs;
}

// Sum over pairs of alpha_k * L_u^(k). In scoped mode each term is rebuilt
// from a detached copy of layer k-1's input, so its gradient lands on the
// parameters of layers k and k-1 and nowhere else. Returns the weighted
// total (tracked scalar) and the raw per-pair values.
inline std::pair<Tensor, std::vector<double>> scoped_unsupervised_total(GradGraph& g,
                                                                        const ForwardResult& fwd,
                                                                        const LossWeights& weights) {
    if (fwd.taps.size() < 2)
        throw contract_error("scoped_unsupervised_total: need at least 2 taps, have " +
                             std::to_string(fwd.taps.size()));
    const auto pairs = regularized_pairs(fwd.taps.size());
    if (weights.alpha.size() != pairs.size())
        throw contract_error("scoped_unsupervised_total: " + std::to_string(weights.alpha.size()) +
                             " alpha weights for " + std::to_string(pairs.size()) + " layer pairs");

    Tensor total;
    std::vector<double> per_k(pairs.size(), 0.0);
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (weights.alpha[i] == 0.0) continue;
        const auto [k, km1] = pairs[i];

        Tensor ak, akm1;
        if (weights.scope_policy == LossWeights::Scope::scoped) {
            const Tensor& src =
                km1 == 0 ? fwd.extractor_out : fwd.post_acts[static_cast<size_t>(km1) - 1];
            Tensor z = g.detach(src);
            auto [pre_a, post_a] = apply_bottleneck_layer(g, fwd, km1, z);
            auto [pre_b, post_b] = apply_bottleneck_layer(g, fwd, k, post_a);
            akm1 = fwd.taps_post ? post_a : pre_a;
            ak = fwd.taps_post ? post_b : pre_b;
        } else {
            ak = fwd.taps[static_cast<size_t>(k)];
            akm1 = fwd.taps[static_cast<size_t>(km1)];
        }

        const auto& [wa, ba] = fwd.fc_param_idx[static_cast<size_t>(km1)];
        const auto& [wb, bb] = fwd.fc_param_idx[static_cast<size_t>(k)];
        const std::vector<Tensor> theta = {fwd.param_leaves[static_cast<size_t>(wa)],
                                           fwd.param_leaves[static_cast<size_t>(ba)],
                                           fwd.param_leaves[static_cast<size_t>(wb)],
                                           fwd.param_leaves[static_cast<size_t>(bb)]};
        Tensor term = distance_preserving_loss(g, ak, akm1, theta, weights.lambda, weights.eps,
                                               weights.normalize_pairs);
        per_k[i] = term.item();
        Tensor weighted = ops::scale(g, term, weights.alpha[i]);
        total = total.defined() ? ops::add(g, total, weighted) : weighted;
    }
    if (!total.defined()) total = Tensor::scalar(0.0);
    return {total, per_k};
}

// Full objective: the supervised term backpropagates through the whole
// network, the unsupervised terms per the scope policy.
inline LossBreakdown total_objective(GradGraph& g, const ForwardResult& fwd,
                                     const std::vector<int>& labels, const LossWeights& weights) {
    weights.validate();
    LossBreakdown bd;
    Tensor ce = cross_entropy(g, fwd.logits, labels);
    bd.supervised = ce.item();

    bool any_alpha = false;
    for (double a : weights.alpha) any_alpha |= a != 0.0;
    if (any_alpha) {
        auto [unsup, per_k] = scoped_unsupervised_total(g, fwd, weights);
        bd.unsupervised_per_k = std::move(per_k);
        bd.total_tensor = ops::add(g, ce, unsup);
    } else {
        bd.unsupervised_per_k.assign(weights.alpha.size(), 0.0);
        bd.total_tensor = ce;
    }
    bd.total = bd.total_tensor.item();
    return bd;
}

} // namespace losses
} // namespace mrt
