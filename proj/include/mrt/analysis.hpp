#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mrt/data.hpp"
#include "mrt/nn.hpp"
#include "mrt/rng.hpp"
#include "mrt/train.hpp"

namespace mrt {

// ---------------------------------------------------------------------------
// PCA to 2-D (deterministic t-SNE stand-in for the separability probes)
// ---------------------------------------------------------------------------

struct Pca2d {
    Tensor coords; // N x 2
    double eigenvalues[2] = {0.0, 0.0};
    bool degenerate = false; // rank < 2: second axis is zero
};

namespace detail {

// Power iteration on C = Xc^T Xc / N, deflated by already-found directions.
// Deterministic and invariant to row order: the start vector comes from the
// largest residual diagonal entry, not from randomness.
inline bool top_eigenvector(const std::vector<double>& xc, int64_t n, int64_t d,
                            const std::vector<std::vector<double>>& found,
                            const std::vector<double>& found_vals, std::vector<double>& v,
                            double& value) {
    auto matvec = [&](const std::vector<double>& in, std::vector<double>& out) {
        std::vector<double> tmp(static_cast<size_t>(n), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = xc.data() + i * d;
            for (int64_t j = 0; j < d; ++j) s += row[j] * in[static_cast<size_t>(j)];
            tmp[static_cast<size_t>(i)] = s;
        }
        std::fill(out.begin(), out.end(), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            const double s = tmp[static_cast<size_t>(i)] / static_cast<double>(n);
            const double* row = xc.data() + i * d;
            for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(j)] += row[j] * s;
        }
        for (size_t f = 0; f < found.size(); ++f) { // deflate
            double dot = 0.0;
            for (int64_t j = 0; j < d; ++j) dot += found[f][static_cast<size_t>(j)] * in[static_cast<size_t>(j)];
            for (int64_t j = 0; j < d; ++j)
                out[static_cast<size_t>(j)] -= found_vals[f] * dot * found[f][static_cast<size_t>(j)];
        }
    };

    // residual diagonal of the deflated covariance picks the start axis
    int64_t start = 0;
    double best = -1.0;
    for (int64_t j = 0; j < d; ++j) {
        double cjj = 0.0;
        for (int64_t i = 0; i < n; ++i) cjj += xc[static_cast<size_t>(i * d + j)] * xc[static_cast<size_t>(i * d + j)];
        cjj /= static_cast<double>(n);
        for (size_t f = 0; f < found.size(); ++f)
            cjj -= found_vals[f] * found[f][static_cast<size_t>(j)] * found[f][static_cast<size_t>(j)];
        if (cjj > best) {
            best = cjj;
            start = j;
        }
    }
    if (best <= 1e-300) return false;

    v.assign(static_cast<size_t>(d), 0.0);
    v[static_cast<size_t>(start)] = 1.0;
    std::vector<double> next(static_cast<size_t>(d));
    double lambda = 0.0;
    for (int iter = 0; iter < 5000; ++iter) {
        matvec(v, next);
        double norm = 0.0;
        for (double x : next) norm += x * x;
        norm = std::sqrt(norm);
        if (norm <= 1e-300) return false;
        double delta = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double nv = next[static_cast<size_t>(j)] / norm;
            delta = std::max(delta, std::abs(nv - v[static_cast<size_t>(j)]));
            v[static_cast<size_t>(j)] = nv;
        }
        lambda = norm;
        if (delta < 1e-14 && iter > 2) break;
    }
    value = lambda;
    return value > 0.0;
}

inline void fix_sign(std::vector<double>& v) {
    size_t arg = 0;
    for (size_t j = 1; j < v.size(); ++j)
        if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0)
        for (double& x : v) x = -x;
}

} // namespace detail

inline Pca2d pca_2d_full(const Tensor& acts) {
    if (acts.rank() != 2) throw dimension_error("pca_2d: input must be NxD");
    const int64_t n = acts.dim(0), d = acts.dim(1);
    if (n < 3 || d < 2) throw contract_error("pca_2d: need N >= 3 and D >= 2");
    require_finite(acts, "pca_2d input");

    std::vector<double> xc(acts.data(), acts.data() + n * d);
    for (int64_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += xc[static_cast<size_t>(i * d + j)];
        mean /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) xc[static_cast<size_t>(i * d + j)] -= mean;
    }

    Pca2d res;
    std::vector<std::vector<double>> dirs;
    std::vector<double> vals;
    for (int comp = 0; comp < 2; ++comp) {
        std::vector<double> v;
        double lambda = 0.0;
        if (!detail::top_eigenvector(xc, n, d, dirs, vals, v, lambda)) {
            res.degenerate = true;
            v.assign(static_cast<size_t>(d), 0.0);
            lambda = 0.0;
        }
        detail::fix_sign(v);
        dirs.push_back(std::move(v));
        vals.push_back(lambda);
        res.eigenvalues[comp] = lambda;
    }

    Tensor coords = Tensor::zeros({n, 2});
    double* cp = coords.mutable_data();
    for (int64_t i = 0; i < n; ++i)
        for (int comp = 0; comp < 2; ++comp) {
            double s = 0.0;
            for (int64_t j = 0; j < d; ++j)
                s += xc[static_cast<size_t>(i * d + j)] * dirs[static_cast<size_t>(comp)][static_cast<size_t>(j)];
            cp[i * 2 + comp] = s;
        }
    res.coords = coords;
    return res;
}

inline Tensor pca_2d(const Tensor& acts) { return pca_2d_full(acts).coords; }

// ---------------------------------------------------------------------------
// Two-class LDA on 2-D coordinates
// ---------------------------------------------------------------------------

struct LdaModel {
    int class_a = 0, class_b = 1; // class_a < class_b; ties classify as class_a
    double mean_a[2] = {0, 0}, mean_b[2] = {0, 0};
    double cov[3] = {1, 0, 1}; // pooled covariance + ridge, packed (xx, xy, yy)
    double prior_a = 0.5, prior_b = 0.5;
};

inline LdaModel lda_fit(const Tensor& coords, const std::vector<int>& labels, double ridge = 1e-6) {
    if (coords.rank() != 2 || coords.dim(1) != 2) throw dimension_error("lda_fit: coords must be Nx2");
    const int64_t n = coords.dim(0);
    if (static_cast<int64_t>(labels.size()) != n) throw contract_error("lda_fit: label count mismatch");
    if (ridge < 0) throw contract_error("lda_fit: ridge must be >= 0");

    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() != 2)
        throw contract_error("lda_fit: need exactly 2 classes present, have " +
                             std::to_string(distinct.size()));
    LdaModel m;
    m.class_a = *distinct.begin();
    m.class_b = *std::next(distinct.begin());

    const double* cp = coords.data();
    int64_t na = 0, nb = 0;
    for (int64_t i = 0; i < n; ++i) {
        const bool a = labels[static_cast<size_t>(i)] == m.class_a;
        double* mean = a ? m.mean_a : m.mean_b;
        mean[0] += cp[i * 2];
        mean[1] += cp[i * 2 + 1];
        (a ? na : nb)++;
    }
    m.mean_a[0] /= static_cast<double>(na);
    m.mean_a[1] /= static_cast<double>(na);
    m.mean_b[0] /= static_cast<double>(nb);
    m.mean_b[1] /= static_cast<double>(nb);
    m.prior_a = static_cast<double>(na) / static_cast<double>(n);
    m.prior_b = static_cast<double>(nb) / static_cast<double>(n);

    double sxx = 0, sxy = 0, syy = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double* mean = labels[static_cast<size_t>(i)] == m.class_a ? m.mean_a : m.mean_b;
        const double dx = cp[i * 2] - mean[0], dy = cp[i * 2 + 1] - mean[1];
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    const double denom = static_cast<double>(n - 2);
    m.cov[0] = sxx / denom + ridge;
    m.cov[1] = sxy / denom;
    m.cov[2] = syy / denom + ridge;
    const double det = m.cov[0] * m.cov[2] - m.cov[1] * m.cov[1];
    if (!(det > 0.0) || !(m.cov[0] > 0.0))
        throw numeric_error("lda_fit: pooled covariance is singular; increase ridge");
    return m;
}

inline int lda_classify(const LdaModel& m, double x, double y) {
    const double det = m.cov[0] * m.cov[2] - m.cov[1] * m.cov[1];
    const double i00 = m.cov[2] / det, i01 = -m.cov[1] / det, i11 = m.cov[0] / det;
    auto disc = [&](const double* mu, double prior) {
        const double wx = i00 * mu[0] + i01 * mu[1];
        const double wy = i01 * mu[0] + i11 * mu[1];
        return x * wx + y * wy - 0.5 * (mu[0] * wx + mu[1] * wy) + std::log(prior);
    };
    return disc(m.mean_a, m.prior_a) >= disc(m.mean_b, m.prior_b) ? m.class_a : m.class_b;
}

inline double lda_accuracy(const LdaModel& m, const Tensor& coords, const std::vector<int>& labels) {
    if (coords.rank() != 2 || coords.dim(1) != 2)
        throw dimension_error("lda_accuracy: coords must be Nx2");
    const int64_t n = coords.dim(0);
    if (static_cast<int64_t>(labels.size()) != n)
        throw contract_error("lda_accuracy: label count mismatch");
    int64_t correct = 0;
    const double* cp = coords.data();
    for (int64_t i = 0; i < n; ++i)
        if (lda_classify(m, cp[i * 2], cp[i * 2 + 1]) == labels[static_cast<size_t>(i)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Layer-wise separability probe
// ---------------------------------------------------------------------------

struct ProbePoint {
    std::string layer;
    double accuracy;
};

struct ProbeResult {
    std::vector<ProbePoint> curve;              // extractor output + one point per tap
    std::vector<Tensor> embeddings;             // Nx2 coords per probed layer
    std::vector<int> labels;                    // shared across layers
};

// PCA + LDA accuracy at the extractor output and at every bottleneck tap for
// a two-class subset of at most sample_cap samples per class.
inline ProbeResult layer_probe(const Network& net, const Dataset& ds, int class_a, int class_b,
                               int64_t sample_cap, uint64_t seed, double ridge = 1e-6) {
    if (class_a == class_b) throw contract_error("layer_probe: the two classes must differ");
    std::vector<int64_t> idx_a, idx_b;
    for (int64_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[static_cast<size_t>(i)] == class_a) idx_a.push_back(i);
        if (ds.labels[static_cast<size_t>(i)] == class_b) idx_b.push_back(i);
    }
    if (idx_a.empty() || idx_b.empty())
        throw contract_error("layer_probe: class " + std::to_string(idx_a.empty() ? class_a : class_b) +
                             " absent from dataset");

    Rng rng = Rng::substream(seed, "probe");
    auto pick = [&](std::vector<int64_t>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i)
            std::swap(v[static_cast<size_t>(i)], v[rng.below(static_cast<uint64_t>(i) + 1)]);
        if (sample_cap > 0 && static_cast<int64_t>(v.size()) > sample_cap) v.resize(static_cast<size_t>(sample_cap));
        std::sort(v.begin(), v.end());
    };
    pick(idx_a);
    pick(idx_b);

    std::vector<int64_t> idx = idx_a;
    idx.insert(idx.end(), idx_b.begin(), idx_b.end());

    ProbeResult res;
    for (int64_t i : idx) res.labels.push_back(ds.labels[static_cast<size_t>(i)]);

    // collect activations in evaluation batches
    std::vector<std::vector<double>> acts; // per layer, row-major
    std::vector<int64_t> widths;
    const int64_t batch = 64;
    for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(batch)) {
        std::vector<int64_t> chunk(idx.begin() + static_cast<int64_t>(start),
                                   idx.begin() + std::min(idx.size(), start + static_cast<size_t>(batch)));
        MiniBatch mb = gather(ds, chunk);
        GradGraph g;
        ForwardResult fwd = net.forward(g, mb.x, /*track_params=*/false);
        std::vector<Tensor> layers;
        layers.push_back(fwd.extractor_out);
        for (const Tensor& t : fwd.taps) layers.push_back(t);
        if (acts.empty()) {
            acts.resize(layers.size());
            for (const Tensor& t : layers) widths.push_back(t.dim(1));
        }
        for (size_t l = 0; l < layers.size(); ++l)
            acts[l].insert(acts[l].end(), layers[l].data(), layers[l].data() + layers[l].numel());
    }

    const bool has_extractor = !net.config().extractor.empty();
    for (size_t l = 0; l < acts.size(); ++l) {
        Tensor mat = Tensor::from({static_cast<int64_t>(idx.size()), widths[l]}, std::move(acts[l]));
        Tensor coords = pca_2d(mat);
        LdaModel model = lda_fit(coords, res.labels, ridge);
        ProbePoint pt;
        pt.layer = l == 0 ? (has_extractor ? "conv-out" : "input") : "fc" + std::to_string(l);
        pt.accuracy = lda_accuracy(model, coords, res.labels);
        res.curve.push_back(pt);
        res.embeddings.push_back(coords);
    }
    return res;
}

inline void write_probe_csv(std::ostream& os, const ProbeResult& r) {
    os << "layer,lda_accuracy\n";
    for (const ProbePoint& p : r.curve) os << p.layer << ',' << fmt_double(p.accuracy) << '\n';
}

inline void write_embeddings_csv(std::ostream& os, const ProbeResult& r) {
    os << "layer,sample,label,x,y\n";
    for (size_t l = 0; l < r.embeddings.size(); ++l) {
        const Tensor& c = r.embeddings[l];
        for (int64_t i = 0; i < c.dim(0); ++i)
            os << r.curve[l].layer << ',' << i << ',' << r.labels[static_cast<size_t>(i)] << ','
               << fmt_double(c.at2(i, 0)) << ',' << fmt_double(c.at2(i, 1)) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Generalization tables
// ---------------------------------------------------------------------------

struct GenRow {
    int W = 0;
    int L = 0;
    bool regularized = false;
    double accuracy = 0.0;  // final test accuracy, percent
    double gen_error = 0.0; // recomputed train - test, percent
};

struct ReportMeta {
    int W;
    int L;
    bool regularized;
    const TrainingReport* report;
};

// Rows sorted by (L desc, W desc, without-regularizer first); gen_error is
// recomputed from the report so the table can never drift from its source.
inline std::vector<GenRow> generalization_table(const std::vector<ReportMeta>& reports) {
    if (reports.empty()) throw contract_error("generalization_table: no reports");
    std::vector<GenRow> rows;
    for (const ReportMeta& m : reports) {
        GenRow r;
        r.W = m.W;
        r.L = m.L;
        r.regularized = m.regularized;
        r.accuracy = m.report->final_test_acc;
        r.gen_error = m.report->final_train_acc - m.report->final_test_acc;
        rows.push_back(r);
    }
    std::sort(rows.begin(), rows.end(), [](const GenRow& a, const GenRow& b) {
        if (a.L != b.L) return a.L > b.L;
        if (a.W != b.W) return a.W > b.W;
        return a.regularized < b.regularized;
    });
    return rows;
}

inline std::string render_generalization_tables(const std::vector<GenRow>& rows) {
    std::set<int, std::greater<int>> Ls, Ws;
    for (const GenRow& r : rows) {
        Ls.insert(r.L);
        Ws.insert(r.W);
    }
    auto cell = [&](int L, int W, bool reg, bool gen) -> std::string {
        for (const GenRow& r : rows)
            if (r.L == L && r.W == W && r.regularized == reg) {
                std::ostringstream os;
                os << std::fixed << std::setprecision(2) << (gen ? r.gen_error : r.accuracy);
                return os.str();
            }
        return "-";
    };

    std::ostringstream os;
    for (int gen = 0; gen < 2; ++gen) {
        os << (gen ? "Empirical generalization error (%, lower is better)\n"
                   : "Classification performance (%, higher is better)\n");
        os << std::left << std::setw(24) << "Method";
        for (int W : Ws) os << std::right << std::setw(10) << ("W=" + std::to_string(W));
        os << '\n';
        for (int L : Ls) {
            os << "-- mini-batch size " << L << " --\n";
            for (int reg = 0; reg < 2; ++reg) {
                os << std::left << std::setw(24) << (reg ? "with regularizer" : "without regularizer");
                for (int W : Ws) os << std::right << std::setw(10) << cell(L, W, reg, gen);
                os << '\n';
            }
        }
        os << '\n';
    }
    return os.str();
}

} // namespace mrt
