#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "mrt/rng.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

enum class Split { train, test };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

struct Dataset {
    Tensor x; // [N, ...]; CIFAR: [N,3,32,32] in [0,1]
    std::vector<int> labels;
    int num_classes = 0;
    Split split = Split::train;

    int64_t size() const { return x.defined() ? x.dim(0) : 0; }

    void check() const {
        if (x.dim(0) != static_cast<int64_t>(labels.size()))
            throw data_error("dataset: sample/label count mismatch");
        for (int y : labels)
            if (y < 0 || y >= num_classes) throw data_error("dataset: label out of range");
    }

    Dataset subset(int64_t n) const {
        if (n <= 0 || n >= size()) return *this;
        Shape s = x.shape();
        s[0] = n;
        const int64_t row = x.numel() / x.dim(0);
        Dataset d;
        d.x = Tensor::from(s, std::vector<double>(x.data(), x.data() + n * row));
        d.labels.assign(labels.begin(), labels.begin() + n);
        d.num_classes = num_classes;
        d.split = split;
        return d;
    }
};

struct MiniBatch {
    Tensor x;
    std::vector<int> y;
    int64_t size() const { return static_cast<int64_t>(y.size()); }
};

inline MiniBatch gather(const Dataset& ds, const std::vector<int64_t>& indices) {
    Shape s = ds.x.shape();
    s[0] = static_cast<int64_t>(indices.size());
    const int64_t row = ds.x.numel() / ds.x.dim(0);
    std::vector<double> buf(indices.size() * static_cast<size_t>(row));
    const double* src = ds.x.data();
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy(src + indices[i] * row, src + (indices[i] + 1) * row,
                  buf.begin() + static_cast<int64_t>(i) * row);
    MiniBatch mb;
    mb.x = Tensor::from(s, std::move(buf));
    for (int64_t idx : indices) mb.y.push_back(ds.labels[static_cast<size_t>(idx)]);
    return mb;
}

// Seeded per-epoch permutation over the dataset; the final short batch is
// emitted. Same (seed, epoch) gives the same order.
class MiniBatchIter {
  public:
    MiniBatchIter(const Dataset& ds, int64_t batch_size, uint64_t seed, int epoch) : ds_(&ds), L_(batch_size) {
        const int64_t n = ds.size();
        if (L_ < 1 || L_ > n) throw contract_error("minibatches: batch size must be in [1, N]");
        order_.resize(static_cast<size_t>(n));
        std::iota(order_.begin(), order_.end(), 0);
        Rng rng = Rng::substream(seed, "shuffle", static_cast<uint64_t>(epoch));
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(order_[static_cast<size_t>(i)], order_[rng.below(static_cast<uint64_t>(i) + 1)]);
    }

    bool done() const { return pos_ >= static_cast<int64_t>(order_.size()); }
    int64_t num_batches() const {
        return (static_cast<int64_t>(order_.size()) + L_ - 1) / L_;
    }

    MiniBatch next() {
        if (done()) throw contract_error("minibatches: exhausted");
        const int64_t end = std::min(pos_ + L_, static_cast<int64_t>(order_.size()));
        std::vector<int64_t> idx(order_.begin() + pos_, order_.begin() + end);
        pos_ = end;
        return gather(*ds_, idx);
    }

    const std::vector<int64_t>& order() const { return order_; }

  private:
    const Dataset* ds_;
    int64_t L_;
    int64_t pos_ = 0;
    std::vector<int64_t> order_;
};

// ---------------------------------------------------------------------------
// CIFAR binary formats. CIFAR-10 records: 1 label byte + 3072 pixel bytes
// (R,G,B planes); CIFAR-100 records: coarse byte, fine byte, 3072 pixels.
// Pixels map to [0,1] by /255, record order preserved.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void parse_records(const std::vector<unsigned char>& bytes, const std::string& path,
                          int label_bytes, int label_offset, int num_classes,
                          std::vector<double>& pixels, std::vector<int>& labels) {
    const size_t record = static_cast<size_t>(label_bytes) + 3072;
    if (bytes.empty() || bytes.size() % record != 0)
        throw data_error(path + ": size " + std::to_string(bytes.size()) +
                         " is not a multiple of the record size " + std::to_string(record));
    const size_t n = bytes.size() / record;
    pixels.reserve(pixels.size() + n * 3072);
    labels.reserve(labels.size() + n);
    for (size_t i = 0; i < n; ++i) {
        const unsigned char* rec = bytes.data() + i * record;
        const int y = rec[label_offset];
        if (y >= num_classes)
            throw data_error(path + ": label " + std::to_string(y) + " out of range in record " +
                             std::to_string(i));
        labels.push_back(y);
        for (size_t p = 0; p < 3072; ++p)
            pixels.push_back(static_cast<double>(rec[label_bytes + p]) / 255.0);
    }
}

} // namespace detail

inline Dataset parse_cifar10_files(const std::vector<std::string>& paths, Split split) {
    std::vector<double> pixels;
    std::vector<int> labels;
    for (const std::string& p : paths)
        detail::parse_records(detail::read_file(p), p, 1, 0, 10, pixels, labels);
    Dataset ds;
    ds.num_classes = 10;
    ds.split = split;
    ds.labels = std::move(labels);
    ds.x = Tensor::from({static_cast<int64_t>(ds.labels.size()), 3, 32, 32}, std::move(pixels));
    ds.check();
    return ds;
}

inline Dataset parse_cifar10(const std::string& dir, Split split) {
    std::vector<std::string> files;
    if (split == Split::train)
        for (int i = 1; i <= 5; ++i) files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
    else
        files.push_back(dir + "/test_batch.bin");
    return parse_cifar10_files(files, split);
}

enum class Cifar100Labels { fine, coarse };

inline Dataset parse_cifar100_files(const std::vector<std::string>& paths, Split split,
                                    Cifar100Labels mode = Cifar100Labels::fine) {
    std::vector<double> pixels;
    std::vector<int> labels;
    const int num_classes = mode == Cifar100Labels::fine ? 100 : 20;
    const int offset = mode == Cifar100Labels::fine ? 1 : 0;
    for (const std::string& p : paths)
        detail::parse_records(detail::read_file(p), p, 2, offset, num_classes, pixels, labels);
    Dataset ds;
    ds.num_classes = num_classes;
    ds.split = split;
    ds.labels = std::move(labels);
    ds.x = Tensor::from({static_cast<int64_t>(ds.labels.size()), 3, 32, 32}, std::move(pixels));
    ds.check();
    return ds;
}

inline Dataset parse_cifar100(const std::string& dir, Split split,
                              Cifar100Labels mode = Cifar100Labels::fine) {
    return parse_cifar100_files({dir + (split == Split::train ? "/train.bin" : "/test.bin")}, split, mode);
}

// Writes CIFAR-10 record layout. Values on the k/255 grid round-trip exactly;
// anything else is clamped and quantized.
inline void write_cifar10_file(const std::string& path, const Dataset& ds) {
    if (ds.x.rank() != 4 || ds.x.dim(1) != 3 || ds.x.dim(2) != 32 || ds.x.dim(3) != 32)
        throw contract_error("write_cifar10_file: dataset is not [N,3,32,32]");
    if (ds.num_classes > 256) throw contract_error("write_cifar10_file: labels exceed one byte");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path);
    const double* px = ds.x.data();
    for (int64_t i = 0; i < ds.size(); ++i) {
        out.put(static_cast<char>(ds.labels[static_cast<size_t>(i)]));
        for (int64_t p = 0; p < 3072; ++p) {
            const double v = std::clamp(px[i * 3072 + p], 0.0, 1.0);
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    if (!out) throw data_error("short write to " + path);
}

// ---------------------------------------------------------------------------
// Synthetic low-intrinsic-dimension datasets
// ---------------------------------------------------------------------------

// Samples live on a smooth intrinsic_dim-dimensional surface embedded in
// ambient_dim by a random polynomial map; the class is a linear partition of
// the intrinsic coordinates, so a linear probe on the true coordinates is
// perfect by construction. degree=1 gives the linear-subspace variant used
// by the PCA residual tests.
struct SynthSpec {
    int64_t n = 1000;
    int intrinsic_dim = 4;
    int ambient_dim = 64;
    int classes = 2;
    double noise = 0.0;
    uint64_t seed = 0;
    int degree = 2;          // 1 = linear embedding, 2 adds quadratic terms
    double margin = 0.0;     // resample intrinsic points this close to a class boundary
    double linear_scale = 0.3; // down-weights the linear block so PCA axes are not the labels
    Split split = Split::train;
    bool image_shape = false; // emit [N,3,32,32] instead of [N,ambient] (ambient must be 3072)
};

// Construction internals, exposed for verification: labels are
// argmax_c(class_dirs[c] . t) of the intrinsic coordinates t.
struct SynthDebug {
    std::vector<double> intrinsic;  // n x intrinsic_dim
    std::vector<double> class_dirs; // classes x intrinsic_dim
    std::vector<double> embedding;  // ambient_dim x nfeat
};

inline Dataset synthetic_manifold(const SynthSpec& spec, SynthDebug* debug = nullptr) {
    if (spec.intrinsic_dim >= spec.ambient_dim)
        throw contract_error("synthetic_manifold: intrinsic_dim must be < ambient_dim");
    if (spec.classes < 2) throw contract_error("synthetic_manifold: need >= 2 classes");
    if (spec.degree != 1 && spec.degree != 2)
        throw contract_error("synthetic_manifold: degree must be 1 or 2");
    if (spec.image_shape && spec.ambient_dim != 3072)
        throw contract_error("synthetic_manifold: image_shape requires ambient_dim == 3072");

    const int d = spec.intrinsic_dim;
    const int nfeat = spec.degree == 1 ? d : d + d * (d + 1) / 2;

    // The manifold itself (embedding + class directions) depends only on the
    // seed, so train and test splits sample the same surface.
    Rng geo = Rng::substream(spec.seed, "synth-manifold");
    std::vector<double> embed(static_cast<size_t>(spec.ambient_dim) * nfeat);
    const double scale = 1.0 / std::sqrt(static_cast<double>(nfeat));
    for (int a = 0; a < spec.ambient_dim; ++a)
        for (int f = 0; f < nfeat; ++f) {
            double v = geo.normal() * scale;
            if (f < d) v *= spec.linear_scale;
            embed[static_cast<size_t>(a) * nfeat + f] = v;
        }
    std::vector<double> cls_dirs(static_cast<size_t>(spec.classes) * d);
    for (double& v : cls_dirs) v = geo.normal();

    Rng smp = Rng::substream(spec.seed, "synth-samples",
                             spec.split == Split::train ? 0u : 1u);
    std::vector<double> ambient(static_cast<size_t>(spec.n) * spec.ambient_dim);
    std::vector<int> labels(static_cast<size_t>(spec.n));
    std::vector<double> t(static_cast<size_t>(d)), phi(static_cast<size_t>(nfeat));
    for (int64_t i = 0; i < spec.n; ++i) {
        int label = 0;
        for (int attempt = 0;; ++attempt) {
            for (double& v : t) v = smp.uniform(-1.0, 1.0);
            double best = -1e300, second = -1e300;
            for (int c = 0; c < spec.classes; ++c) {
                double s = 0.0;
                for (int j = 0; j < d; ++j) s += cls_dirs[static_cast<size_t>(c) * d + j] * t[static_cast<size_t>(j)];
                if (s > best) {
                    second = best;
                    best = s;
                    label = c;
                } else if (s > second) {
                    second = s;
                }
            }
            if (spec.margin <= 0.0 || best - second >= spec.margin || attempt >= 64) break;
        }
        labels[static_cast<size_t>(i)] = label;

        int f = 0;
        for (int j = 0; j < d; ++j) phi[static_cast<size_t>(f++)] = t[static_cast<size_t>(j)];
        if (spec.degree == 2)
            for (int j = 0; j < d; ++j)
                for (int k = j; k < d; ++k) phi[static_cast<size_t>(f++)] = t[static_cast<size_t>(j)] * t[static_cast<size_t>(k)];

        for (int a = 0; a < spec.ambient_dim; ++a) {
            double v = 0.0;
            for (int q = 0; q < nfeat; ++q) v += embed[static_cast<size_t>(a) * nfeat + q] * phi[static_cast<size_t>(q)];
            if (spec.noise > 0.0) v += spec.noise * smp.normal();
            ambient[static_cast<size_t>(i) * spec.ambient_dim + a] = v;
        }
        if (debug) debug->intrinsic.insert(debug->intrinsic.end(), t.begin(), t.end());
    }
    if (debug) {
        debug->class_dirs = cls_dirs;
        debug->embedding = embed;
    }

    // Image mode squashes into [0,1] so the dataset can live in the CIFAR
    // record format; the logistic keeps the surface smooth and is the same
    // map for every split.
    if (spec.image_shape)
        for (double& v : ambient) v = 1.0 / (1.0 + std::exp(-v));

    Dataset ds;
    ds.num_classes = spec.classes;
    ds.split = spec.split;
    ds.labels = std::move(labels);
    ds.x = spec.image_shape
               ? Tensor::from({spec.n, 3, 32, 32}, std::move(ambient))
               : Tensor::from({spec.n, spec.ambient_dim}, std::move(ambient));
    ds.check();
    return ds;
}

} // namespace mrt
