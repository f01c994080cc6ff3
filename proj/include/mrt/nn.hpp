#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mrt/graph.hpp"
#include "mrt/ops.hpp"
#include "mrt/rng.hpp"

namespace mrt {

struct ConvSpec {
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
};

struct ExtractorItem {
    enum class Kind { conv, pool } kind = Kind::conv;
    ConvSpec conv;
    static ExtractorItem make_conv(int out, int k = 3, int s = 1, int p = 1) {
        return {Kind::conv, {out, k, s, p}};
    }
    static ExtractorItem make_pool() { return {Kind::pool, {}}; }
};

// Architecture description: a conv/pool feature extractor followed either by
// the halving FC bottleneck (widths K,K,K/2,K/2,...,W,W with
// halving_period=2) or by the classic wide two-layer FC head used as the
// memory baseline. A classifier layer to num_classes closes both.
struct NetworkConfig {
    std::vector<ExtractorItem> extractor;
    Shape input_shape;            // {C,H,W} or {D}
    int bottleneck_start_width = 64; // K
    int bottleneck_min_width = 16;   // W
    int halving_period = 2;
    int num_classes = 10;
    enum class Head { bottleneck, vanilla } head = Head::bottleneck;
    int vanilla_width = 4096;
    bool taps_post_activation = true;
    bool freeze_extractor = false;

    std::vector<int> fc_widths() const {
        std::vector<int> widths;
        if (head == Head::vanilla) {
            widths.assign(2, vanilla_width);
            return widths;
        }
        for (int w = bottleneck_start_width;; w /= 2) {
            for (int r = 0; r < halving_period; ++r) widths.push_back(w);
            if (w == bottleneck_min_width) break;
        }
        return widths;
    }

    void validate() const {
        if (input_shape.empty()) throw config_error("network: input_shape is empty");
        for (int64_t d : input_shape)
            if (d <= 0) throw config_error("network: input_shape entries must be positive");
        if (!extractor.empty() && input_shape.size() != 3)
            throw config_error("network: conv extractor requires a CxHxW input shape");
        if (num_classes < 2) throw config_error("network: num_classes must be >= 2");
        if (halving_period < 1) throw config_error("network: halving_period must be >= 1");
        const int K = bottleneck_start_width, W = bottleneck_min_width;
        if (K < 1 || W < 1 || K < W)
            throw config_error("network: need bottleneck widths K >= W >= 1");
        const int ratio = K / W;
        if (ratio * W != K || (ratio & (ratio - 1)) != 0)
            throw config_error("network: K/W must be a power of two (K=" + std::to_string(K) +
                               ", W=" + std::to_string(W) + ")");
        if (head == Head::vanilla && vanilla_width < 1)
            throw config_error("network: vanilla_width must be >= 1");
    }
};

// Spatial shape after the extractor, and the flattened FC input size.
inline Shape extractor_output_shape(const NetworkConfig& cfg) {
    if (cfg.extractor.empty()) return cfg.input_shape;
    int64_t C = cfg.input_shape[0], H = cfg.input_shape[1], W = cfg.input_shape[2];
    for (const ExtractorItem& it : cfg.extractor) {
        if (it.kind == ExtractorItem::Kind::conv) {
            const ConvSpec& c = it.conv;
            if ((H + 2 * c.pad - c.kernel) % c.stride != 0 || (W + 2 * c.pad - c.kernel) % c.stride != 0)
                throw config_error("network: conv layer yields non-integral output size");
            H = (H + 2 * c.pad - c.kernel) / c.stride + 1;
            W = (W + 2 * c.pad - c.kernel) / c.stride + 1;
            C = c.out_channels;
        } else {
            H /= 2;
            W /= 2;
        }
        if (H < 1 || W < 1) throw config_error("network: extractor shrinks input to nothing");
    }
    return {C, H, W};
}

inline int64_t extractor_output_numel(const NetworkConfig& cfg) {
    return numel_of(extractor_output_shape(cfg));
}

struct Layer {
    enum class Kind { conv, pool, fc } kind = Kind::fc;
    ConvSpec conv;
    int64_t in_features = 0, out_features = 0;
    bool output_layer = false; // classifier: no activation, no tap
    Tensor weight;             // conv [F,C,kh,kw]; fc [in,out]
    Tensor bias;               // [F] / [out]
};

// Everything one forward pass produced that the losses, optimizer and probes
// need: logits, the flattened extractor output, the per-bottleneck-layer tap
// activations, and the parameter leaves of this graph (declaration order).
struct ForwardResult {
    Tensor logits;
    Tensor extractor_out;
    std::vector<Tensor> taps;      // pre- or post-activation per config
    std::vector<Tensor> post_acts; // always post-activation (the next layer's input)
    bool taps_post = true;
    std::vector<Tensor> param_leaves;
    std::vector<std::pair<int, int>> fc_param_idx; // bottleneck layer k -> (w,b) in param_leaves
};

class Network {
  public:
    static Network build(const NetworkConfig& cfg, uint64_t seed) {
        cfg.validate();
        Network net;
        net.cfg_ = cfg;
        Rng rng = Rng::substream(seed, "init");

        Shape cur = cfg.input_shape;
        for (const ExtractorItem& it : cfg.extractor) {
            Layer l;
            if (it.kind == ExtractorItem::Kind::conv) {
                l.kind = Layer::Kind::conv;
                l.conv = it.conv;
                const int64_t fan_in =
                    cur[0] * static_cast<int64_t>(it.conv.kernel) * it.conv.kernel;
                l.weight = kaiming_uniform(
                    {it.conv.out_channels, cur[0], it.conv.kernel, it.conv.kernel}, fan_in, rng);
                l.bias = Tensor::zeros({it.conv.out_channels});
                cur = {it.conv.out_channels,
                       (cur[1] + 2 * it.conv.pad - it.conv.kernel) / it.conv.stride + 1,
                       (cur[2] + 2 * it.conv.pad - it.conv.kernel) / it.conv.stride + 1};
            } else {
                l.kind = Layer::Kind::pool;
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
            }
            net.layers_.push_back(std::move(l));
        }

        net.fc_begin_ = net.layers_.size();
        int64_t in = extractor_output_numel(cfg);
        for (int width : cfg.fc_widths()) {
            net.layers_.push_back(make_fc(in, width, false, rng));
            in = width;
        }
        net.layers_.push_back(make_fc(in, cfg.num_classes, true, rng));
        return net;
    }

    const NetworkConfig& config() const { return cfg_; }
    const std::vector<Layer>& layers() const { return layers_; }
    size_t num_bottleneck_layers() const { return layers_.size() - fc_begin_ - 1; }

    // Parameter tensors in declaration order (weight then bias per layer).
    std::vector<const Tensor*> parameters() const {
        std::vector<const Tensor*> ps;
        for (const Layer& l : layers_) {
            if (l.kind == Layer::Kind::pool) continue;
            ps.push_back(&l.weight);
            ps.push_back(&l.bias);
        }
        return ps;
    }

    // Replaces a parameter (optimizer update path; tensors stay immutable).
    void set_parameter(size_t index, Tensor value) {
        size_t i = 0;
        for (Layer& l : layers_) {
            if (l.kind == Layer::Kind::pool) continue;
            if (i == index) {
                require_same_shape(l.weight, value, "set_parameter");
                l.weight = std::move(value);
                return;
            }
            ++i;
            if (i == index) {
                require_same_shape(l.bias, value, "set_parameter");
                l.bias = std::move(value);
                return;
            }
            ++i;
        }
        throw contract_error("set_parameter: index out of range");
    }

    std::pair<std::vector<int64_t>, int64_t> count_parameters() const {
        std::vector<int64_t> per_layer;
        int64_t total = 0;
        for (const Layer& l : layers_) {
            if (l.kind == Layer::Kind::pool) continue;
            const int64_t n = l.weight.numel() + l.bias.numel();
            per_layer.push_back(n);
            total += n;
        }
        return {per_layer, total};
    }

    // track_params=false runs the same code path value-only (evaluation).
    ForwardResult forward(GradGraph& g, const Tensor& x, bool track_params = true) const {
        check_input(x);
        ForwardResult r;
        r.taps_post = cfg_.taps_post_activation;

        // Leaf all parameters up front so gradient slots exist in declaration
        // order; frozen extractor parameters stay constants.
        for (size_t li = 0; li < layers_.size(); ++li) {
            const Layer& l = layers_[li];
            if (l.kind == Layer::Kind::pool) continue;
            const bool frozen =
                !track_params || (cfg_.freeze_extractor && l.kind == Layer::Kind::conv);
            r.param_leaves.push_back(frozen ? l.weight : g.leaf(l.weight));
            r.param_leaves.push_back(frozen ? l.bias : g.leaf(l.bias));
            if (l.kind == Layer::Kind::fc && !l.output_layer)
                r.fc_param_idx.emplace_back(static_cast<int>(r.param_leaves.size()) - 2,
                                            static_cast<int>(r.param_leaves.size()) - 1);
        }

        Tensor h = x;
        size_t pi = 0; // index into param_leaves
        if (fc_begin_ > 0) g.set_phase(Phase::fwd1);
        for (size_t li = 0; li < fc_begin_; ++li) {
            const Layer& l = layers_[li];
            if (l.kind == Layer::Kind::pool) {
                h = ops::maxpool2(g, h);
                continue;
            }
            h = ops::conv2d(g, h, r.param_leaves[pi], l.conv.stride, l.conv.pad);
            h = ops::add_bias(g, h, r.param_leaves[pi + 1]);
            h = ops::relu(g, h);
            pi += 2;
        }

        g.set_phase(Phase::fwd2);
        h = ops::flatten(g, h);
        r.extractor_out = h;
        for (size_t li = fc_begin_; li < layers_.size(); ++li) {
            const Layer& l = layers_[li];
            Tensor pre = ops::add_bias(g, ops::matmul(g, h, r.param_leaves[pi]), r.param_leaves[pi + 1]);
            pi += 2;
            if (l.output_layer) {
                r.logits = pre;
                break;
            }
            Tensor post = ops::relu(g, pre);
            r.taps.push_back(cfg_.taps_post_activation ? post : pre);
            r.post_acts.push_back(post);
            h = post;
        }
        return r;
    }

  private:
    static Tensor kaiming_uniform(Shape shape, int64_t fan_in, Rng& rng) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Tensor t = Tensor::zeros(std::move(shape));
        double* p = t.mutable_data();
        for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(-bound, bound);
        return t;
    }

    static Layer make_fc(int64_t in, int64_t out, bool output_layer, Rng& rng) {
        Layer l;
        l.kind = Layer::Kind::fc;
        l.in_features = in;
        l.out_features = out;
        l.output_layer = output_layer;
        l.weight = kaiming_uniform({in, out}, in, rng);
        l.bias = Tensor::zeros({out});
        return l;
    }

    void check_input(const Tensor& x) const {
        const Shape& in = cfg_.input_shape;
        bool ok = x.rank() == static_cast<int>(in.size()) + 1;
        if (ok)
            for (size_t i = 0; i < in.size(); ++i)
                if (x.dim(static_cast<int>(i) + 1) != in[i]) ok = false;
        if (!ok)
            throw dimension_error("forward: input " + shape_str(x.shape()) +
                                  " does not match configured shape " + shape_str(in));
    }

    NetworkConfig cfg_;
    std::vector<Layer> layers_;
    size_t fc_begin_ = 0;
};

// Applies bottleneck FC layer k to `input` using this forward pass's leaves;
// returns (pre, post) activations. This is how the scoped losses rebuild a
// layer pair behind a barrier while hitting the same parameter gradients.
inline std::pair<Tensor, Tensor> apply_bottleneck_layer(GradGraph& g, const ForwardResult& fwd, int k,
                                                        const Tensor& input) {
    const auto& [wi, bi] = fwd.fc_param_idx.at(static_cast<size_t>(k));
    Tensor pre = ops::add_bias(g, ops::matmul(g, input, fwd.param_leaves[static_cast<size_t>(wi)]),
                               fwd.param_leaves[static_cast<size_t>(bi)]);
    return {pre, ops::relu(g, pre)};
}

// Static parameter-count plan straight from the config (nothing allocated);
// matches Network::count_parameters() of the built network.
inline std::pair<std::vector<int64_t>, int64_t> planned_parameter_counts(const NetworkConfig& cfg) {
    cfg.validate();
    std::vector<int64_t> per_layer;
    int64_t total = 0;
    int64_t channels = cfg.extractor.empty() ? 0 : cfg.input_shape[0];
    for (const ExtractorItem& it : cfg.extractor) {
        if (it.kind != ExtractorItem::Kind::conv) continue;
        const ConvSpec& c = it.conv;
        const int64_t n =
            static_cast<int64_t>(c.out_channels) * channels * c.kernel * c.kernel + c.out_channels;
        per_layer.push_back(n);
        total += n;
        channels = c.out_channels;
    }
    int64_t in = extractor_output_numel(cfg);
    std::vector<int> widths = cfg.fc_widths();
    widths.push_back(cfg.num_classes);
    for (int w : widths) {
        const int64_t n = in * w + w;
        per_layer.push_back(n);
        total += n;
        in = w;
    }
    return {per_layer, total};
}

// Model-related memory per the ledger taxonomy: parameter storage plus
// persistent non-trainable buffers. These networks carry no such buffers, so
// the category reports zero and exists for the summary-table shape.
struct ModelMemory {
    int64_t parameters_bytes = 0;
    int64_t buffers_bytes = 0;
    int64_t total = 0;
};

inline ModelMemory model_memory(const Network& net, int bytes_per_element) {
    ModelMemory m;
    m.parameters_bytes = net.count_parameters().second * bytes_per_element;
    m.total = m.parameters_bytes + m.buffers_bytes;
    return m;
}

inline ModelMemory model_memory(const NetworkConfig& cfg, int bytes_per_element) {
    ModelMemory m;
    m.parameters_bytes = planned_parameter_counts(cfg).second * bytes_per_element;
    m.total = m.parameters_bytes + m.buffers_bytes;
    return m;
}

// The 13-conv/5-pool VGG16 feature stack, used by the parameter-accounting
// comparisons (never trained here).
inline std::vector<ExtractorItem> vgg16_extractor() {
    std::vector<ExtractorItem> e;
    auto conv = [&](int c) { e.push_back(ExtractorItem::make_conv(c)); };
    auto pool = [&] { e.push_back(ExtractorItem::make_pool()); };
    conv(64), conv(64), pool();
    conv(128), conv(128), pool();
    conv(256), conv(256), conv(256), pool();
    conv(512), conv(512), conv(512), pool();
    conv(512), conv(512), conv(512), pool();
    return e;
}

// Small 4-conv/2-pool stack for 32x32 inputs; the desk-scale stand-in.
inline std::vector<ExtractorItem> desk_extractor() {
    return {ExtractorItem::make_conv(8),  ExtractorItem::make_conv(8),  ExtractorItem::make_pool(),
            ExtractorItem::make_conv(16), ExtractorItem::make_conv(16), ExtractorItem::make_pool()};
}

} // namespace mrt
