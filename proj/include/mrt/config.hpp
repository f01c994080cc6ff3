#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mrt/data.hpp"
#include "mrt/losses.hpp"
#include "mrt/nn.hpp"
#include "mrt/train.hpp"

namespace mrt {

// The full resolved state of one run. Every CLI flag has a key here; files
// use `key = value` lines with '#' comments. serialize() materializes all
// defaults (including auto alpha), so a config echo reparses to the same run.
struct RunConfig {
    uint64_t seed = 0;

    std::string net_extractor = "desk"; // none | desk | vgg16 | conv:OUT[:K[:S[:P]]],pool,...
    std::string net_input_shape = "3x32x32";
    int net_k = 64;
    int net_w = 16;
    int net_halving_period = 2;
    int net_classes = 10;
    std::string net_head = "bottleneck"; // bottleneck | vanilla
    int net_vanilla_width = 4096;
    std::string net_taps = "post"; // post | pre
    bool net_freeze_extractor = false;

    std::string loss_alpha = "auto"; // auto | comma-separated values
    double loss_lambda = 1e-4;
    std::string loss_scope = "scoped"; // scoped | global
    double loss_eps = 1e-12;
    bool loss_normalize_pairs = false;

    int train_epochs = 30;
    double train_lr = 0.01;
    int train_batch_size = 5;
    int train_eval_every = 1;
    int train_eval_batch = 64;

    std::string data_kind = "synthetic"; // synthetic | cifar10 | cifar100
    std::string data_dir;
    std::string data_label_mode = "fine"; // fine | coarse (cifar100)
    int64_t data_train_subset = 0;        // 0 = full split
    int64_t data_test_subset = 0;

    int64_t synth_n_train = 2000;
    int64_t synth_n_test = 1000;
    int synth_intrinsic_dim = 4;
    int synth_ambient_dim = 64;
    int synth_classes = 2;
    double synth_noise = 0.05;
    int synth_degree = 2;
    double synth_margin = 0.0;
    bool synth_image_shape = false;

    bool mem_ledger = true;
    int mem_bytes_per_element = 4;
};

namespace cfg_detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline int64_t to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("config: " + key + ": expected integer, got '" + v + "'");
    }
}

inline uint64_t to_uint(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("config: " + key + ": expected unsigned integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("config: " + key + ": expected number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw config_error("config: " + key + ": expected 0/1/true/false, got '" + v + "'");
}

struct KeyEntry {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline const std::vector<KeyEntry>& registry() {
    static const std::vector<KeyEntry> r = {
        {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_uint("run.seed", v); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        {"net.extractor", [](RunConfig& c, const std::string& v) { c.net_extractor = v; },
         [](const RunConfig& c) { return c.net_extractor; }},
        {"net.input_shape", [](RunConfig& c, const std::string& v) { c.net_input_shape = v; },
         [](const RunConfig& c) { return c.net_input_shape; }},
        {"net.k", [](RunConfig& c, const std::string& v) { c.net_k = static_cast<int>(to_int("net.k", v)); },
         [](const RunConfig& c) { return std::to_string(c.net_k); }},
        {"net.w", [](RunConfig& c, const std::string& v) { c.net_w = static_cast<int>(to_int("net.w", v)); },
         [](const RunConfig& c) { return std::to_string(c.net_w); }},
        {"net.halving_period",
         [](RunConfig& c, const std::string& v) { c.net_halving_period = static_cast<int>(to_int("net.halving_period", v)); },
         [](const RunConfig& c) { return std::to_string(c.net_halving_period); }},
        {"net.classes",
         [](RunConfig& c, const std::string& v) { c.net_classes = static_cast<int>(to_int("net.classes", v)); },
         [](const RunConfig& c) { return std::to_string(c.net_classes); }},
        {"net.head", [](RunConfig& c, const std::string& v) { c.net_head = v; },
         [](const RunConfig& c) { return c.net_head; }},
        {"net.vanilla_width",
         [](RunConfig& c, const std::string& v) { c.net_vanilla_width = static_cast<int>(to_int("net.vanilla_width", v)); },
         [](const RunConfig& c) { return std::to_string(c.net_vanilla_width); }},
        {"net.taps", [](RunConfig& c, const std::string& v) { c.net_taps = v; },
         [](const RunConfig& c) { return c.net_taps; }},
        {"net.freeze_extractor",
         [](RunConfig& c, const std::string& v) { c.net_freeze_extractor = to_bool("net.freeze_extractor", v); },
         [](const RunConfig& c) { return std::string(c.net_freeze_extractor ? "1" : "0"); }},
        {"loss.alpha", [](RunConfig& c, const std::string& v) { c.loss_alpha = v; },
         [](const RunConfig& c) { return c.loss_alpha; }},
        {"loss.lambda", [](RunConfig& c, const std::string& v) { c.loss_lambda = to_double("loss.lambda", v); },
         [](const RunConfig& c) { return num(c.loss_lambda); }},
        {"loss.scope", [](RunConfig& c, const std::string& v) { c.loss_scope = v; },
         [](const RunConfig& c) { return c.loss_scope; }},
        {"loss.eps", [](RunConfig& c, const std::string& v) { c.loss_eps = to_double("loss.eps", v); },
         [](const RunConfig& c) { return num(c.loss_eps); }},
        {"loss.normalize_pairs",
         [](RunConfig& c, const std::string& v) { c.loss_normalize_pairs = to_bool("loss.normalize_pairs", v); },
         [](const RunConfig& c) { return std::string(c.loss_normalize_pairs ? "1" : "0"); }},
        {"train.epochs",
         [](RunConfig& c, const std::string& v) { c.train_epochs = static_cast<int>(to_int("train.epochs", v)); },
         [](const RunConfig& c) { return std::to_string(c.train_epochs); }},
        {"train.lr", [](RunConfig& c, const std::string& v) { c.train_lr = to_double("train.lr", v); },
         [](const RunConfig& c) { return num(c.train_lr); }},
        {"train.batch_size",
         [](RunConfig& c, const std::string& v) { c.train_batch_size = static_cast<int>(to_int("train.batch_size", v)); },
         [](const RunConfig& c) { return std::to_string(c.train_batch_size); }},
        {"train.eval_every",
         [](RunConfig& c, const std::string& v) { c.train_eval_every = static_cast<int>(to_int("train.eval_every", v)); },
         [](const RunConfig& c) { return std::to_string(c.train_eval_every); }},
        {"train.eval_batch",
         [](RunConfig& c, const std::string& v) { c.train_eval_batch = static_cast<int>(to_int("train.eval_batch", v)); },
         [](const RunConfig& c) { return std::to_string(c.train_eval_batch); }},
        {"data.kind", [](RunConfig& c, const std::string& v) { c.data_kind = v; },
         [](const RunConfig& c) { return c.data_kind; }},
        {"data.dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
         [](const RunConfig& c) { return c.data_dir; }},
        {"data.label_mode", [](RunConfig& c, const std::string& v) { c.data_label_mode = v; },
         [](const RunConfig& c) { return c.data_label_mode; }},
        {"data.train_subset",
         [](RunConfig& c, const std::string& v) { c.data_train_subset = to_int("data.train_subset", v); },
         [](const RunConfig& c) { return std::to_string(c.data_train_subset); }},
        {"data.test_subset",
         [](RunConfig& c, const std::string& v) { c.data_test_subset = to_int("data.test_subset", v); },
         [](const RunConfig& c) { return std::to_string(c.data_test_subset); }},
        {"data.synth.n_train",
         [](RunConfig& c, const std::string& v) { c.synth_n_train = to_int("data.synth.n_train", v); },
         [](const RunConfig& c) { return std::to_string(c.synth_n_train); }},
        {"data.synth.n_test",
         [](RunConfig& c, const std::string& v) { c.synth_n_test = to_int("data.synth.n_test", v); },
         [](const RunConfig& c) { return std::to_string(c.synth_n_test); }},
        {"data.synth.intrinsic_dim",
         [](RunConfig& c, const std::string& v) { c.synth_intrinsic_dim = static_cast<int>(to_int("data.synth.intrinsic_dim", v)); },
         [](const RunConfig& c) { return std::to_string(c.synth_intrinsic_dim); }},
        {"data.synth.ambient_dim",
         [](RunConfig& c, const std::string& v) { c.synth_ambient_dim = static_cast<int>(to_int("data.synth.ambient_dim", v)); },
         [](const RunConfig& c) { return std::to_string(c.synth_ambient_dim); }},
        {"data.synth.classes",
         [](RunConfig& c, const std::string& v) { c.synth_classes = static_cast<int>(to_int("data.synth.classes", v)); },
         [](const RunConfig& c) { return std::to_string(c.synth_classes); }},
        {"data.synth.noise",
         [](RunConfig& c, const std::string& v) { c.synth_noise = to_double("data.synth.noise", v); },
         [](const RunConfig& c) { return num(c.synth_noise); }},
        {"data.synth.degree",
         [](RunConfig& c, const std::string& v) { c.synth_degree = static_cast<int>(to_int("data.synth.degree", v)); },
         [](const RunConfig& c) { return std::to_string(c.synth_degree); }},
        {"data.synth.margin",
         [](RunConfig& c, const std::string& v) { c.synth_margin = to_double("data.synth.margin", v); },
         [](const RunConfig& c) { return num(c.synth_margin); }},
        {"data.synth.image_shape",
         [](RunConfig& c, const std::string& v) { c.synth_image_shape = to_bool("data.synth.image_shape", v); },
         [](const RunConfig& c) { return std::string(c.synth_image_shape ? "1" : "0"); }},
        {"memory.ledger", [](RunConfig& c, const std::string& v) { c.mem_ledger = to_bool("memory.ledger", v); },
         [](const RunConfig& c) { return std::string(c.mem_ledger ? "1" : "0"); }},
        {"memory.bytes_per_element",
         [](RunConfig& c, const std::string& v) { c.mem_bytes_per_element = static_cast<int>(to_int("memory.bytes_per_element", v)); },
         [](const RunConfig& c) { return std::to_string(c.mem_bytes_per_element); }},
    };
    return r;
}

} // namespace cfg_detail

inline void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& e : cfg_detail::registry()) {
        if (key == e.key) {
            e.set(cfg, cfg_detail::trim(value));
            return;
        }
    }
    std::string valid;
    for (const auto& e : cfg_detail::registry()) valid += std::string("\n  ") + e.key;
    throw config_error("config: unknown key '" + key + "'; valid keys are:" + valid);
}

// "key=value" (one --set argument)
inline void config_set_kv(RunConfig& cfg, const std::string& kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw config_error("config: expected key=value, got '" + kv + "'");
    config_set(cfg, cfg_detail::trim(kv.substr(0, eq)), cfg_detail::trim(kv.substr(eq + 1)));
}

inline RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = cfg_detail::trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config: line " + std::to_string(lineno) + " is not key = value: '" + line +
                               "'");
        config_set(cfg, cfg_detail::trim(line.substr(0, eq)), cfg_detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str());
}

// Canonical echo: every key, registry order, defaults materialized.
inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& e : cfg_detail::registry()) os << e.key << " = " << e.get(cfg) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Resolution into typed module configs
// ---------------------------------------------------------------------------

inline std::vector<ExtractorItem> parse_extractor(const std::string& spec) {
    if (spec == "none" || spec.empty()) return {};
    if (spec == "desk") return desk_extractor();
    if (spec == "vgg16") return vgg16_extractor();
    std::vector<ExtractorItem> items;
    for (const std::string& raw : cfg_detail::split(spec, ',')) {
        const std::string item = cfg_detail::trim(raw);
        if (item == "pool") {
            items.push_back(ExtractorItem::make_pool());
            continue;
        }
        auto parts = cfg_detail::split(item, ':');
        if (parts[0] != "conv" || parts.size() < 2 || parts.size() > 5)
            throw config_error("net.extractor: bad item '" + item +
                               "' (want conv:OUT[:K[:S[:P]]] or pool)");
        const int out = static_cast<int>(cfg_detail::to_int("net.extractor", parts[1]));
        const int k = parts.size() > 2 ? static_cast<int>(cfg_detail::to_int("net.extractor", parts[2])) : 3;
        const int s = parts.size() > 3 ? static_cast<int>(cfg_detail::to_int("net.extractor", parts[3])) : 1;
        const int p = parts.size() > 4 ? static_cast<int>(cfg_detail::to_int("net.extractor", parts[4])) : 1;
        items.push_back(ExtractorItem::make_conv(out, k, s, p));
    }
    return items;
}

inline Shape parse_input_shape(const std::string& spec) {
    Shape shape;
    for (const std::string& part : cfg_detail::split(spec, 'x'))
        shape.push_back(cfg_detail::to_int("net.input_shape", cfg_detail::trim(part)));
    return shape;
}

inline NetworkConfig to_network_config(const RunConfig& cfg) {
    NetworkConfig nc;
    nc.extractor = parse_extractor(cfg.net_extractor);
    nc.input_shape = parse_input_shape(cfg.net_input_shape);
    nc.bottleneck_start_width = cfg.net_k;
    nc.bottleneck_min_width = cfg.net_w;
    nc.halving_period = cfg.net_halving_period;
    nc.num_classes = cfg.net_classes;
    if (cfg.net_head == "bottleneck")
        nc.head = NetworkConfig::Head::bottleneck;
    else if (cfg.net_head == "vanilla")
        nc.head = NetworkConfig::Head::vanilla;
    else
        throw config_error("net.head: expected bottleneck or vanilla, got '" + cfg.net_head + "'");
    nc.vanilla_width = cfg.net_vanilla_width;
    if (cfg.net_taps == "post")
        nc.taps_post_activation = true;
    else if (cfg.net_taps == "pre")
        nc.taps_post_activation = false;
    else
        throw config_error("net.taps: expected post or pre, got '" + cfg.net_taps + "'");
    nc.freeze_extractor = cfg.net_freeze_extractor;
    nc.validate();
    return nc;
}

inline LossWeights to_loss_weights(const RunConfig& cfg, const NetworkConfig& nc) {
    LossWeights lw;
    const size_t n_pairs = losses::regularized_pairs(nc.fc_widths().size()).size();
    if (cfg.loss_alpha == "auto") {
        lw.alpha = LossWeights::default_alpha(n_pairs);
    } else {
        for (const std::string& part : cfg_detail::split(cfg.loss_alpha, ','))
            lw.alpha.push_back(cfg_detail::to_double("loss.alpha", cfg_detail::trim(part)));
        if (lw.alpha.size() != n_pairs)
            throw config_error("loss.alpha: " + std::to_string(lw.alpha.size()) + " weights given but " +
                               std::to_string(n_pairs) + " layer pairs are regularized");
    }
    lw.lambda = cfg.loss_lambda;
    if (cfg.loss_scope == "scoped")
        lw.scope_policy = LossWeights::Scope::scoped;
    else if (cfg.loss_scope == "global")
        lw.scope_policy = LossWeights::Scope::global;
    else
        throw config_error("loss.scope: expected scoped or global, got '" + cfg.loss_scope + "'");
    lw.eps = cfg.loss_eps;
    lw.normalize_pairs = cfg.loss_normalize_pairs;
    lw.validate();
    return lw;
}

inline TrainConfig to_train_config(const RunConfig& cfg) {
    TrainConfig tc;
    tc.net = to_network_config(cfg);
    tc.loss = to_loss_weights(cfg, tc.net);
    tc.epochs = cfg.train_epochs;
    tc.lr = cfg.train_lr;
    tc.batch_size = cfg.train_batch_size;
    tc.eval_every = cfg.train_eval_every;
    tc.eval_batch = cfg.train_eval_batch;
    tc.seed = cfg.seed;
    tc.ledger_enabled = cfg.mem_ledger;
    tc.bytes_per_element = cfg.mem_bytes_per_element;
    tc.validate();
    return tc;
}

// Materializes "auto" values so the echo is fully explicit.
inline void resolve_config(RunConfig& cfg) {
    const NetworkConfig nc = to_network_config(cfg);
    const LossWeights lw = to_loss_weights(cfg, nc);
    std::ostringstream os;
    for (size_t i = 0; i < lw.alpha.size(); ++i) os << (i ? "," : "") << cfg_detail::num(lw.alpha[i]);
    cfg.loss_alpha = lw.alpha.empty() ? "" : os.str();
}

inline SynthSpec to_synth_spec(const RunConfig& cfg, Split split) {
    SynthSpec s;
    s.n = split == Split::train ? cfg.synth_n_train : cfg.synth_n_test;
    s.intrinsic_dim = cfg.synth_intrinsic_dim;
    s.ambient_dim = cfg.synth_ambient_dim;
    s.classes = cfg.synth_classes;
    s.noise = cfg.synth_noise;
    s.seed = cfg.seed;
    s.degree = cfg.synth_degree;
    s.margin = cfg.synth_margin;
    s.image_shape = cfg.synth_image_shape;
    s.split = split;
    return s;
}

// Loads the configured dataset; the CIFAR directory comes from data.dir or
// the MRT_DATA_DIR environment variable.
inline Dataset load_dataset(const RunConfig& cfg, Split split) {
    if (cfg.data_kind == "synthetic") {
        Dataset ds = synthetic_manifold(to_synth_spec(cfg, split));
        return ds;
    }
    std::string dir = cfg.data_dir;
    if (dir.empty()) {
        const char* env = std::getenv("MRT_DATA_DIR");
        if (env) dir = env;
    }
    if (dir.empty())
        throw data_error("data: no dataset directory (set data.dir or MRT_DATA_DIR)");
    Dataset ds;
    if (cfg.data_kind == "cifar10") {
        ds = parse_cifar10(dir, split);
    } else if (cfg.data_kind == "cifar100") {
        const Cifar100Labels mode =
            cfg.data_label_mode == "coarse" ? Cifar100Labels::coarse : Cifar100Labels::fine;
        ds = parse_cifar100(dir, split, mode);
    } else {
        throw config_error("data.kind: expected synthetic, cifar10 or cifar100, got '" + cfg.data_kind +
                           "'");
    }
    const int64_t cap = split == Split::train ? cfg.data_train_subset : cfg.data_test_subset;
    return cap > 0 ? ds.subset(cap) : ds;
}

} // namespace mrt
