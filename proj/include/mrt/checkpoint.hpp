#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "mrt/config.hpp"
#include "mrt/nn.hpp"

namespace mrt {

// Checkpoint layout (little-endian):
//   byte[8]  magic "MRTCKPT1"
//   u32      version (1)
//   u64      config text length, then that many bytes (resolved run config)
//   u64      tensor count
//   per tensor: u64 name length + name bytes, u32 rank, i64[rank] dims,
//               f64[numel] values (row-major, declaration order)

namespace ckpt_detail {

constexpr char kMagic[8] = {'M', 'R', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <class T> void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T> T get(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw data_error(std::string("checkpoint: truncated while reading ") + what);
    return v;
}

} // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const Network& net, const std::string& config_text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("checkpoint: cannot write " + path);
    os.write(ckpt_detail::kMagic, 8);
    ckpt_detail::put<uint32_t>(os, ckpt_detail::kVersion);
    ckpt_detail::put<uint64_t>(os, config_text.size());
    os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

    const auto params = net.parameters();
    ckpt_detail::put<uint64_t>(os, params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string name = "param" + std::to_string(i) + (i % 2 ? ".bias" : ".weight");
        ckpt_detail::put<uint64_t>(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        ckpt_detail::put<uint32_t>(os, static_cast<uint32_t>(params[i]->rank()));
        for (int64_t d : params[i]->shape()) ckpt_detail::put<int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(params[i]->data()),
                 static_cast<std::streamsize>(params[i]->numel() * static_cast<int64_t>(sizeof(double))));
    }
    if (!os) throw data_error("checkpoint: short write to " + path);
}

struct LoadedCheckpoint {
    RunConfig run_config;
    std::string config_text;
    Network net;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw data_error("checkpoint: cannot open " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, ckpt_detail::kMagic, 8) != 0)
        throw data_error("checkpoint: bad magic in " + path);
    const auto version = ckpt_detail::get<uint32_t>(is, "version");
    if (version != ckpt_detail::kVersion)
        throw data_error("checkpoint: unsupported version " + std::to_string(version));

    const auto cfg_len = ckpt_detail::get<uint64_t>(is, "config length");
    std::string config_text(cfg_len, '\0');
    if (!is.read(config_text.data(), static_cast<std::streamsize>(cfg_len)))
        throw data_error("checkpoint: truncated config text");

    LoadedCheckpoint out{parse_config_text(config_text), config_text,
                         Network(/*rebuilt below*/)};
    out.net = Network::build(to_network_config(out.run_config), out.run_config.seed);

    const auto n_tensors = ckpt_detail::get<uint64_t>(is, "tensor count");
    const auto params = out.net.parameters();
    if (n_tensors != params.size())
        throw data_error("checkpoint: holds " + std::to_string(n_tensors) + " tensors but config builds " +
                         std::to_string(params.size()));
    for (size_t i = 0; i < n_tensors; ++i) {
        const auto name_len = ckpt_detail::get<uint64_t>(is, "name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
            throw data_error("checkpoint: truncated tensor name");
        const auto rank = ckpt_detail::get<uint32_t>(is, "rank");
        Shape shape;
        for (uint32_t d = 0; d < rank; ++d) shape.push_back(ckpt_detail::get<int64_t>(is, "dim"));
        if (shape != params[i]->shape())
            throw data_error("checkpoint: tensor " + name + " has shape " + shape_str(shape) +
                             ", config expects " + shape_str(params[i]->shape()));
        Tensor t = Tensor::zeros(shape);
        if (!is.read(reinterpret_cast<char*>(t.mutable_data()),
                     static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double)))))
            throw data_error("checkpoint: truncated tensor data for " + name);
        out.net.set_parameter(i, std::move(t));
    }
    return out;
}

} // namespace mrt
