#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

// Checkpoint container: 8-byte magic, little-endian u64 manifest length,
// JSON manifest, then all tensor payloads as little-endian f64. The
// manifest maps each tensor name to its shape and byte offset into the
// payload and carries free-form metadata (config, step, rng state).

constexpr char kCheckpointMagic[8] = {'P', 'R', 'S', 'E', 'G', 'C', 'K', '1'};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

inline double get_f64(const std::string& in, std::size_t at) { return std::bit_cast<double>(get_u64(in, at)); }

}  // namespace detail

struct Checkpoint {
    nlohmann::json meta;  // everything in the manifest except the tensor table
    std::map<std::string, Tensor> tensors;
};

inline void save_checkpoint(const std::string& path, const std::vector<std::pair<std::string, Tensor>>& tensors,
                            const nlohmann::json& meta) {
    nlohmann::json table = nlohmann::json::object();
    std::string payload;
    for (const auto& [name, t] : tensors) {
        if (table.contains(name)) throw std::invalid_argument("checkpoint: duplicate tensor name " + name);
        table[name] = {{"shape", t.shape()}, {"offset", payload.size()}, {"numel", t.size()}};
        for (double v : t.data()) detail::put_f64(payload, v);
    }
    nlohmann::json manifest = meta;
    manifest["tensors"] = std::move(table);
    const std::string mstr = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    std::string len;
    detail::put_u64(len, mstr.size());
    out.write(len.data(), static_cast<std::streamsize>(len.size()));
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("checkpoint: write to " + path + " failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::string(bytes, 0, 8) != std::string(kCheckpointMagic, 8))
        throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
    const std::uint64_t mlen = detail::get_u64(bytes, 8);
    if (16 + mlen > bytes.size()) throw std::runtime_error("checkpoint: " + path + " is truncated");
    nlohmann::json manifest = nlohmann::json::parse(bytes.substr(16, mlen));
    const std::size_t payload_at = 16 + static_cast<std::size_t>(mlen);

    Checkpoint ckpt;
    for (auto& [name, entry] : manifest.at("tensors").items()) {
        const Shape shape = entry.at("shape").get<Shape>();
        const std::size_t numel = entry.at("numel").get<std::size_t>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        if (payload_at + offset + 8 * numel > bytes.size())
            throw std::runtime_error("checkpoint: tensor " + name + " runs past the end of " + path);
        std::vector<double> data(numel);
        for (std::size_t i = 0; i < numel; ++i) data[i] = detail::get_f64(bytes, payload_at + offset + 8 * i);
        ckpt.tensors.emplace(name, Tensor::from_data(shape, std::move(data)));
    }
    manifest.erase("tensors");
    ckpt.meta = std::move(manifest);
    return ckpt;
}

}  // namespace prseg
