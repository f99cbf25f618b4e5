// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "hlm/model.hpp"

namespace hlm {

// Binary checkpoint container:
//   magic "HLMCKPT\n", u32 version, u64 meta length + meta text (key=value
//   lines), u64 tensor count, then per tensor: u32 name length, name bytes,
//   u32 rank, i64 dims, raw little-endian float32 data.
// Floats are written verbatim from memory (little-endian hosts), so a
// save/load round trip restores values bit-exactly.

namespace ckpt {
inline constexpr char kMagic[8] = {'H', 'L', 'M', 'C', 'K', 'P', 'T', '\n'};
inline constexpr uint32_t kVersion = 1;
}  // namespace ckpt

struct TensorBlob {
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> meta;
    std::map<std::string, TensorBlob> tensors;

    const std::string* find_meta(const std::string& key) const {
        for (const auto& [k, v] : meta)
            if (k == key) return &v;
        return nullptr;
    }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

template <typename T>
void write_pod(std::FILE* f, T v) {
    std::fwrite(&v, sizeof(T), 1, f);
}

template <typename T>
T read_pod(std::FILE* f, const std::string& path) {
    T v{};
    if (std::fread(&v, sizeof(T), 1, f) != 1) throw DataError("truncated checkpoint: " + path);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, std::string>>& meta,
                            const std::vector<std::pair<std::string, TensorBlob>>& tensors) {
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot write checkpoint: " + path);
    std::fwrite(ckpt::kMagic, 1, sizeof(ckpt::kMagic), f.get());
    detail::write_pod<uint32_t>(f.get(), ckpt::kVersion);
    std::string meta_text;
    for (const auto& [k, v] : meta) meta_text += k + "=" + v + "\n";
    detail::write_pod<uint64_t>(f.get(), meta_text.size());
    std::fwrite(meta_text.data(), 1, meta_text.size(), f.get());
    detail::write_pod<uint64_t>(f.get(), tensors.size());
    for (const auto& [name, blob] : tensors) {
        detail::write_pod<uint32_t>(f.get(), static_cast<uint32_t>(name.size()));
        std::fwrite(name.data(), 1, name.size(), f.get());
        detail::write_pod<uint32_t>(f.get(), static_cast<uint32_t>(blob.shape.size()));
        for (int64_t d : blob.shape) detail::write_pod<int64_t>(f.get(), d);
        std::fwrite(blob.data.data(), sizeof(float), blob.data.size(), f.get());
    }
    if (std::ferror(f.get())) throw DataError("write failure on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, f.get()) != 8 || std::memcmp(magic, ckpt::kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path);
    uint32_t version = detail::read_pod<uint32_t>(f.get(), path);
    if (version != ckpt::kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    Checkpoint out;
    uint64_t meta_len = detail::read_pod<uint64_t>(f.get(), path);
    std::string meta_text(meta_len, '\0');
    if (meta_len && std::fread(meta_text.data(), 1, meta_len, f.get()) != meta_len)
        throw DataError("truncated checkpoint: " + path);
    size_t pos = 0;
    while (pos < meta_text.size()) {
        size_t eol = meta_text.find('\n', pos);
        if (eol == std::string::npos) eol = meta_text.size();
        std::string line = meta_text.substr(pos, eol - pos);
        pos = eol + 1;
        size_t eq = line.find('=');
        if (eq != std::string::npos) out.meta.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    uint64_t count = detail::read_pod<uint64_t>(f.get(), path);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t name_len = detail::read_pod<uint32_t>(f.get(), path);
        std::string name(name_len, '\0');
        if (std::fread(name.data(), 1, name_len, f.get()) != name_len)
            throw DataError("truncated checkpoint: " + path);
        uint32_t rank = detail::read_pod<uint32_t>(f.get(), path);
        TensorBlob blob;
        blob.shape.resize(rank);
        for (uint32_t d = 0; d < rank; ++d) blob.shape[d] = detail::read_pod<int64_t>(f.get(), path);
        int64_t n = numel_of(blob.shape);
        blob.data.resize(static_cast<size_t>(n));
        if (n && std::fread(blob.data.data(), sizeof(float), static_cast<size_t>(n), f.get()) !=
                     static_cast<size_t>(n))
            throw DataError("truncated checkpoint: " + path);
        out.tensors.emplace(std::move(name), std::move(blob));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model <-> checkpoint adapters
// ---------------------------------------------------------------------------

template <typename S>
TensorBlob to_blob(const Tensor<S>& t) {
    TensorBlob b;
    b.shape = t.shape();
    b.data.resize(t.value().size());
    for (size_t i = 0; i < b.data.size(); ++i) b.data[i] = static_cast<float>(t.value()[i]);
    return b;
}

template <typename S>
void from_blob(Tensor<S>& t, const TensorBlob& b, const std::string& name) {
    if (t.shape() != b.shape)
        throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(b.shape) + ", expected " +
                        shape_str(t.shape()));
    for (size_t i = 0; i < b.data.size(); ++i) t.value()[i] = static_cast<S>(b.data[i]);
}

inline std::vector<std::pair<std::string, std::string>> config_meta(const ModelConfig& cfg) {
    return {
        {"hidden", std::to_string(cfg.hidden)},
        {"heads", std::to_string(cfg.heads)},
        {"intra_layers", std::to_string(cfg.intra_layers)},
        {"inter_layers", std::to_string(cfg.inter_layers)},
        {"head_layers", std::to_string(cfg.head_layers)},
        {"intra_ff", std::to_string(cfg.intra_ff)},
        {"inter_ff", std::to_string(cfg.inter_ff)},
        {"vocab_size", std::to_string(cfg.vocab_size)},
        {"max_chars", std::to_string(cfg.max_chars)},
        {"max_words", std::to_string(cfg.max_words)},
        {"dropout", std::to_string(cfg.dropout)},
        {"aggregation", to_string(cfg.aggregation)},
        {"rel_pos_clip_intra", std::to_string(cfg.rel_pos_clip_intra)},
        {"rel_pos_clip_inter", std::to_string(cfg.rel_pos_clip_inter)},
        {"word_residual", cfg.word_residual ? "1" : "0"},
        {"fusion_layers", std::to_string(cfg.fusion_layers)},
        {"pad_multiple", std::to_string(cfg.pad_multiple)},
    };
}

inline ModelConfig config_from_meta(const Checkpoint& c, const std::string& path) {
    auto get = [&](const std::string& key) -> const std::string& {
        const std::string* v = c.find_meta(key);
        if (!v) throw DataError("checkpoint " + path + " missing config key '" + key + "'");
        return *v;
    };
    ModelConfig cfg;
    cfg.hidden = std::stoll(get("hidden"));
    cfg.heads = std::stoll(get("heads"));
    cfg.intra_layers = std::stoll(get("intra_layers"));
    cfg.inter_layers = std::stoll(get("inter_layers"));
    cfg.head_layers = std::stoll(get("head_layers"));
    cfg.intra_ff = std::stoll(get("intra_ff"));
    cfg.inter_ff = std::stoll(get("inter_ff"));
    cfg.vocab_size = std::stoll(get("vocab_size"));
    cfg.max_chars = std::stoll(get("max_chars"));
    cfg.max_words = std::stoll(get("max_words"));
    cfg.dropout = std::stod(get("dropout"));
    cfg.aggregation = aggregation_from_string(get("aggregation"));
    cfg.rel_pos_clip_intra = std::stoll(get("rel_pos_clip_intra"));
    cfg.rel_pos_clip_inter = std::stoll(get("rel_pos_clip_inter"));
    cfg.word_residual = get("word_residual") == "1";
    cfg.fusion_layers = std::stoll(get("fusion_layers"));
    cfg.pad_multiple = std::stoll(get("pad_multiple"));
    cfg.validate();
    return cfg;
}

// Saves model weights (plus any extra tensors such as optimizer state or a
// classifier head) with the config embedded as metadata.
template <typename S>
void save_model(const std::string& path, ModelParams<S>& params, const ModelConfig& cfg,
                std::vector<std::pair<std::string, std::string>> extra_meta = {},
                std::vector<std::pair<std::string, TensorBlob>> extra_tensors = {}) {
    auto meta = config_meta(cfg);
    for (auto& kv : extra_meta) meta.push_back(std::move(kv));
    std::vector<std::pair<std::string, TensorBlob>> tensors;
    for_each_param(params, [&](const std::string& name, Tensor<S>& t, bool) {
        tensors.emplace_back(name, to_blob(t));
    });
    for (auto& kv : extra_tensors) tensors.push_back(std::move(kv));
    save_checkpoint(path, meta, tensors);
}

// Restores model weights from a loaded checkpoint; extra tensors (optimizer
// moments, classifier heads) are left for the caller.
template <typename S>
void load_model(ModelParams<S>& params, const Checkpoint& c, const std::string& path) {
    for_each_param(params, [&](const std::string& name, Tensor<S>& t, bool) {
        auto it = c.tensors.find(name);
        if (it == c.tensors.end()) throw DataError("checkpoint " + path + " missing tensor '" + name + "'");
        from_blob(t, it->second, name);
    });
}

}  // namespace hlm
