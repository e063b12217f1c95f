#pragma once

// Manifest + blob tensor container shared by model weights and saliency
// sidecars.
//
// Manifest (UTF-8 text, one record per line, fields separated by single spaces):
//
//   saccade-container 1
//   config <key> <value>
//   tensor <name> f32 <d0>,<d1>,... <byte_offset>
//
// Lines starting with '#' and blank lines are ignored. The blob holds raw
// little-endian IEEE-754 float32 values; tensor i occupies
// [offset, offset + 4 * prod(shape)). Writers emit tensors back to back in
// manifest order starting at offset 0.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "saccade/errors.hpp"

namespace saccade {

inline constexpr const char* kContainerMagic = "saccade-container";
inline constexpr int kContainerVersion = 1;

struct TensorEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t numel() const {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }
};

struct ManifestRecord {
    std::string name;
    std::string dtype;
    std::vector<std::size_t> shape;
    std::uint64_t offset = 0;
};

class TensorStore {
public:
    void set_config(const std::string& key, const std::string& value) {
        for (auto& kv : config_) {
            if (kv.first == key) {
                kv.second = value;
                return;
            }
        }
        config_.emplace_back(key, value);
    }

    const std::string* config(const std::string& key) const {
        for (const auto& kv : config_)
            if (kv.first == key) return &kv.second;
        return nullptr;
    }

    const std::vector<std::pair<std::string, std::string>>& config_entries() const { return config_; }

    void add(std::string name, std::vector<std::size_t> shape, std::vector<float> data) {
        TensorEntry e{std::move(name), std::move(shape), std::move(data)};
        if (e.numel() != e.data.size())
            throw ContractViolation("TensorStore::add: data length does not match shape for '" + e.name + "'");
        if (index_.count(e.name)) throw ContractViolation("TensorStore::add: duplicate tensor '" + e.name + "'");
        index_[e.name] = tensors_.size();
        tensors_.push_back(std::move(e));
    }

    const TensorEntry* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &tensors_[it->second];
    }

    const std::vector<TensorEntry>& tensors() const { return tensors_; }

private:
    std::vector<std::pair<std::string, std::string>> config_;
    std::vector<TensorEntry> tensors_;
    std::map<std::string, std::size_t> index_;
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

inline std::string join_shape(const std::vector<std::size_t>& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(shape[i]);
    }
    return s;
}

inline std::vector<std::size_t> parse_shape(const std::string& text, const std::string& tensor) {
    std::vector<std::size_t> shape;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
            throw LoadError("tensor '" + tensor + "': malformed shape '" + text + "'");
        shape.push_back(std::stoull(part));
    }
    if (shape.empty()) throw LoadError("tensor '" + tensor + "': empty shape");
    return shape;
}

} // namespace detail

inline void save_container(const TensorStore& store, const std::string& manifest_path,
                           const std::string& blob_path) {
    std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
    if (!blob) throw LoadError("cannot open blob for writing: " + blob_path);
    std::ostringstream man;
    man << kContainerMagic << ' ' << kContainerVersion << '\n';
    for (const auto& [k, v] : store.config_entries()) man << "config " << k << ' ' << v << '\n';
    std::uint64_t offset = 0;
    for (const auto& t : store.tensors()) {
        man << "tensor " << t.name << " f32 " << detail::join_shape(t.shape) << ' ' << offset << '\n';
        for (float f : t.data) {
            std::uint32_t bits = detail::to_little_endian(std::bit_cast<std::uint32_t>(f));
            blob.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
        offset += 4 * t.data.size();
    }
    if (!blob) throw LoadError("write failed: " + blob_path);
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw LoadError("cannot open manifest for writing: " + manifest_path);
    out << man.str();
    if (!out) throw LoadError("write failed: " + manifest_path);
}

struct ParsedManifest {
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<ManifestRecord> tensors;
};

inline ParsedManifest parse_manifest(std::istream& in, const std::string& source) {
    ParsedManifest pm;
    std::string line;
    bool seen_magic = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        auto where = [&] { return source + ":" + std::to_string(lineno); };
        if (!seen_magic) {
            int version = 0;
            if (kind != kContainerMagic || !(ls >> version))
                throw LoadError(where() + ": missing '" + std::string(kContainerMagic) + "' header");
            if (version != kContainerVersion)
                throw LoadError(where() + ": unsupported container version " + std::to_string(version));
            seen_magic = true;
        } else if (kind == "config") {
            std::string key, value;
            if (!(ls >> key >> value)) throw LoadError(where() + ": malformed config line");
            pm.config.emplace_back(key, value);
        } else if (kind == "tensor") {
            ManifestRecord r;
            std::string shape;
            if (!(ls >> r.name >> r.dtype >> shape >> r.offset)) throw LoadError(where() + ": malformed tensor line");
            if (r.dtype != "f32") throw LoadError("tensor '" + r.name + "': unsupported dtype tag '" + r.dtype + "'");
            r.shape = detail::parse_shape(shape, r.name);
            pm.tensors.push_back(std::move(r));
        } else {
            throw LoadError(where() + ": unknown record '" + kind + "'");
        }
    }
    if (!seen_magic) throw LoadError(source + ": empty manifest");
    return pm;
}

inline TensorStore load_container(const std::string& manifest_path, const std::string& blob_path) {
    std::ifstream man(manifest_path);
    if (!man) throw LoadError("cannot open manifest: " + manifest_path);
    ParsedManifest pm = parse_manifest(man, manifest_path);

    std::ifstream blob(blob_path, std::ios::binary | std::ios::ate);
    if (!blob) throw LoadError("cannot open blob: " + blob_path);
    const auto blob_size = static_cast<std::uint64_t>(blob.tellg());

    std::vector<std::pair<std::uint64_t, std::uint64_t>> extents;
    TensorStore store;
    for (const auto& [k, v] : pm.config) store.set_config(k, v);
    for (const auto& r : pm.tensors) {
        std::size_t n = std::accumulate(r.shape.begin(), r.shape.end(), std::size_t{1}, std::multiplies<>());
        const std::uint64_t bytes = 4ull * n;
        if (r.offset % 4 != 0) throw LoadError("tensor '" + r.name + "': offset not 4-byte aligned");
        if (r.offset + bytes > blob_size)
            throw LoadError("tensor '" + r.name + "': extent [" + std::to_string(r.offset) + ", " +
                            std::to_string(r.offset + bytes) + ") exceeds blob size " + std::to_string(blob_size) +
                            " (truncated blob?)");
        extents.emplace_back(r.offset, r.offset + bytes);
        std::vector<float> data(n);
        blob.seekg(static_cast<std::streamoff>(r.offset));
        std::vector<std::uint32_t> raw(n);
        blob.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
        if (!blob) throw LoadError("tensor '" + r.name + "': short read from " + blob_path);
        for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(detail::to_little_endian(raw[i]));
        try {
            store.add(r.name, r.shape, std::move(data));
        } catch (const ContractViolation& e) {
            throw LoadError(e.what());
        }
    }
    std::sort(extents.begin(), extents.end());
    for (std::size_t i = 1; i < extents.size(); ++i)
        if (extents[i].first < extents[i - 1].second) throw LoadError("manifest: overlapping tensor extents in " + manifest_path);
    return store;
}

} // namespace saccade
