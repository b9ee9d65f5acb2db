#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "corpus.hpp"

namespace chronotopic {

/// Dense float32 vectors keyed by id (document id or term).
struct EmbeddingSet {
    std::vector<std::string> ids;
    std::size_t dim = 0;
    std::vector<float> vectors;  // row-major ids.size() x dim

    std::size_t count() const { return ids.size(); }
    std::span<const float> row(std::size_t i) const { return {vectors.data() + i * dim, dim}; }

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(count()), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < count(); ++i)
            for (std::size_t c = 0; c < dim; ++c) m(i, c) = vectors[i * dim + c];
        return m;
    }

    std::unordered_map<std::string, std::size_t> index() const {
        std::unordered_map<std::string, std::size_t> idx;
        for (std::size_t i = 0; i < ids.size(); ++i) idx.emplace(ids[i], i);
        return idx;
    }

    static EmbeddingSet from_dense(std::vector<std::string> ids, const Eigen::MatrixXd& m) {
        EmbeddingSet s;
        s.ids = std::move(ids);
        s.dim = static_cast<std::size_t>(m.cols());
        s.vectors.resize(s.ids.size() * s.dim);
        for (std::size_t i = 0; i < s.ids.size(); ++i)
            for (std::size_t c = 0; c < s.dim; ++c) s.vectors[i * s.dim + c] = static_cast<float>(m(i, c));
        return s;
    }
};

inline constexpr std::array<char, 4> kEmbMagic{'E', 'M', 'B', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out += static_cast<char>((v >> (8 * b)) & 0xFF);
}

inline std::uint32_t get_u32(const std::string& in, std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + b])) << (8 * b);
    return v;
}

}  // namespace detail

/// EMB1 bytes: magic | u32 count | u32 dim | count*dim f32, all little-endian.
inline std::string encode_emb1(const EmbeddingSet& set) {
    if (set.dim == 0) throw Error("write_embeddings: dim must be positive");
    if (set.vectors.size() != set.ids.size() * set.dim) throw Error("write_embeddings: vector count does not match id count");
    std::string out(kEmbMagic.begin(), kEmbMagic.end());
    detail::put_u32(out, static_cast<std::uint32_t>(set.ids.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(set.dim));
    out.reserve(out.size() + 4 * set.vectors.size());
    for (std::size_t i = 0; i < set.vectors.size(); ++i) {
        float f = set.vectors[i];
        if (!std::isfinite(f)) throw Error("write_embeddings: non-finite value in row " + std::to_string(i / set.dim));
        detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

inline void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& bin_path,
                             const std::filesystem::path& ids_path) {
    std::unordered_set<std::string> seen;
    for (const auto& id : set.ids) {
        if (id.empty() || id.find('\n') != std::string::npos) throw Error("write_embeddings: invalid id '" + id + "'");
        if (!seen.insert(id).second) throw Error("write_embeddings: duplicate id '" + id + "'");
    }
    auto bytes = encode_emb1(set);
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw Error("cannot write " + bin_path.string());
    bin.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    std::ofstream ids(ids_path, std::ios::binary);
    if (!ids) throw Error("cannot write " + ids_path.string());
    for (const auto& id : set.ids) ids << id << '\n';
    if (!bin || !ids) throw Error("write_embeddings: I/O failure");
}

inline EmbeddingSet decode_emb1(const std::string& bytes, const std::string& what) {
    if (bytes.size() < 12) throw Error(what + ": truncated header (" + std::to_string(bytes.size()) + " bytes, need 12)");
    if (!std::equal(kEmbMagic.begin(), kEmbMagic.end(), bytes.begin())) throw Error(what + ": bad magic at byte offset 0");
    EmbeddingSet set;
    const std::uint32_t count = detail::get_u32(bytes, 4);
    set.dim = detail::get_u32(bytes, 8);
    if (set.dim == 0) throw Error(what + ": dim is zero at byte offset 8");
    const std::size_t expected = 12 + 4ull * count * set.dim;
    if (bytes.size() < expected)
        throw Error(what + ": truncated payload at byte offset " + std::to_string(bytes.size()) + " (expected " +
                    std::to_string(expected) + " bytes)");
    if (bytes.size() > expected) throw Error(what + ": trailing bytes after payload at byte offset " + std::to_string(expected));
    set.vectors.resize(static_cast<std::size_t>(count) * set.dim);
    for (std::size_t i = 0; i < set.vectors.size(); ++i) {
        float f = std::bit_cast<float>(detail::get_u32(bytes, 12 + 4 * i));
        if (!std::isfinite(f)) throw Error(what + ": non-finite value at byte offset " + std::to_string(12 + 4 * i));
        set.vectors[i] = f;
    }
    set.ids.resize(count);  // placeholder until ids are attached
    return set;
}

inline EmbeddingSet read_embeddings(const std::filesystem::path& bin_path, const std::filesystem::path& ids_path) {
    if (!std::filesystem::exists(bin_path)) throw Error("embedding file not found: " + bin_path.string());
    if (!std::filesystem::exists(ids_path)) throw Error("embedding id file not found: " + ids_path.string());
    auto set = decode_emb1(detail::read_file(bin_path), bin_path.string());
    const std::size_t count = set.ids.size();
    set.ids.clear();
    auto text = detail::read_file(ids_path);
    std::size_t pos = 0, line = 0;
    std::unordered_set<std::string> seen;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        std::string id = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
        ++line;
        if (!id.empty() && id.back() == '\r') id.pop_back();
        if (id.empty()) throw Error(ids_path.string() + ":" + std::to_string(line) + ": empty id");
        if (!seen.insert(id).second) throw Error(ids_path.string() + ":" + std::to_string(line) + ": duplicate id '" + id + "'");
        set.ids.push_back(std::move(id));
    }
    if (set.ids.size() != count)
        throw Error(ids_path.string() + ": id count mismatch (" + std::to_string(set.ids.size()) + " ids, header count " +
                    std::to_string(count) + ")");
    return set;
}

}  // namespace chronotopic
