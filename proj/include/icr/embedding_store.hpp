#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "icr/error.hpp"
#include "icr/scene.hpp"
#include "icr/util.hpp"

namespace icr {

inline constexpr char kStoreMagic[4] = {'I', 'C', 'R', 'E'};
inline constexpr std::uint32_t kStoreVersion = 1;
/// Set in the on-disk version field when vectors come from the hashing fallback.
inline constexpr std::uint32_t kFallbackFlag = 0x80000000u;
inline constexpr std::size_t kTextEmbeddingDim = 768;
inline constexpr std::size_t kImageEmbeddingDim = 2048;

/// Keyed float vectors of one dimension, in insertion order.
///
/// File layout (little-endian): "ICRE", u32 version, u32 dim, u64 count, then per record
/// u16 key length, key bytes (UTF-8), dim x f32.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(std::size_t dim, bool fallback = false) : dim_(dim), fallback_(fallback) {}

    std::size_t dim() const noexcept { return dim_; }
    bool fallback() const noexcept { return fallback_; }
    std::size_t size() const noexcept { return keys_.size(); }
    std::uint32_t version_field() const noexcept { return kStoreVersion | (fallback_ ? kFallbackFlag : 0u); }

    void add(std::string key, std::span<const float> vec) {
        if (vec.size() != dim_)
            throw DimMismatch("vector for '" + key + "' has " + std::to_string(vec.size()) + " values, store dim is " +
                              std::to_string(dim_));
        if (key.size() > 0xFFFF) throw Error("embedding key longer than 65535 bytes");
        if (index_.count(key)) throw Error("duplicate embedding key '" + key + "'");
        index_.emplace(key, keys_.size());
        keys_.push_back(std::move(key));
        data_.insert(data_.end(), vec.begin(), vec.end());
    }

    bool contains(const std::string& key) const { return index_.count(key) > 0; }

    /// Empty span when the key is absent.
    std::span<const float> find(const std::string& key) const {
        auto it = index_.find(key);
        if (it == index_.end()) return {};
        return {data_.data() + it->second * dim_, dim_};
    }

    const std::vector<std::string>& keys() const noexcept { return keys_; }
    std::span<const float> at(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    std::vector<std::string> missing(const std::vector<std::string>& wanted) const {
        std::vector<std::string> out;
        for (const auto& k : wanted)
            if (!contains(k)) out.push_back(k);
        return out;
    }

private:
    std::size_t dim_ = 0;
    bool fallback_ = false;
    std::vector<std::string> keys_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<float> data_;
};

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    template <class T>
    T get_le(const char* what) {
        need(sizeof(T), what);
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw TruncatedFile(std::string("embedding store truncated while reading ") + what + " at byte " +
                                std::to_string(pos_));
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_store(const EmbeddingStore& store) {
    std::string out(kStoreMagic, 4);
    detail::put_le<std::uint32_t>(out, store.version_field());
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    detail::put_le<std::uint64_t>(out, store.size());
    out.reserve(out.size() + store.size() * (2 + 24 + 4 * store.dim()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& key = store.keys()[i];
        detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(key.size()));
        out += key;
        for (float f : store.at(i)) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

/// `expected_dim` of 0 accepts any dimension.
inline EmbeddingStore decode_store(std::string_view bytes, std::size_t expected_dim = 0) {
    detail::ByteReader in(bytes);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kStoreMagic, 4) != 0) {
        if (bytes.size() < 4) throw TruncatedFile("embedding store shorter than its magic");
        throw BadMagic("not an embedding store (bad magic)");
    }
    in.take(4, "magic");
    const auto version = in.get_le<std::uint32_t>("version");
    if ((version & ~kFallbackFlag) != kStoreVersion)
        throw VersionMismatch("embedding store version " + std::to_string(version & ~kFallbackFlag) + ", expected " +
                              std::to_string(kStoreVersion));
    const auto dim = in.get_le<std::uint32_t>("dim");
    if (expected_dim != 0 && dim != expected_dim)
        throw DimMismatch("embedding store has dim " + std::to_string(dim) + ", expected " + std::to_string(expected_dim));
    const auto count = in.get_le<std::uint64_t>("record count");
    EmbeddingStore store(dim, (version & kFallbackFlag) != 0);
    std::vector<float> vec(dim);
    for (std::uint64_t r = 0; r < count; ++r) {
        const auto klen = in.get_le<std::uint16_t>("key length");
        std::string key(in.take(klen, "key"));
        for (auto& f : vec) f = std::bit_cast<float>(in.get_le<std::uint32_t>("vector"));
        store.add(std::move(key), vec);
    }
    if (in.remaining() != 0)
        throw Error("embedding store has " + std::to_string(in.remaining()) + " trailing bytes after " +
                    std::to_string(count) + " records");
    return store;
}

inline void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
    write_file_atomic(path, encode_store(store));
}

inline EmbeddingStore read_store(const std::filesystem::path& path, std::size_t expected_dim = 0) {
    return decode_store(read_file(path), expected_dim);
}

// ---------------------------------------------------------------------------
// Hashing fallback embedder
// ---------------------------------------------------------------------------

namespace detail {

inline void add_hashed_feature(std::vector<float>& v, std::string_view feature, std::uint64_t seed) {
    // Two signed buckets per feature.
    std::uint64_t h = splitmix64(fnv1a64(feature) ^ seed);
    for (int k = 0; k < 2; ++k) {
        const std::size_t bucket = static_cast<std::size_t>(h % v.size());
        v[bucket] += (h >> 63) ? -1.0f : 1.0f;
        h = splitmix64(h);
    }
}

inline void normalize(std::vector<float>& v, std::uint64_t seed) {
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    if (norm == 0.0) {
        // Every feature cancelled; fall back to a fixed seeded basis vector.
        const std::uint64_t h = splitmix64(seed ^ 0x9e3779b97f4a7c15ULL);
        v[static_cast<std::size_t>(h % v.size())] = (h >> 63) ? -1.0f : 1.0f;
        norm = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm);
    for (auto& x : v) x = static_cast<float>(x * inv);
}

}  // namespace detail

/// Deterministic unit-norm embedding from signed feature hashing of unigrams and bigrams.
inline std::vector<float> hash_embed(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed) {
    if (dim == 0) throw Error("hash_embed requires dim > 0");
    std::vector<float> v(dim, 0.0f);
    if (tokens.empty()) detail::add_hashed_feature(v, "\x01<empty>", seed);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        detail::add_hashed_feature(v, "u:" + tokens[i], seed);
        if (i + 1 < tokens.size()) detail::add_hashed_feature(v, "b:" + tokens[i] + " " + tokens[i + 1], seed);
    }
    detail::normalize(v, seed);
    return v;
}

/// Scene fallback: hashes coarse per-clipart attribute features (50-pixel position cells).
inline std::vector<float> hash_embed_scene(const Scene& scene, std::size_t dim, std::uint64_t seed) {
    std::vector<std::string> features;
    if (scene.empty()) features.push_back("\x01<empty-scene>");
    for (const auto& c : scene.cliparts()) {
        const std::string t = "c" + std::to_string(c.type_id);
        features.push_back(t);
        features.push_back(t + ":x" + std::to_string(static_cast<int>(std::floor(c.x / 50.0))));
        features.push_back(t + ":y" + std::to_string(static_cast<int>(std::floor(c.y / 50.0))));
        features.push_back(t + ":d" + std::to_string(c.depth));
        features.push_back(t + ":f" + std::to_string(c.flip));
        if (c.variant) features.push_back(t + ":v" + std::to_string(c.variant->subtype()));
    }
    std::vector<float> v(dim, 0.0f);
    if (dim == 0) throw Error("hash_embed_scene requires dim > 0");
    for (const auto& f : features) detail::add_hashed_feature(v, f, seed);
    detail::normalize(v, seed);
    return v;
}

}  // namespace icr
