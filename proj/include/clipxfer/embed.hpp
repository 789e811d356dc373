#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clipxfer/env.hpp"
#include "clipxfer/error.hpp"
#include "clipxfer/io.hpp"
#include "clipxfer/rng.hpp"

namespace clipxfer {

inline constexpr std::size_t kDefaultEmbeddingDim = 64;

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// a.b / (|a| |b|). Throws on dimension mismatch or a zero-norm input.
inline double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("cosine of vectors with dimensions " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
    const double na = norm2(a);
    const double nb = norm2(b);
    if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine of a zero-norm vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

/// Hashed bag of word and character-trigram features.
///
/// Each word `w` contributes the feature "w:<w>" and, for the padded word
/// "<w>", every trigram "t:<abc>". A feature with FNV-1a hash h adds +1 or -1
/// (the top bit of splitmix64(h) selects the sign) to bucket h mod dim. The
/// accumulated vector is L2-normalized.
inline EmbeddingVector encode(std::string_view text, std::size_t dim = kDefaultEmbeddingDim) {
    if (dim == 0) throw ParameterError("embedding dimension must be positive");
    const auto words = split_words(normalize_text(text));
    if (words.empty()) throw EncodeError("cannot encode empty text");

    EmbeddingVector v{std::vector<double>(dim, 0.0)};
    auto add = [&](std::string_view feature) {
        const std::uint64_t h = fnv1a64(feature);
        v.values[h % dim] += (mix64(h) >> 63) ? -1.0 : 1.0;
    };
    for (const auto& w : words) {
        add("w:" + w);
        const std::string padded = "<" + w + ">";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add("t:" + padded.substr(i, 3));
    }
    const double n = norm2(v.values);
    if (!(n > 0.0)) throw NumericError("features of '" + std::string(text) + "' cancel to a zero vector");
    for (auto& x : v.values) x /= n;
    return v;
}

enum class EmbeddingSource { Builtin, Imported };

/// Instruction embeddings keyed by normalized text.
///
/// A builtin table encodes unknown texts on demand; an imported table only
/// answers for the texts it was loaded with.
class EmbeddingTable {
public:
    explicit EmbeddingTable(EmbeddingSource source = EmbeddingSource::Builtin,
                            std::size_t dim = kDefaultEmbeddingDim)
        : source_(source), dim_(dim) {}

    EmbeddingSource source() const { return source_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return rows_.size(); }
    bool contains(std::string_view text) const { return rows_.contains(normalize_text(text)); }

    void insert(std::string_view text, EmbeddingVector v) {
        if (v.dim() != dim_)
            throw ShapeError("embedding of dimension " + std::to_string(v.dim()) + " in a table of dimension " +
                             std::to_string(dim_));
        rows_[normalize_text(text)] = std::move(v);
    }

    EmbeddingVector lookup(std::string_view text) const {
        const auto key = normalize_text(text);
        if (auto it = rows_.find(key); it != rows_.end()) return it->second;
        if (source_ == EmbeddingSource::Builtin) return encode(key, dim_);
        throw LookupError("no embedding for instruction '" + key + "'");
    }

    const std::map<std::string, EmbeddingVector>& rows() const { return rows_; }

private:
    EmbeddingSource source_;
    std::size_t dim_;
    std::map<std::string, EmbeddingVector> rows_;
};

/// Reads `<instruction>\t<v1> <v2> ... <vD>` records. Lines starting with '#'
/// and blank lines are skipped. Vectors are re-normalized to unit length.
inline EmbeddingTable import_embeddings(std::istream& in) {
    std::vector<std::pair<std::string, EmbeddingVector>> parsed;
    std::size_t dim = 0;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto where = "line " + std::to_string(lineno) + ": ";
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw FormatError(where + "missing tab between instruction and vector");
        const auto key = normalize_text(std::string_view(line).substr(0, tab));
        if (key.empty()) throw FormatError(where + "empty instruction text");
        for (const auto& [k, _] : parsed)
            if (k == key) throw FormatError(where + "duplicate instruction '" + key + "'");

        EmbeddingVector v;
        for (const auto& field : split_words(std::string_view(line).substr(tab + 1))) {
            const auto x = parse_double(field);
            if (!x) throw FormatError(where + "non-numeric field '" + field + "'");
            v.values.push_back(*x);
        }
        if (v.values.empty()) throw FormatError(where + "empty vector");
        if (dim == 0) dim = v.dim();
        if (v.dim() != dim)
            throw FormatError(where + "vector has dimension " + std::to_string(v.dim()) + ", expected " +
                              std::to_string(dim));
        const double n = norm2(v.values);
        if (!(n > 0.0)) throw FormatError(where + "zero vector");
        for (auto& x : v.values) x /= n;
        parsed.emplace_back(key, std::move(v));
    }
    EmbeddingTable table(EmbeddingSource::Imported, dim == 0 ? kDefaultEmbeddingDim : dim);
    for (auto& [k, v] : parsed) table.insert(k, std::move(v));
    return table;
}

inline EmbeddingTable import_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open embedding file '" + path + "'");
    return import_embeddings(in);
}

}  // namespace clipxfer
