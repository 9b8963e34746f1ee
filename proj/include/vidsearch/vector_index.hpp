#pragma once

// Exact cosine top-k index over keyframe embeddings.
//
// Vectors are L2-normalised on insert. After freeze() the rows live in one
// dense row-major matrix ordered by canonical FrameKey, so a search is a single
// matrix-vector product followed by a partial sort, and equal scores fall back
// to key order for free.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vidsearch/catalog.hpp"
#include "vidsearch/errors.hpp"

namespace vidsearch {

struct VectorHit {
    FrameKey key;
    double score = 0;  // raw cosine similarity
};

using KeyFilter = std::function<bool(const FrameKey&)>;

/// Cosine similarity of two dense vectors; zero when either has zero norm.
template <typename A, typename B>
typename A::Scalar cosine_similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    using Scalar = typename A::Scalar;
    const Scalar denom = a.norm() * b.norm();
    return denom > Scalar(0) ? a.dot(b) / denom : Scalar(0);
}

template <typename Scalar>
class BasicVectorIndex {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    explicit BasicVectorIndex(Eigen::Index dimension) : dimension_(dimension) {
        if (dimension < 1) throw InvalidArgument("vector index dimension must be >= 1");
    }

    Eigen::Index dimension() const { return dimension_; }
    bool frozen() const { return frozen_; }
    std::size_t size() const { return frozen_ ? keys_.size() : pending_.size(); }
    const std::vector<FrameKey>& keys() const { return keys_; }

    /// Normalises and stores `vector`; an existing key is replaced.
    template <typename Derived>
    void add(const FrameKey& key, const Eigen::MatrixBase<Derived>& vector) {
        if (frozen_) throw StateError("vector index is frozen");
        if (vector.size() != dimension_)
            throw DimensionError("embedding for " + key.str() + " has dimension " + std::to_string(vector.size()) +
                                 ", index expects " + std::to_string(dimension_));
        Vector v = vector.template cast<Scalar>();
        if (!v.allFinite()) throw InvalidArgument("embedding for " + key.str() + " has non-finite values");
        const Scalar norm = v.norm();
        if (!(norm > Scalar(0))) throw InvalidArgument("embedding for " + key.str() + " is the zero vector");
        pending_.insert_or_assign(key, v / norm);
    }

    void add(const FrameKey& key, std::span<const Scalar> values) {
        add(key, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
    }

    void freeze() {
        if (frozen_) return;
        keys_.clear();
        keys_.reserve(pending_.size());
        rows_.resize(static_cast<Eigen::Index>(pending_.size()), dimension_);
        Eigen::Index r = 0;
        for (auto& [key, v] : pending_) {
            keys_.push_back(key);
            rows_.row(r++) = v.transpose();
        }
        pending_.clear();
        frozen_ = true;
    }

    /// Cosine similarity of `query` against every stored row, in keys() order.
    template <typename Derived>
    Vector scores(const Eigen::MatrixBase<Derived>& query) const {
        require_frozen();
        if (query.size() != dimension_)
            throw DimensionError("query has dimension " + std::to_string(query.size()) + ", index expects " +
                                 std::to_string(dimension_));
        Vector q = query.template cast<Scalar>();
        if (!q.allFinite()) throw InvalidArgument("query vector has non-finite values");
        const Scalar norm = q.norm();
        if (!(norm > Scalar(0))) throw InvalidArgument("query vector is the zero vector");
        q /= norm;
        return rows_ * q;
    }

    /// Top-k hits by cosine, descending, ties by canonical key ascending.
    template <typename Derived>
    std::vector<VectorHit> search(const Eigen::MatrixBase<Derived>& query, std::size_t k,
                                  const KeyFilter& scope = {}) const {
        if (k < 1) throw InvalidArgument("k must be >= 1");
        require_frozen();
        if (keys_.empty()) {
            if (query.size() != dimension_) throw DimensionError("query dimension mismatch");
            return {};
        }
        const Vector s = scores(query);
        std::vector<Eigen::Index> candidates;
        candidates.reserve(keys_.size());
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (!scope || scope(keys_[static_cast<std::size_t>(i)])) candidates.push_back(i);
        const auto better = [&s](Eigen::Index a, Eigen::Index b) { return s[a] > s[b] || (s[a] == s[b] && a < b); };
        const auto take = std::min(k, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                          candidates.end(), better);
        std::vector<VectorHit> hits;
        hits.reserve(take);
        for (std::size_t i = 0; i < take; ++i) {
            const auto row = candidates[i];
            hits.push_back({keys_[static_cast<std::size_t>(row)], static_cast<double>(s[row])});
        }
        return hits;
    }

    template <typename T>
    std::vector<VectorHit> search(std::span<const T> query, std::size_t k, const KeyFilter& scope = {}) const {
        using QueryVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
        return search(Eigen::Map<const QueryVector>(query.data(), static_cast<Eigen::Index>(query.size())), k,
                      scope);
    }

    /// Flat binary: magic, uint32 dimension, uint64 count, count*dimension
    /// little-endian float32; keys go to `<path>.keys`, one per line, same order.
    void save(const std::filesystem::path& path) const;

    /// Adds every record of a binary file written by save().
    void load_binary(const std::filesystem::path& path, const KeyFilter& keep = {});

    /// Adds every {key, vector} record of a line-delimited JSON file.
    void load_jsonl(const std::filesystem::path& path, const KeyFilter& keep = {});

private:
    void require_frozen() const {
        if (!frozen_) throw StateError("vector index must be frozen before searching");
    }

    Eigen::Index dimension_;
    bool frozen_ = false;
    std::map<FrameKey, Vector> pending_;
    std::vector<FrameKey> keys_;
    Matrix rows_;
};

extern template class BasicVectorIndex<float>;
extern template class BasicVectorIndex<double>;

using VectorIndex = BasicVectorIndex<float>;

/// Reads only the dimension from a binary embeddings file header.
Eigen::Index read_embedding_dimension(const std::filesystem::path& path);

}  // namespace vidsearch
