#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace blockfb {

/// Error category; the CLI maps Validation to exit code 2 and Runtime to 1.
enum class ErrorKind { Validation, Runtime };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error validation_error(const std::string& what) { return {ErrorKind::Validation, what}; }
inline Error runtime_error(const std::string& what) { return {ErrorKind::Runtime, what}; }

inline void require(bool cond, const std::string& what) {
    if (!cond) throw validation_error(what);
}

/**
 * Partition of a flat vector of dimension N into m contiguous blocks.
 *
 * Blocks given as arbitrary index lists can be normalized with from_index_lists,
 * which records the permutation mapping flat positions back to original indices.
 */
class BlockPartition {
public:
    BlockPartition() = default;

    explicit BlockPartition(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        require(!dims_.empty(), "BlockPartition: at least one block required");
        offsets_.resize(dims_.size() + 1, 0);
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            require(dims_[i] > 0, "BlockPartition: block " + std::to_string(i) + " has zero dimension");
            offsets_[i + 1] = offsets_[i] + dims_[i];
        }
        permutation_.resize(offsets_.back());
        std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
    }

    /// m blocks of dimension one.
    static BlockPartition scalar(std::size_t m) { return BlockPartition(std::vector<std::size_t>(m, 1)); }

    /// Blocks given as disjoint index lists covering [0, N); flat position j holds original index permutation()[j].
    static BlockPartition from_index_lists(const std::vector<std::vector<std::size_t>>& blocks) {
        std::vector<std::size_t> dims;
        std::vector<std::size_t> perm;
        for (const auto& b : blocks) {
            dims.push_back(b.size());
            perm.insert(perm.end(), b.begin(), b.end());
        }
        BlockPartition part(std::move(dims));
        std::vector<bool> seen(perm.size(), false);
        for (std::size_t j : perm) {
            require(j < perm.size() && !seen[j], "BlockPartition: index lists must partition [0, N)");
            seen[j] = true;
        }
        part.permutation_ = std::move(perm);
        return part;
    }

    std::size_t m() const noexcept { return dims_.size(); }
    std::size_t N() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
    std::size_t dim(std::size_t i) const { return dims_[i]; }
    std::size_t offset(std::size_t i) const { return offsets_[i]; }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
    const std::vector<std::size_t>& permutation() const noexcept { return permutation_; }
    bool is_scalar() const noexcept { return N() == m(); }

    bool operator==(const BlockPartition& o) const { return dims_ == o.dims_ && permutation_ == o.permutation_; }

private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> permutation_;
};

/// Flat vector viewed through a shared block partition.
class BlockVector {
public:
    BlockVector() = default;
    explicit BlockVector(std::shared_ptr<const BlockPartition> part)
        : part_(std::move(part)), data_(part_->N(), 0.0) {}
    BlockVector(std::shared_ptr<const BlockPartition> part, std::vector<double> data)
        : part_(std::move(part)), data_(std::move(data)) {
        require(data_.size() == part_->N(), "BlockVector: data length does not match partition dimension");
    }

    const BlockPartition& partition() const { return *part_; }
    const std::shared_ptr<const BlockPartition>& partition_ptr() const { return part_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> block(std::size_t i) { return {data_.data() + part_->offset(i), part_->dim(i)}; }
    std::span<const double> block(std::size_t i) const { return {data_.data() + part_->offset(i), part_->dim(i)}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }
    double& operator[](std::size_t j) { return data_[j]; }
    double operator[](std::size_t j) const { return data_[j]; }

private:
    std::shared_ptr<const BlockPartition> part_;
    std::vector<double> data_;
};

enum class MetricKind { GammaInv, W, Lambda, Identity };

/// Block-diagonal metric with one positive weight per block.
struct DiagonalMetric {
    std::vector<double> weights;
    MetricKind kind = MetricKind::Identity;

    static DiagonalMetric identity(std::size_t m) { return {std::vector<double>(m, 1.0), MetricKind::Identity}; }

    /// Weights 1/γᵢ.
    static DiagonalMetric gamma_inv(const std::vector<double>& gamma) {
        DiagonalMetric M{std::vector<double>(gamma.size()), MetricKind::GammaInv};
        for (std::size_t i = 0; i < gamma.size(); ++i) M.weights[i] = 1.0 / gamma[i];
        M.validate();
        return M;
    }

    /// Weights 1/(γᵢ pᵢ).
    static DiagonalMetric w(const std::vector<double>& gamma, const std::vector<double>& p) {
        require(gamma.size() == p.size(), "DiagonalMetric::w: gamma and marginals differ in length");
        DiagonalMetric M{std::vector<double>(gamma.size()), MetricKind::W};
        for (std::size_t i = 0; i < gamma.size(); ++i) M.weights[i] = 1.0 / (gamma[i] * p[i]);
        M.validate();
        return M;
    }

    /// Weights Lᵢ.
    static DiagonalMetric lambda(const std::vector<double>& L) {
        DiagonalMetric M{L, MetricKind::Lambda};
        M.validate();
        return M;
    }

    void validate() const {
        for (double w : weights) require(w > 0.0 && std::isfinite(w), "DiagonalMetric: weights must be positive and finite");
    }
};

inline double weighted_norm_sq(std::span<const double> x, const BlockPartition& part, const DiagonalMetric& M) {
    require(part.m() == M.weights.size(), "weighted_norm_sq: metric has " + std::to_string(M.weights.size()) +
                                              " weights for " + std::to_string(part.m()) + " blocks");
    require(x.size() == part.N(), "weighted_norm_sq: vector length does not match partition");
    double s = 0.0;
    for (std::size_t i = 0; i < part.m(); ++i) {
        double b = 0.0;
        for (std::size_t j = part.offset(i); j < part.offset(i + 1); ++j) b += x[j] * x[j];
        s += M.weights[i] * b;
    }
    return s;
}

inline double weighted_norm_sq(const BlockVector& x, const DiagonalMetric& M) {
    return weighted_norm_sq(x.data(), x.partition(), M);
}

/// Block i of the result is candidate's where mask[i] holds, x's otherwise.
inline BlockVector masked_update(const BlockVector& x, const std::vector<bool>& mask, const BlockVector& candidate) {
    require(x.partition() == candidate.partition(), "masked_update: partition mismatch");
    require(mask.size() == x.partition().m(), "masked_update: mask length does not match block count");
    BlockVector out = x;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        auto src = candidate.block(i);
        auto dst = out.block(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

}  // namespace blockfb
