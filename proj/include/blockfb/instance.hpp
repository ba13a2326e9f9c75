#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "problems.hpp"
#include "sampling.hpp"

namespace blockfb {

struct LassoInstanceSpec {
    std::size_t p = 100;            ///< equations (rows of A)
    std::size_t m = 200;            ///< unknowns (columns of A, one block each)
    std::size_t nnz_per_row = 10;
    std::size_t xbar_nnz = 0;       ///< nonzeros of the ground truth; 0 means max(1, m/10)
    double noise = 0.06;
    std::uint64_t seed = 0;
};

struct LassoInstance {
    SparseCol A;
    Eigen::VectorXd b;
    Eigen::VectorXd xbar;
    std::size_t eta = 0;            ///< max_k card(spt(row k)), measured
    std::size_t max_col_support = 0;
    std::uint64_t seed = 0;
};

/**
 * Sparse Lasso data: every row of A has nnz_per_row entries drawn uniformly in [−1, 1] at
 * uniformly chosen distinct columns; b = A·x̄ + noise·N(0, Id) for a sparse Gaussian x̄.
 */
inline LassoInstance generate_lasso_instance(const LassoInstanceSpec& spec) {
    require(spec.p >= 1 && spec.m >= 1, "generator: p and m must be positive");
    require(spec.nnz_per_row >= 1 && spec.nnz_per_row <= spec.m, "generator: nnz_per_row must lie in [1, m]");
    require(spec.noise >= 0.0, "generator: noise must be nonnegative");
    const std::size_t xnnz = spec.xbar_nnz ? spec.xbar_nnz : std::max<std::size_t>(1, spec.m / 10);
    require(xnnz <= spec.m, "generator: xbar_nnz must not exceed m");

    Rng rng(spec.seed);
    Rng mat_rng = rng.split(1), x_rng = rng.split(2), noise_rng = rng.split(3);
    const auto cols = SamplingScheme::tau_nice(spec.m, spec.nnz_per_row);
    Sampler pick(cols);
    std::vector<std::size_t> sel;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(spec.p * spec.nnz_per_row);
    for (std::size_t k = 0; k < spec.p; ++k) {
        pick.draw(mat_rng, sel);
        for (std::size_t i : sel) {
            double v = 0.0;
            while (v == 0.0) v = mat_rng.uniform(-1.0, 1.0);
            trip.emplace_back(Eigen::Index(k), Eigen::Index(i), v);
        }
    }
    LassoInstance inst;
    inst.seed = spec.seed;
    inst.A.resize(Eigen::Index(spec.p), Eigen::Index(spec.m));
    inst.A.setFromTriplets(trip.begin(), trip.end());
    inst.A.makeCompressed();

    inst.xbar = Eigen::VectorXd::Zero(Eigen::Index(spec.m));
    const auto support = SamplingScheme::tau_nice(spec.m, xnnz);
    Sampler xpick(support);
    xpick.draw(x_rng, sel);
    for (std::size_t i : sel) inst.xbar[Eigen::Index(i)] = x_rng.normal();

    inst.b = inst.A * inst.xbar;
    for (Eigen::Index k = 0; k < inst.b.size(); ++k) inst.b[k] += spec.noise * noise_rng.normal();

    SparseRow rows(inst.A);
    for (Eigen::Index k = 0; k < rows.rows(); ++k) inst.eta = std::max<std::size_t>(inst.eta, std::size_t(rows.row(k).nonZeros()));
    for (Eigen::Index i = 0; i < inst.A.cols(); ++i)
        inst.max_col_support = std::max<std::size_t>(inst.max_col_support, std::size_t(inst.A.col(i).nonZeros()));
    return inst;
}

/// λ as a fraction of λ_max = ‖Aᵀb‖_∞, above which the Lasso solution is zero.
inline double lasso_lambda_from_ratio(const SparseCol& A, const Eigen::VectorXd& b, double ratio) {
    require(ratio > 0.0, "generator: lambda ratio must be positive");
    return ratio * (A.transpose() * b).cwiseAbs().maxCoeff();
}

}  // namespace blockfb
