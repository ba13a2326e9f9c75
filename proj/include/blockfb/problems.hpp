#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "smoothness.hpp"

namespace blockfb {

using SparseCol = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using SparseRow = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kFeasTol = 1e-12;

/// sign(t)·max(0, |t| − κ).
inline double soft_threshold(double t, double kappa) {
    if (t > kappa) return t - kappa;
    if (t < -kappa) return t + kappa;
    return 0.0;
}

/**
 * Composite problem min f(x) + Σ hᵢ(xᵢ) with a cached smooth oracle.
 *
 * stage() evaluates f(x + Δ) − f(x) for a change Δ on the listed blocks without touching x or
 * the committed cache; commit() then applies the staged change and discard() drops it.
 */
template <class P>
concept CompositeProblem = SmoothFunction<P> && requires(const P& p, typename P::Cache& c, std::span<const double> x,
                                                          std::span<double> out, std::span<const std::size_t> blocks,
                                                          std::size_t i, double gamma) {
    typename P::Cache;
    { p.init_cache(x) } -> std::same_as<typename P::Cache>;
    p.refresh(c, x);
    p.partial_gradient(c, x, i, out);
    { p.stage(c, x, blocks, x) } -> std::convertible_to<double>;
    p.commit(c);
    p.discard(c);
    { p.cached_smooth_value(c, x) } -> std::convertible_to<double>;
    p.prox_block(i, out, gamma);
    { p.h_block(i, x) } -> std::convertible_to<double>;
    { p.g_value(x) } -> std::convertible_to<double>;
    { p.structure() } -> std::convertible_to<SeparabilityStructure>;
    { p.g_strong_convexity() } -> std::convertible_to<double>;
};

namespace detail {

inline SparseCol require_nonempty(SparseCol A, const char* who) {
    if (A.rows() == 0 || A.cols() == 0) throw validation_error(std::string(who) + ": empty matrix");
    A.makeCompressed();
    return A;
}

/// Scratch accumulator over a dense index range that remembers which entries it touched.
struct SparseAccumulator {
    std::vector<double> value;
    std::vector<char> mark;
    std::vector<std::size_t> touched;

    explicit SparseAccumulator(std::size_t n = 0) : value(n, 0.0), mark(n, 0) {}
    void add(std::size_t k, double v) {
        if (!mark[k]) {
            mark[k] = 1;
            touched.push_back(k);
        }
        value[k] += v;
    }
    void clear() {
        for (std::size_t k : touched) {
            value[k] = 0.0;
            mark[k] = 0;
        }
        touched.clear();
    }
};

}  // namespace detail

/// ½‖Ax − b‖² + λ‖x‖₁ with scalar blocks (columns of A).
class LassoProblem {
public:
    struct Cache {
        Eigen::VectorXd u;  ///< Ax − b
        detail::SparseAccumulator du;
    };

    LassoProblem(SparseCol A, Eigen::VectorXd b, double lambda)
        : A_(detail::require_nonempty(std::move(A), "lasso")), b_(std::move(b)), lambda_(lambda) {
        require(b_.size() == A_.rows(), "lasso: b has " + std::to_string(b_.size()) + " entries, A has " +
                                            std::to_string(A_.rows()) + " rows");
        require(lambda_ >= 0.0 && std::isfinite(lambda_), "lasso: lambda must be finite and nonnegative");
        require(A_.nonZeros() > 0, "lasso: A has no nonzero entries");
        Arow_ = SparseRow(A_);
        Arow_.makeCompressed();
        part_ = std::make_shared<BlockPartition>(BlockPartition::scalar(std::size_t(A_.cols())));
        col_sq_.resize(std::size_t(A_.cols()));
        for (Eigen::Index i = 0; i < A_.cols(); ++i) col_sq_[std::size_t(i)] = A_.col(i).squaredNorm();
    }

    const BlockPartition& partition() const { return *part_; }
    std::shared_ptr<const BlockPartition> partition_ptr() const { return part_; }
    std::size_t m() const { return std::size_t(A_.cols()); }
    std::size_t p() const { return std::size_t(A_.rows()); }
    double lambda() const { return lambda_; }
    const SparseCol& A() const { return A_; }
    const SparseRow& A_rows() const { return Arow_; }
    const Eigen::VectorXd& b() const { return b_; }
    double g_strong_convexity() const { return 0.0; }

    Eigen::VectorXd residual(std::span<const double> x) const {
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), Eigen::Index(x.size()));
        return A_ * xv - b_;
    }

    double smooth_value(std::span<const double> x) const { return 0.5 * residual(x).squaredNorm(); }

    void smooth_gradient(std::span<const double> x, std::span<double> g) const {
        Eigen::Map<Eigen::VectorXd> gv(g.data(), Eigen::Index(g.size()));
        gv = A_.transpose() * residual(x);
    }

    double g_value(std::span<const double> x) const {
        double s = 0.0;
        for (double v : x) s += std::abs(v);
        return lambda_ * s;
    }
    double value(std::span<const double> x) const { return smooth_value(x) + g_value(x); }

    Cache init_cache(std::span<const double> x) const {
        Cache c{residual(x), detail::SparseAccumulator(p())};
        return c;
    }
    void refresh(Cache& c, std::span<const double> x) const { c.u = residual(x); }

    void partial_gradient(const Cache& c, std::span<const double>, std::size_t i, std::span<double> out) const {
        double s = 0.0;
        for (SparseCol::InnerIterator it(A_, Eigen::Index(i)); it; ++it) s += it.value() * c.u[it.row()];
        out[0] = s;
    }

    double stage(Cache& c, std::span<const double>, std::span<const std::size_t> blocks, std::span<const double> delta) const {
        c.du.clear();
        for (std::size_t s = 0; s < blocks.size(); ++s) {
            const double xi = delta[s];
            if (xi == 0.0) continue;
            for (SparseCol::InnerIterator it(A_, Eigen::Index(blocks[s])); it; ++it)
                c.du.add(std::size_t(it.row()), it.value() * xi);
        }
        double df = 0.0;
        for (std::size_t k : c.du.touched) {
            const double d = c.du.value[k];
            df += d * (c.u[Eigen::Index(k)] + 0.5 * d);
        }
        return df;
    }
    void commit(Cache& c) const {
        for (std::size_t k : c.du.touched) c.u[Eigen::Index(k)] += c.du.value[k];
        c.du.clear();
    }
    void discard(Cache& c) const { c.du.clear(); }

    double cached_smooth_value(const Cache& c, std::span<const double>) const { return 0.5 * c.u.squaredNorm(); }

    void prox_block(std::size_t, std::span<double> z, double gamma) const { z[0] = soft_threshold(z[0], gamma * lambda_); }
    double h_block(std::size_t, std::span<const double> xi) const { return lambda_ * std::abs(xi[0]); }
    /// hᵢ(to) − hᵢ(from) without cancellation when the sign is kept.
    double h_change(std::size_t, std::span<const double> from, std::span<const double> to) const {
        const double a = from[0], c = to[0];
        if (a > 0.0 && c > 0.0) return lambda_ * (c - a);
        if (a < 0.0 && c < 0.0) return lambda_ * (a - c);
        return lambda_ * (std::abs(c) - std::abs(a));
    }

    /// I_k = spt(row k), Lᵢ = ‖aⁱ‖², L^(k) = ‖a_k‖², L^(k)ᵢ = (a_kⁱ)².
    SeparabilityStructure structure() const {
        SeparabilityStructure st;
        st.m = m();
        st.block_lipschitz = col_sq_;
        std::vector<double> gl;
        std::vector<GroupBlockLipschitz> table;
        for (Eigen::Index k = 0; k < Arow_.rows(); ++k) {
            std::vector<std::size_t> I;
            double nrm = 0.0;
            for (SparseRow::InnerIterator it(Arow_, k); it; ++it) {
                if (it.value() == 0.0) continue;
                I.push_back(std::size_t(it.col()));
                nrm += it.value() * it.value();
                table.push_back({st.index_sets.size(), std::size_t(it.col()), it.value() * it.value()});
            }
            if (I.empty()) continue;
            st.index_sets.push_back(std::move(I));
            gl.push_back(nrm);
        }
        st.group_lipschitz = std::move(gl);
        st.per_group_block_lipschitz = std::move(table);
        return st;
    }

private:
    SparseCol A_;
    SparseRow Arow_;
    Eigen::VectorXd b_;
    double lambda_;
    std::shared_ptr<BlockPartition> part_;
    std::vector<double> col_sq_;
};

/**
 * Dual of min ½‖x‖² s.t. Ax = b: D(u) = ½‖Aᵀu‖² − ⟨u, b⟩ over u ∈ R^m (one block per row of A).
 * The cache holds the primal iterate x = Aᵀu, so block steps are Kaczmarz projections.
 */
class MinNormDualProblem {
public:
    struct Cache {
        Eigen::VectorXd x;  ///< Aᵀu
        Eigen::VectorXd dx;
        bool staged = false;
    };

    MinNormDualProblem(SparseCol A, Eigen::VectorXd b)
        : A_(detail::require_nonempty(std::move(A), "min_norm_dual")), b_(std::move(b)) {
        require(b_.size() == A_.rows(), "min_norm_dual: b must have one entry per row of A");
        Arow_ = SparseRow(A_);
        Arow_.makeCompressed();
        part_ = std::make_shared<BlockPartition>(BlockPartition::scalar(std::size_t(A_.rows())));
        row_sq_.resize(std::size_t(A_.rows()));
        for (Eigen::Index i = 0; i < A_.rows(); ++i) {
            row_sq_[std::size_t(i)] = Arow_.row(i).squaredNorm();
            require(row_sq_[std::size_t(i)] > 0.0, "min_norm_dual: row " + std::to_string(i) +
                                                       " of A is zero; remove it (its block would never move)");
        }
    }

    const BlockPartition& partition() const { return *part_; }
    std::shared_ptr<const BlockPartition> partition_ptr() const { return part_; }
    std::size_t m() const { return std::size_t(A_.rows()); }
    const SparseCol& A() const { return A_; }
    const Eigen::VectorXd& b() const { return b_; }
    double g_strong_convexity() const { return 0.0; }

    Eigen::VectorXd primal(std::span<const double> u) const {
        Eigen::Map<const Eigen::VectorXd> uv(u.data(), Eigen::Index(u.size()));
        return A_.transpose() * uv;
    }

    double smooth_value(std::span<const double> u) const {
        Eigen::Map<const Eigen::VectorXd> uv(u.data(), Eigen::Index(u.size()));
        return 0.5 * primal(u).squaredNorm() - uv.dot(b_);
    }
    void smooth_gradient(std::span<const double> u, std::span<double> g) const {
        Eigen::Map<Eigen::VectorXd> gv(g.data(), Eigen::Index(g.size()));
        gv = A_ * primal(u) - b_;
    }
    double g_value(std::span<const double>) const { return 0.0; }
    double value(std::span<const double> u) const { return smooth_value(u); }

    Cache init_cache(std::span<const double> u) const {
        Cache c;
        c.x = primal(u);
        c.dx = Eigen::VectorXd::Zero(A_.cols());
        return c;
    }
    void refresh(Cache& c, std::span<const double> u) const { c.x = primal(u); }

    void partial_gradient(const Cache& c, std::span<const double>, std::size_t i, std::span<double> out) const {
        out[0] = Arow_.row(Eigen::Index(i)).dot(c.x) - b_[Eigen::Index(i)];
    }

    double stage(Cache& c, std::span<const double>, std::span<const std::size_t> blocks, std::span<const double> delta) const {
        c.dx.setZero();
        double lin = 0.0;
        for (std::size_t s = 0; s < blocks.size(); ++s) {
            if (delta[s] == 0.0) continue;
            c.dx += delta[s] * Arow_.row(Eigen::Index(blocks[s])).transpose();
            lin += delta[s] * b_[Eigen::Index(blocks[s])];
        }
        c.staged = true;
        return c.dx.dot(c.x) + 0.5 * c.dx.squaredNorm() - lin;
    }
    void commit(Cache& c) const {
        if (c.staged) c.x += c.dx;
        c.staged = false;
    }
    void discard(Cache& c) const { c.staged = false; }

    double cached_smooth_value(const Cache& c, std::span<const double> u) const {
        Eigen::Map<const Eigen::VectorXd> uv(u.data(), Eigen::Index(u.size()));
        return 0.5 * c.x.squaredNorm() - uv.dot(b_);
    }

    void prox_block(std::size_t, std::span<double>, double) const {}
    double h_block(std::size_t, std::span<const double>) const { return 0.0; }

    /// I_k = spt(column k of A), Lᵢ = ‖aᵢ‖².
    SeparabilityStructure structure() const {
        SeparabilityStructure st;
        st.m = m();
        st.block_lipschitz = row_sq_;
        std::vector<double> gl;
        std::vector<GroupBlockLipschitz> table;
        for (Eigen::Index k = 0; k < A_.cols(); ++k) {
            std::vector<std::size_t> I;
            double nrm = 0.0;
            for (SparseCol::InnerIterator it(A_, k); it; ++it) {
                if (it.value() == 0.0) continue;
                I.push_back(std::size_t(it.row()));
                nrm += it.value() * it.value();
                table.push_back({st.index_sets.size(), std::size_t(it.row()), it.value() * it.value()});
            }
            if (I.empty()) continue;
            st.index_sets.push_back(std::move(I));
            gl.push_back(nrm);
        }
        st.group_lipschitz = std::move(gl);
        st.per_group_block_lipschitz = std::move(table);
        return st;
    }

private:
    SparseCol A_;
    SparseRow Arow_;
    Eigen::VectorXd b_;
    std::shared_ptr<BlockPartition> part_;
    std::vector<double> row_sq_;
};

namespace detail {

/// Shared machinery for duals of the form ½uᵀQu − yᵀu + Σ hᵢ(uᵢ) with a dense PSD Q.
class DenseQuadraticDual {
public:
    struct Cache {
        Eigen::VectorXd grad;  ///< Qu − y
        Eigen::VectorXd w;     ///< Xᵀu, when features are known
        std::vector<std::size_t> blocks;
        std::vector<double> delta;
    };

    const BlockPartition& partition() const { return *part_; }
    std::shared_ptr<const BlockPartition> partition_ptr() const { return part_; }
    std::size_t m() const { return std::size_t(Q_.rows()); }
    const Eigen::MatrixXd& K() const { return K_; }
    const Eigen::VectorXd& y() const { return y_; }
    double lambda() const { return lambda_; }
    bool has_features() const { return X_.size() > 0; }
    const Eigen::MatrixXd& X() const { return X_; }

    double smooth_value(std::span<const double> u) const {
        auto uv = map(u);
        return 0.5 * uv.dot(Q_ * uv) - y_.dot(uv);
    }
    void smooth_gradient(std::span<const double> u, std::span<double> g) const {
        Eigen::Map<Eigen::VectorXd> gv(g.data(), Eigen::Index(g.size()));
        gv = Q_ * map(u) - y_;
    }

    Cache init_cache(std::span<const double> u) const {
        Cache c;
        refresh(c, u);
        return c;
    }
    void refresh(Cache& c, std::span<const double> u) const {
        c.grad = Q_ * map(u) - y_;
        if (has_features()) c.w = X_.transpose() * map(u);
    }

    void partial_gradient(const Cache& c, std::span<const double>, std::size_t i, std::span<double> out) const {
        out[0] = c.grad[Eigen::Index(i)];
    }

    double stage(Cache& c, std::span<const double>, std::span<const std::size_t> blocks, std::span<const double> delta) const {
        c.blocks.assign(blocks.begin(), blocks.end());
        c.delta.assign(delta.begin(), delta.begin() + std::ptrdiff_t(blocks.size()));
        double lin = 0.0, quad = 0.0;
        for (std::size_t s = 0; s < blocks.size(); ++s) {
            const double ds = delta[s];
            if (ds == 0.0) continue;
            lin += ds * c.grad[Eigen::Index(blocks[s])];
            for (std::size_t t = 0; t < blocks.size(); ++t)
                quad += ds * delta[t] * Q_(Eigen::Index(blocks[s]), Eigen::Index(blocks[t]));
        }
        return lin + 0.5 * quad;
    }
    void commit(Cache& c) const {
        for (std::size_t s = 0; s < c.blocks.size(); ++s) {
            const double ds = c.delta[s];
            if (ds == 0.0) continue;
            c.grad += ds * Q_.col(Eigen::Index(c.blocks[s]));
            if (has_features()) c.w += ds * X_.row(Eigen::Index(c.blocks[s])).transpose();
        }
        c.blocks.clear();
        c.delta.clear();
    }
    void discard(Cache& c) const {
        c.blocks.clear();
        c.delta.clear();
    }

    /// ½uᵀQu − yᵀu = ½uᵀ(∇ − y) with ∇ = Qu − y.
    double cached_smooth_value(const Cache& c, std::span<const double> u) const {
        return 0.5 * map(u).dot(c.grad - y_);
    }

    /// Spectral norm of K.
    double K_norm() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K_, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }

protected:
    DenseQuadraticDual(Eigen::MatrixXd K, Eigen::VectorXd y, double lambda, double diag_shift, Eigen::MatrixXd X,
                       const char* who)
        : K_(std::move(K)), y_(std::move(y)), lambda_(lambda), X_(std::move(X)) {
        require(K_.rows() > 0 && K_.rows() == K_.cols(), std::string(who) + ": Gram matrix must be square and nonempty");
        require(y_.size() == K_.rows(), std::string(who) + ": y must have one entry per row of K");
        require(lambda_ > 0.0 && std::isfinite(lambda_), std::string(who) + ": lambda must be positive");
        const double scale = std::max(1.0, K_.cwiseAbs().maxCoeff());
        require((K_ - K_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, std::string(who) + ": K must be symmetric");
        if (X_.size() > 0) require(X_.rows() == K_.rows(), std::string(who) + ": feature matrix must have one row per sample");
        Q_ = K_;
        Q_.diagonal().array() += diag_shift;
        part_ = std::make_shared<BlockPartition>(BlockPartition::scalar(std::size_t(K_.rows())));
    }

    Eigen::Map<const Eigen::VectorXd> map(std::span<const double> u) const {
        return Eigen::Map<const Eigen::VectorXd>(u.data(), Eigen::Index(u.size()));
    }

    /// Coupling from feature supports when X is known, otherwise one set of all blocks.
    SeparabilityStructure dense_structure(double diag_shift) const {
        SeparabilityStructure st;
        st.m = m();
        st.block_lipschitz.resize(m());
        for (std::size_t i = 0; i < m(); ++i) st.block_lipschitz[i] = Q_(Eigen::Index(i), Eigen::Index(i));
        std::vector<double> gl;
        std::vector<GroupBlockLipschitz> table;
        if (has_features()) {
            for (Eigen::Index k = 0; k < X_.cols(); ++k) {
                std::vector<std::size_t> I;
                for (Eigen::Index i = 0; i < X_.rows(); ++i) {
                    if (X_(i, k) == 0.0) continue;
                    I.push_back(std::size_t(i));
                    table.push_back({st.index_sets.size(), std::size_t(i), X_(i, k) * X_(i, k)});
                }
                if (I.empty()) continue;
                gl.push_back(X_.col(k).squaredNorm());
                st.index_sets.push_back(std::move(I));
            }
            if (diag_shift > 0.0) {
                for (std::size_t i = 0; i < m(); ++i) {
                    table.push_back({st.index_sets.size(), i, diag_shift});
                    st.index_sets.push_back({i});
                    gl.push_back(diag_shift);
                }
            }
        } else {
            std::vector<std::size_t> all;
            for (std::size_t i = 0; i < m(); ++i) {
                if (st.block_lipschitz[i] <= 0.0) continue;
                all.push_back(i);
                table.push_back({0, i, st.block_lipschitz[i]});
            }
            require(!all.empty(), "dual problem: Gram matrix has an all-zero diagonal");
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q_, Eigen::EigenvaluesOnly);
            gl.push_back(es.eigenvalues().cwiseAbs().maxCoeff());
            st.index_sets.push_back(std::move(all));
        }
        st.group_lipschitz = std::move(gl);
        st.per_group_block_lipschitz = std::move(table);
        return st;
    }

    Eigen::MatrixXd K_;
    Eigen::MatrixXd Q_;
    Eigen::VectorXd y_;
    double lambda_;
    Eigen::MatrixXd X_;
    std::shared_ptr<BlockPartition> part_;
};

}  // namespace detail

/**
 * Ridge regression dual: ½uᵀ(K + λm·Id)u − yᵀu, strongly convex with modulus λm.
 * Primal: P(w) = (1/(λm)) Σ ½(yᵢ − ⟨w, xᵢ⟩)² + ½‖w‖², with w = Xᵀu.
 */
class RidgeDualProblem : public detail::DenseQuadraticDual {
public:
    RidgeDualProblem(Eigen::MatrixXd K, Eigen::VectorXd y, double lambda, Eigen::MatrixXd X = {})
        : DenseQuadraticDual(std::move(K), std::move(y), lambda, 0.0, std::move(X), "ridge_dual") {
        lm_ = lambda_ * double(m());
        Q_.diagonal().array() += lm_;
    }

    static RidgeDualProblem from_features(const Eigen::MatrixXd& X, Eigen::VectorXd y, double lambda) {
        return RidgeDualProblem(X * X.transpose(), std::move(y), lambda, X);
    }

    double lambda_m() const { return lm_; }
    double strong_convexity() const { return lm_; }
    double g_strong_convexity() const { return 0.0; }
    double g_value(std::span<const double>) const { return 0.0; }
    double value(std::span<const double> u) const { return smooth_value(u); }
    void prox_block(std::size_t, std::span<double>, double) const {}
    double h_block(std::size_t, std::span<const double>) const { return 0.0; }
    SeparabilityStructure structure() const { return dense_structure(lm_); }

    /// ū = (K + λm·Id)⁻¹ y.
    Eigen::VectorXd exact_solution() const { return Q_.llt().solve(y_); }

    double primal_value(const Eigen::VectorXd& w) const {
        require(has_features(), "ridge_dual: primal value needs the feature matrix");
        return 0.5 * (y_ - X_ * w).squaredNorm() / lm_ + 0.5 * w.squaredNorm();
    }

private:
    double lm_ = 0.0;
};

/**
 * Hinge-loss SVM dual: ½uᵀKu − yᵀu + ι(yᵢuᵢ ∈ [0, 1/(λm)] ∀i).
 */
class SvmDualProblem : public detail::DenseQuadraticDual {
public:
    SvmDualProblem(Eigen::MatrixXd K, Eigen::VectorXd y, double lambda, Eigen::MatrixXd X = {})
        : DenseQuadraticDual(std::move(K), std::move(y), lambda, 0.0, std::move(X), "svm_dual") {
        for (Eigen::Index i = 0; i < y_.size(); ++i)
            require(y_[i] == 1.0 || y_[i] == -1.0, "svm_dual: labels must be +1 or -1");
        ub_ = 1.0 / (lambda_ * double(m()));
    }

    static SvmDualProblem from_features(const Eigen::MatrixXd& X, Eigen::VectorXd y, double lambda) {
        return SvmDualProblem(X * X.transpose(), std::move(y), lambda, X);
    }

    double g_strong_convexity() const { return 0.0; }
    double upper() const { return ub_; }

    double h_block(std::size_t i, std::span<const double> ui) const {
        const double s = y_[Eigen::Index(i)] * ui[0];
        return (s >= -kFeasTol && s <= ub_ + kFeasTol) ? 0.0 : kInf;
    }
    double g_value(std::span<const double> u) const {
        for (std::size_t i = 0; i < u.size(); ++i)
            if (h_block(i, u.subspan(i, 1)) != 0.0) return kInf;
        return 0.0;
    }
    double value(std::span<const double> u) const { return smooth_value(u) + g_value(u); }

    /// Projection onto [0, 1/(λm)] for yᵢ = +1 and [−1/(λm), 0] for yᵢ = −1.
    void prox_block(std::size_t i, std::span<double> z, double) const {
        if (y_[Eigen::Index(i)] > 0) z[0] = std::clamp(z[0], 0.0, ub_);
        else z[0] = std::clamp(z[0], -ub_, 0.0);
    }

    SeparabilityStructure structure() const { return dense_structure(0.0); }

    /// P(w) = (1/(λm)) Σ (1 − yᵢ⟨w, xᵢ⟩)₊ + ½‖w‖².
    double primal_value(const Eigen::VectorXd& w) const {
        require(has_features(), "svm_dual: primal value needs the feature matrix");
        Eigen::VectorXd margins = X_ * w;
        double loss = 0.0;
        for (Eigen::Index i = 0; i < margins.size(); ++i) loss += std::max(0.0, 1.0 - y_[i] * margins[i]);
        return loss * ub_ + 0.5 * w.squaredNorm();
    }

private:
    double ub_ = 0.0;
};

/**
 * ½xᵀQx − cᵀx + λ‖x‖₁ over an arbitrary block partition; generic test and demo problem.
 * Lᵢ is the spectral norm of the diagonal block Qᵢᵢ; the coupling is a single set of all blocks.
 */
class QuadraticProblem {
public:
    struct Cache {
        Eigen::VectorXd grad;
        std::vector<std::size_t> blocks;
        Eigen::VectorXd delta;  ///< full-length staged change
    };

    QuadraticProblem(std::shared_ptr<const BlockPartition> part, Eigen::MatrixXd Q, Eigen::VectorXd c, double lambda = 0.0)
        : part_(std::move(part)), Q_(std::move(Q)), c_(std::move(c)), lambda_(lambda) {
        const auto N = Eigen::Index(part_->N());
        require(Q_.rows() == N && Q_.cols() == N, "quadratic: Q must be N x N");
        require(c_.size() == N, "quadratic: c must have length N");
        require(lambda_ >= 0.0, "quadratic: lambda must be nonnegative");
    }

    const BlockPartition& partition() const { return *part_; }
    std::shared_ptr<const BlockPartition> partition_ptr() const { return part_; }
    const Eigen::MatrixXd& Q() const { return Q_; }
    double g_strong_convexity() const { return 0.0; }

    double smooth_value(std::span<const double> x) const {
        auto xv = map(x);
        return 0.5 * xv.dot(Q_ * xv) - c_.dot(xv);
    }
    void smooth_gradient(std::span<const double> x, std::span<double> g) const {
        Eigen::Map<Eigen::VectorXd> gv(g.data(), Eigen::Index(g.size()));
        gv = Q_ * map(x) - c_;
    }
    double g_value(std::span<const double> x) const {
        double s = 0.0;
        for (double v : x) s += std::abs(v);
        return lambda_ * s;
    }
    double value(std::span<const double> x) const { return smooth_value(x) + g_value(x); }

    Cache init_cache(std::span<const double> x) const {
        Cache c;
        refresh(c, x);
        c.delta = Eigen::VectorXd::Zero(Q_.rows());
        return c;
    }
    void refresh(Cache& c, std::span<const double> x) const { c.grad = Q_ * map(x) - c_; }

    void partial_gradient(const Cache& c, std::span<const double>, std::size_t i, std::span<double> out) const {
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = c.grad[Eigen::Index(part_->offset(i) + j)];
    }

    double stage(Cache& c, std::span<const double>, std::span<const std::size_t> blocks, std::span<const double> delta) const {
        c.delta.setZero();
        c.blocks.assign(blocks.begin(), blocks.end());
        std::size_t pos = 0;
        for (std::size_t i : blocks)
            for (std::size_t j = part_->offset(i); j < part_->offset(i + 1); ++j) c.delta[Eigen::Index(j)] = delta[pos++];
        return c.delta.dot(c.grad) + 0.5 * c.delta.dot(Q_ * c.delta);
    }
    void commit(Cache& c) const {
        if (!c.blocks.empty()) c.grad += Q_ * c.delta;
        c.blocks.clear();
    }
    void discard(Cache& c) const { c.blocks.clear(); }

    double cached_smooth_value(const Cache& c, std::span<const double> x) const {
        return 0.5 * map(x).dot(c.grad - c_);
    }

    void prox_block(std::size_t, std::span<double> z, double gamma) const {
        for (auto& v : z) v = soft_threshold(v, gamma * lambda_);
    }
    double h_block(std::size_t, std::span<const double> xi) const {
        double s = 0.0;
        for (double v : xi) s += std::abs(v);
        return lambda_ * s;
    }

    SeparabilityStructure structure() const {
        SeparabilityStructure st;
        st.m = part_->m();
        st.block_lipschitz.resize(st.m);
        std::vector<std::size_t> all(st.m);
        for (std::size_t i = 0; i < st.m; ++i) {
            auto o = Eigen::Index(part_->offset(i)), d = Eigen::Index(part_->dim(i));
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q_.block(o, o, d, d), Eigen::EigenvaluesOnly);
            st.block_lipschitz[i] = es.eigenvalues().cwiseAbs().maxCoeff();
            all[i] = i;
        }
        st.index_sets.push_back(std::move(all));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q_, Eigen::EigenvaluesOnly);
        st.group_lipschitz = std::vector<double>{es.eigenvalues().cwiseAbs().maxCoeff()};
        return st;
    }

private:
    Eigen::Map<const Eigen::VectorXd> map(std::span<const double> x) const {
        return Eigen::Map<const Eigen::VectorXd>(x.data(), Eigen::Index(x.size()));
    }

    std::shared_ptr<const BlockPartition> part_;
    Eigen::MatrixXd Q_;
    Eigen::VectorXd c_;
    double lambda_;
};

}  // namespace blockfb
