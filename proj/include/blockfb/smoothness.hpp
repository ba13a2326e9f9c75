#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "sampling.hpp"

namespace blockfb {

/// L^(k)ᵢ entry: Lipschitz constant of block i's contribution to group k.
struct GroupBlockLipschitz {
    std::size_t k = 0;
    std::size_t i = 0;
    double L = 0.0;
};

/**
 * Partial separability of f: f = Σ_k g_k, where g_k depends only on the blocks in I_k.
 */
struct SeparabilityStructure {
    std::size_t m = 0;
    std::vector<std::vector<std::size_t>> index_sets;
    std::vector<double> block_lipschitz;
    std::optional<std::vector<double>> group_lipschitz;
    std::optional<std::vector<GroupBlockLipschitz>> per_group_block_lipschitz;

    std::size_t p() const noexcept { return index_sets.size(); }
    std::size_t eta() const { return max_cardinality(index_sets); }

    std::vector<bool> covered() const {
        std::vector<bool> c(m, false);
        for (const auto& I : index_sets)
            for (std::size_t i : I) c[i] = true;
        return c;
    }

    void validate() const {
        require(m >= 1, "structure: at least one block required");
        require(block_lipschitz.size() == m, "structure: block_lipschitz must have one entry per block");
        bool any = false;
        for (const auto& I : index_sets) {
            for (std::size_t i : I) require(i < m, "structure: index set entry out of range");
            any = any || !I.empty();
        }
        require(any, "structure: the union of the index sets is empty");
        auto cov = covered();
        for (std::size_t i = 0; i < m; ++i) {
            require(block_lipschitz[i] >= 0.0, "structure: Lipschitz constants must be nonnegative");
            if (cov[i])
                require(block_lipschitz[i] > 0.0,
                        "structure: block " + std::to_string(i) + " is coupled but has zero Lipschitz constant");
        }
        if (group_lipschitz) require(group_lipschitz->size() == p(), "structure: group_lipschitz must have one entry per set");
        if (per_group_block_lipschitz)
            for (const auto& e : *per_group_block_lipschitz)
                require(e.k < p() && e.i < m && e.L >= 0.0, "structure: malformed per-group Lipschitz entry");
    }

    /// FNV-1a over the index sets and Lipschitz constants; identifies the structure in certificate provenance.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t v) {
            for (int b = 0; b < 8; ++b) {
                h ^= (v >> (8 * b)) & 0xffU;
                h *= 0x100000001b3ULL;
            }
        };
        mix(m);
        for (const auto& I : index_sets) {
            mix(I.size());
            for (std::size_t i : I) mix(i);
        }
        for (double L : block_lipschitz) mix(std::bit_cast<std::uint64_t>(L));
        return h;
    }
};

enum class Condition { S1, S2, S3 };

inline const char* to_string(Condition c) {
    switch (c) {
        case Condition::S1: return "S1";
        case Condition::S2: return "S2";
        case Condition::S3: return "S3";
    }
    return "?";
}

/// Smoothness parameters νᵢ together with the condition they certify.
struct SmoothnessCertificate {
    std::vector<double> nu;
    Condition condition = Condition::S1;
    std::string provenance;
    std::optional<BetaConstants> betas;
    std::uint64_t structure_hash = 0;

    /// S3 ⇒ S2 ⇒ S1.
    bool certifies(Condition c) const { return static_cast<int>(condition) >= static_cast<int>(c); }
};

/// νᵢ = β₁,ᵢ Lᵢ.
inline SmoothnessCertificate nu_s1(const SeparabilityStructure& st, const BetaConstants& betas) {
    st.validate();
    require(betas.beta1.size() == st.m, "nu_s1: beta constants do not match the block count");
    SmoothnessCertificate c;
    c.condition = Condition::S1;
    c.nu.resize(st.m);
    for (std::size_t i = 0; i < st.m; ++i) c.nu[i] = betas.beta1[i] * st.block_lipschitz[i];
    c.betas = betas;
    c.structure_hash = st.hash();
    c.provenance = "nu = beta1_i * L_i";
    return c;
}

/// νᵢ = Σ_{k∋i} (1 + (τ−1)(|I_k|−1)/(m−1)) L^(k)ᵢ for τ-nice sampling.
inline SmoothnessCertificate nu_s1_refined(const SeparabilityStructure& st, std::size_t tau) {
    st.validate();
    require(st.per_group_block_lipschitz.has_value(), "nu_s1_refined: per-group block Lipschitz table required");
    require(tau >= 1 && tau <= st.m, "nu_s1_refined: tau must lie in [1, m]");
    SmoothnessCertificate c;
    c.condition = Condition::S1;
    c.nu.assign(st.m, 0.0);
    for (const auto& e : *st.per_group_block_lipschitz) {
        double card = double(st.index_sets[e.k].size());
        double w = st.m == 1 ? 1.0 : 1.0 + double(tau - 1) * (card - 1.0) / double(st.m - 1);
        c.nu[e.i] += w * e.L;
    }
    c.structure_hash = st.hash();
    c.provenance = "nu = sum_k (1 + (tau-1)(|I_k|-1)/(m-1)) L^(k)_i, tau=" + std::to_string(tau);
    return c;
}

/**
 * Almost-sure certificate: the elementwise minimum of β₂Lᵢ (β₂ enumerated when feasible,
 * min(η, τ_max) otherwise) and, when the per-group table exists, Σ_{k∋i} min(|I_k|, τ_max) L^(k)ᵢ.
 */
inline SmoothnessCertificate nu_s2(const SeparabilityStructure& st, const SamplingScheme& scheme) {
    st.validate();
    require(scheme.m() == st.m, "nu_s2: sampling and structure disagree on the block count");
    const std::size_t eta = st.eta(), tmax = scheme.tau_max();
    double beta2 = double(std::min(eta, tmax));
    std::string how = "min(eta, tau_max)";
    std::optional<BetaConstants> betas;
    if (is_enumerable(scheme)) {
        betas = beta_by_enumeration(scheme, st.index_sets);
        beta2 = std::min(beta2, betas->beta2);
        how = "enumerated beta2";
    }
    SmoothnessCertificate c;
    c.condition = Condition::S2;
    c.nu.resize(st.m);
    for (std::size_t i = 0; i < st.m; ++i) c.nu[i] = beta2 * st.block_lipschitz[i];
    if (st.per_group_block_lipschitz) {
        std::vector<double> alt(st.m, 0.0);
        for (const auto& e : *st.per_group_block_lipschitz)
            alt[e.i] += double(std::min(st.index_sets[e.k].size(), tmax)) * e.L;
        for (std::size_t i = 0; i < st.m; ++i) c.nu[i] = std::min(c.nu[i], alt[i]);
        how += " and per-group min(|I_k|, tau_max)";
    }
    if (betas) c.betas = betas;
    c.structure_hash = st.hash();
    c.provenance = "nu = " + how + " (elementwise min)";
    return c;
}

/// νᵢ = L̃ᵢ supplied by the caller as per-block operator norms.
inline SmoothnessCertificate nu_s3(const std::vector<double>& operator_norms) {
    require(!operator_norms.empty(), "nu_s3: operator norms required");
    for (double v : operator_norms) require(v >= 0.0 && std::isfinite(v), "nu_s3: operator norms must be finite and nonnegative");
    SmoothnessCertificate c;
    c.condition = Condition::S3;
    c.nu = operator_norms;
    c.provenance = "nu = supplied operator norms";
    return c;
}

/// Embedding case: L̃ᵢ = Σ_{k∋i} L^(k).
inline SmoothnessCertificate nu_s3(const SeparabilityStructure& st) {
    st.validate();
    require(st.group_lipschitz.has_value(), "nu_s3: group Lipschitz constants required");
    std::vector<double> nu(st.m, 0.0);
    for (std::size_t k = 0; k < st.p(); ++k)
        for (std::size_t i : st.index_sets[k]) nu[i] += (*st.group_lipschitz)[k];
    auto c = nu_s3(nu);
    c.structure_hash = st.hash();
    c.provenance = "nu = sum_{k: i in I_k} L^(k)";
    return c;
}

struct GlobalLipschitzBounds {
    double L_identity = 0.0;   ///< max_k Σ_{i∈I_k} Lᵢ
    double L_gamma_inv = 0.0;  ///< max_k Σ_{i∈I_k} γᵢLᵢ
    double L_lambda = 0.0;     ///< η
};

inline GlobalLipschitzBounds global_lipschitz_bounds(const SeparabilityStructure& st, const std::vector<double>& gamma) {
    st.validate();
    require(gamma.size() == st.m, "global_lipschitz_bounds: one stepsize per block required");
    GlobalLipschitzBounds b;
    for (const auto& I : st.index_sets) {
        double s = 0.0, sg = 0.0;
        for (std::size_t i : I) {
            s += st.block_lipschitz[i];
            sg += gamma[i] * st.block_lipschitz[i];
        }
        b.L_identity = std::max(b.L_identity, s);
        b.L_gamma_inv = std::max(b.L_gamma_inv, sg);
    }
    b.L_lambda = double(st.eta());
    return b;
}

/// Anything exposing exact f values and gradients on flat vectors.
template <class F>
concept SmoothFunction = requires(const F& f, std::span<const double> x, std::span<double> g) {
    { f.partition() } -> std::convertible_to<const BlockPartition&>;
    { f.smooth_value(x) } -> std::convertible_to<double>;
    f.smooth_gradient(x, g);
};

struct EsoReport {
    double min_slack = std::numeric_limits<double>::infinity();
    std::size_t trials = 0;
    std::size_t atoms = 0;
    bool valid(double tol = 1e-10) const { return min_slack >= -tol; }
};

namespace detail {

inline void random_ball_point(Rng& rng, std::span<double> out, double radius) {
    double nrm = 0.0;
    for (auto& v : out) {
        v = rng.uniform(-1.0, 1.0);
        nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    double r = radius * rng.uniform();
    for (auto& v : out) v = nrm > 0.0 ? v * r / nrm : 0.0;
}

template <SmoothFunction F>
EsoReport verify_eso(const F& f, const SamplingScheme& scheme, const SmoothnessCertificate& cert, std::size_t trials,
                     Rng& rng, bool almost_sure, const std::vector<std::pair<std::vector<double>, std::vector<double>>>& fixed) {
    const auto& part = f.partition();
    require(scheme.m() == part.m() && cert.nu.size() == part.m(), "verify_eso: block counts disagree");
    const auto atoms = enumerate_atoms(scheme);
    const std::size_t N = part.N();
    std::vector<double> pm(part.m(), 0.0);
    for (const auto& a : atoms)
        for (std::size_t i : a.support) pm[i] += a.prob;

    EsoReport rep;
    rep.atoms = atoms.size();
    std::vector<double> x(N), v(N), g(N), y(N);
    auto probe = [&]() {
        double fx = f.smooth_value(x);
        f.smooth_gradient(x, g);
        double expected = 0.0;
        for (const auto& a : atoms) {
            y = x;
            double lin = 0.0, quad = 0.0;
            for (std::size_t i : a.support) {
                for (std::size_t j = part.offset(i); j < part.offset(i + 1); ++j) {
                    y[j] += v[j];
                    lin += g[j] * v[j];
                    quad += cert.nu[i] * v[j] * v[j];
                }
            }
            double diff = f.smooth_value(y) - fx;
            if (almost_sure) {
                rep.min_slack = std::min(rep.min_slack, lin + 0.5 * quad - diff);
            } else {
                expected += a.prob * (lin - diff);
            }
        }
        if (!almost_sure) {
            double quad = 0.0;
            for (std::size_t i = 0; i < part.m(); ++i) {
                double b = 0.0;
                for (std::size_t j = part.offset(i); j < part.offset(i + 1); ++j) b += v[j] * v[j];
                quad += pm[i] * cert.nu[i] * b;
            }
            rep.min_slack = std::min(rep.min_slack, expected + 0.5 * quad);
        }
        ++rep.trials;
    };
    for (const auto& [fx, fv] : fixed) {
        require(fx.size() == N && fv.size() == N, "verify_eso: probe dimension mismatch");
        x = fx;
        v = fv;
        probe();
    }
    for (std::size_t t = 0; t < trials; ++t) {
        random_ball_point(rng, x, 10.0);
        random_ball_point(rng, v, 10.0);
        probe();
    }
    return rep;
}

}  // namespace detail

using ProbeList = std::vector<std::pair<std::vector<double>, std::vector<double>>>;

/// Minimum over probes of the exact expectation slack in the S1 inequality.
template <SmoothFunction F>
EsoReport verify_eso_s1(const F& f, const SamplingScheme& scheme, const SmoothnessCertificate& cert, std::size_t trials,
                        Rng& rng, const ProbeList& extra_probes = {}) {
    return detail::verify_eso(f, scheme, cert, trials, rng, false, extra_probes);
}

/// Minimum over probes and atoms of the per-atom slack in the S2 inequality.
template <SmoothFunction F>
EsoReport verify_eso_s2(const F& f, const SamplingScheme& scheme, const SmoothnessCertificate& cert, std::size_t trials,
                        Rng& rng, const ProbeList& extra_probes = {}) {
    return detail::verify_eso(f, scheme, cert, trials, rng, true, extra_probes);
}

/// γᵢ = δ/νᵢ, capped at gamma_max for blocks with νᵢ = 0.
inline std::vector<double> stepsizes(const SmoothnessCertificate& cert, double delta, double gamma_max = 1e6) {
    require(delta > 0.0 && delta < 2.0, "stepsizes: delta must lie in (0, 2)");
    std::vector<double> g(cert.nu.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = cert.nu[i] > 0.0 ? std::min(delta / cert.nu[i], gamma_max) : gamma_max;
    return g;
}

}  // namespace blockfb
