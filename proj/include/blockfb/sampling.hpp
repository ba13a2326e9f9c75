#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "core.hpp"

namespace blockfb {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seedable 64-bit generator; split(k) derives an independent stream for worker k.
class Rng {
public:
    using result_type = std::mt19937_64::result_type;

    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

    Rng split(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL))); }

    std::uint64_t seed() const noexcept { return seed_; }
    result_type operator()() { return engine_(); }
    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

enum class SamplingKind { SerialNonuniform, TauNice, FullyParallel, ExplicitAtoms };

struct Atom {
    std::vector<std::size_t> support;
    double prob = 0.0;
};

/// Distribution of the random block selector ε ∈ {0,1}^m.
class SamplingScheme {
public:
    static SamplingScheme serial(std::vector<double> probs) {
        SamplingScheme s;
        s.kind_ = SamplingKind::SerialNonuniform;
        s.m_ = probs.size();
        require(s.m_ >= 1, "serial sampling: at least one block required");
        double total = 0.0;
        for (double p : probs) {
            require(p > 0.0, "serial sampling: every probability must be positive");
            total += p;
        }
        require(std::abs(total - 1.0) <= 1e-12, "serial sampling: probabilities must sum to 1");
        s.marginals_ = probs;
        s.tau_max_ = 1;
        s.cdf_.resize(probs.size());
        std::partial_sum(probs.begin(), probs.end(), s.cdf_.begin());
        for (std::size_t i = 0; i < probs.size(); ++i) s.atoms_.push_back({{i}, probs[i]});
        return s;
    }

    static SamplingScheme uniform_serial(std::size_t m) { return serial(std::vector<double>(m, 1.0 / double(m))); }

    static SamplingScheme tau_nice(std::size_t m, std::size_t tau) {
        require(m >= 1, "tau-nice sampling: at least one block required");
        require(tau >= 1 && tau <= m, "tau-nice sampling: tau must lie in [1, m]");
        SamplingScheme s;
        s.kind_ = SamplingKind::TauNice;
        s.m_ = m;
        s.tau_ = tau;
        s.tau_max_ = tau;
        s.marginals_.assign(m, double(tau) / double(m));
        return s;
    }

    static SamplingScheme fully_parallel(std::size_t m) {
        require(m >= 1, "fully parallel sampling: at least one block required");
        SamplingScheme s;
        s.kind_ = SamplingKind::FullyParallel;
        s.m_ = m;
        s.tau_ = m;
        s.tau_max_ = m;
        s.marginals_.assign(m, 1.0);
        std::vector<std::size_t> all(m);
        std::iota(all.begin(), all.end(), std::size_t{0});
        s.atoms_.push_back({all, 1.0});
        return s;
    }

    static SamplingScheme explicit_atoms(std::size_t m, std::vector<Atom> atoms) {
        require(!atoms.empty(), "explicit sampling: at least one atom required");
        SamplingScheme s;
        s.kind_ = SamplingKind::ExplicitAtoms;
        s.m_ = m;
        s.marginals_.assign(m, 0.0);
        double total = 0.0;
        for (auto& a : atoms) {
            require(!a.support.empty(), "explicit sampling: atom supports must be nonempty");
            require(a.prob > 0.0, "explicit sampling: atom probabilities must be positive");
            std::sort(a.support.begin(), a.support.end());
            require(std::adjacent_find(a.support.begin(), a.support.end()) == a.support.end(),
                    "explicit sampling: atom support has repeated blocks");
            require(a.support.back() < m, "explicit sampling: atom support index out of range");
            for (std::size_t i : a.support) s.marginals_[i] += a.prob;
            s.tau_max_ = std::max(s.tau_max_, a.support.size());
            total += a.prob;
            s.cdf_.push_back(total);
        }
        require(std::abs(total - 1.0) <= 1e-12, "explicit sampling: atom probabilities must sum to 1");
        for (std::size_t i = 0; i < m; ++i)
            require(s.marginals_[i] > 0.0, "explicit sampling: block " + std::to_string(i) + " is never selected");
        s.atoms_ = std::move(atoms);
        return s;
    }

    SamplingKind kind() const noexcept { return kind_; }
    std::size_t m() const noexcept { return m_; }
    std::size_t tau() const noexcept { return tau_; }
    std::size_t tau_max() const noexcept { return tau_max_; }
    const std::vector<double>& marginals() const noexcept { return marginals_; }
    double p_min() const { return *std::min_element(marginals_.begin(), marginals_.end()); }
    /// E[Σ εᵢ].
    double expected_batch() const { return std::accumulate(marginals_.begin(), marginals_.end(), 0.0); }
    const std::vector<double>& cdf() const noexcept { return cdf_; }
    /// Stored atoms (empty for TauNice, which is enumerated on demand).
    const std::vector<Atom>& atoms() const noexcept { return atoms_; }

    std::string describe() const {
        switch (kind_) {
            case SamplingKind::SerialNonuniform: return "serial";
            case SamplingKind::TauNice: return "tau_nice(" + std::to_string(tau_) + ")";
            case SamplingKind::FullyParallel: return "fully_parallel";
            case SamplingKind::ExplicitAtoms: return "explicit_atoms(" + std::to_string(atoms_.size()) + ")";
        }
        return "unknown";
    }

private:
    SamplingKind kind_ = SamplingKind::FullyParallel;
    std::size_t m_ = 0;
    std::size_t tau_ = 0;
    std::size_t tau_max_ = 0;
    std::vector<double> marginals_;
    std::vector<double> cdf_;
    std::vector<Atom> atoms_;
};

inline std::vector<double> marginals(const SamplingScheme& s) { return s.marginals(); }

/// Stateful drawer; keeps a reusable permutation for τ-nice partial Fisher–Yates shuffles.
class Sampler {
public:
    explicit Sampler(const SamplingScheme& scheme) : scheme_(&scheme), perm_(scheme.m()) {
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    }

    /// Writes the selected blocks, in increasing order, into `selected`.
    void draw(Rng& rng, std::vector<std::size_t>& selected) {
        const auto& s = *scheme_;
        selected.clear();
        switch (s.kind()) {
            case SamplingKind::FullyParallel:
                selected.resize(s.m());
                std::iota(selected.begin(), selected.end(), std::size_t{0});
                return;
            case SamplingKind::TauNice: {
                const std::size_t m = s.m(), tau = s.tau();
                for (std::size_t j = 0; j < tau; ++j) {
                    std::size_t r = j + rng.below(m - j);
                    std::swap(perm_[j], perm_[r]);
                }
                selected.assign(perm_.begin(), perm_.begin() + std::ptrdiff_t(tau));
                std::sort(selected.begin(), selected.end());
                return;
            }
            case SamplingKind::SerialNonuniform:
            case SamplingKind::ExplicitAtoms: {
                const auto& cdf = s.cdf();
                double u = rng.uniform() * cdf.back();
                auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
                std::size_t a = std::min<std::size_t>(std::size_t(it - cdf.begin()), cdf.size() - 1);
                const auto& sup = s.atoms()[a].support;
                selected.assign(sup.begin(), sup.end());
                return;
            }
        }
    }

private:
    const SamplingScheme* scheme_;
    std::vector<std::size_t> perm_;
};

inline std::vector<bool> draw(const SamplingScheme& scheme, Rng& rng) {
    Sampler sampler(scheme);
    std::vector<std::size_t> sel;
    sampler.draw(rng, sel);
    std::vector<bool> mask(scheme.m(), false);
    for (std::size_t i : sel) mask[i] = true;
    return mask;
}

/// Binomial coefficient, saturating at the largest representable value.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    long double r = 1.0L;
    for (std::uint64_t j = 1; j <= k; ++j) r = r * static_cast<long double>(n - k + j) / static_cast<long double>(j);
    if (r >= static_cast<long double>(std::numeric_limits<std::uint64_t>::max())) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(std::llround(r));
}

inline constexpr std::uint64_t kEnumerationLimit = 1'000'000;

inline bool is_enumerable(const SamplingScheme& s, std::uint64_t limit = kEnumerationLimit) {
    if (s.kind() == SamplingKind::TauNice) return binomial(s.m(), s.tau()) <= limit;
    return s.atoms().size() <= limit;
}

/// Explicit support of the scheme; throws when it exceeds `limit` atoms.
inline std::vector<Atom> enumerate_atoms(const SamplingScheme& s, std::uint64_t limit = kEnumerationLimit) {
    if (!is_enumerable(s, limit))
        throw validation_error("sampling support too large to enumerate (" + s.describe() +
                               "); use the closed-form beta constants instead");
    if (s.kind() != SamplingKind::TauNice) return s.atoms();
    const std::size_t m = s.m(), tau = s.tau();
    const double prob = 1.0 / double(binomial(m, tau));
    std::vector<Atom> atoms;
    std::vector<std::size_t> idx(tau);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (true) {
        atoms.push_back({idx, prob});
        std::size_t j = tau;
        while (j > 0 && idx[j - 1] == m - tau + j - 1) --j;
        if (j == 0) break;
        ++idx[j - 1];
        for (std::size_t l = j; l < tau; ++l) idx[l] = idx[l - 1] + 1;
    }
    return atoms;
}

/// First and second moments of Σ εᵢ.
inline std::pair<double, double> batch_moments(const SamplingScheme& s) {
    if (s.kind() == SamplingKind::TauNice) {
        double t = double(s.tau());
        return {t, t * t};
    }
    double m1 = 0.0, m2 = 0.0;
    for (const auto& a : s.atoms()) {
        double c = double(a.support.size());
        m1 += a.prob * c;
        m2 += a.prob * c * c;
    }
    return {m1, m2};
}

enum class BetaMethod { ClosedFormTauNice, ClosedFormDoublyUniform, Enumeration, Conservative };

struct BetaConstants {
    std::vector<double> beta1;          ///< operative β₁,ᵢ
    double beta2 = 1.0;
    BetaMethod method = BetaMethod::Enumeration;
    std::vector<double> beta1_condexp;  ///< E[max_k Σ_{j∈I_k} εⱼ | εᵢ = 1] (enumeration only)
    std::vector<double> beta1_refined;  ///< Σ_t t·max_{k∋i} P(Σ_{j∈I_k} εⱼ = t | εᵢ = 1) (enumeration only)
};

/// 1 + (η−1)(τ−1)/(m−1); τ-nice sampling, every coupling set of size at most η.
inline double beta_tau_nice(std::size_t m, std::size_t eta, std::size_t tau) {
    require(m >= 2, "beta_tau_nice: m must be at least 2 (use beta = 1 for a single block)");
    require(eta >= 1 && eta <= m, "beta_tau_nice: eta must lie in [1, m]");
    require(tau >= 1 && tau <= m, "beta_tau_nice: tau must lie in [1, m]");
    return 1.0 + double(eta - 1) * double(tau - 1) / double(m - 1);
}

/// 1 + ((η−1)/(m−1))·(E[(Σεᵢ)²]/E[Σεᵢ] − 1) for doubly uniform samplings.
inline double beta_doubly_uniform(std::size_t m, std::size_t eta, double first_moment, double second_moment) {
    require(m >= 2, "beta_doubly_uniform: m must be at least 2");
    require(eta >= 1 && eta <= m, "beta_doubly_uniform: eta must lie in [1, m]");
    require(first_moment > 0.0, "beta_doubly_uniform: first moment must be positive");
    require(second_moment >= first_moment, "beta_doubly_uniform: second moment must be at least the first");
    return 1.0 + double(eta - 1) / double(m - 1) * (second_moment / first_moment - 1.0);
}

inline std::size_t max_cardinality(const std::vector<std::vector<std::size_t>>& index_sets) {
    std::size_t eta = 0;
    for (const auto& I : index_sets) eta = std::max(eta, I.size());
    return eta;
}

/**
 * Exact β constants over the enumerated support of `scheme`.
 *
 * Both β₁,ᵢ expressions are valid; the operative value is their minimum.
 * Blocks in no coupling set have Lᵢ = 0, so their β₁,ᵢ is reported as 1.
 * β₂ ignores atoms with probability below 1e-15.
 */
inline BetaConstants beta_by_enumeration(const SamplingScheme& scheme,
                                         const std::vector<std::vector<std::size_t>>& index_sets,
                                         std::uint64_t limit = kEnumerationLimit) {
    const std::size_t m = scheme.m();
    const std::size_t p = index_sets.size();
    const std::size_t eta = max_cardinality(index_sets);
    require(eta >= 1, "beta_by_enumeration: coupling sets are all empty");
    for (const auto& I : index_sets)
        for (std::size_t i : I) require(i < m, "beta_by_enumeration: coupling set index out of range");

    const auto atoms = enumerate_atoms(scheme, limit);

    // membership[i] = list of (k, slot) with slot indexing hist rows
    std::vector<std::vector<std::size_t>> groups_of(m);
    for (std::size_t k = 0; k < p; ++k)
        for (std::size_t i : index_sets[k]) groups_of[i].push_back(k);

    std::vector<double> pm(m, 0.0), condexp(m, 0.0);
    // hist[i][g][t]: P(S_k = t, εᵢ = 1) for the g-th group k containing i
    std::vector<std::vector<std::vector<double>>> hist(m);
    for (std::size_t i = 0; i < m; ++i) hist[i].assign(groups_of[i].size(), std::vector<double>(eta + 1, 0.0));

    std::vector<char> in(m, 0);
    std::vector<std::size_t> S(p, 0);
    double beta2 = 0.0;
    for (const auto& a : atoms) {
        for (std::size_t i : a.support) in[i] = 1;
        std::size_t smax = 0;
        for (std::size_t k = 0; k < p; ++k) {
            std::size_t c = 0;
            for (std::size_t j : index_sets[k]) c += in[j];
            S[k] = c;
            smax = std::max(smax, c);
        }
        if (a.prob >= 1e-15) beta2 = std::max(beta2, double(smax));
        for (std::size_t i : a.support) {
            pm[i] += a.prob;
            condexp[i] += a.prob * double(smax);
            for (std::size_t g = 0; g < groups_of[i].size(); ++g) hist[i][g][S[groups_of[i][g]]] += a.prob;
        }
        for (std::size_t i : a.support) in[i] = 0;
    }

    BetaConstants out;
    out.method = BetaMethod::Enumeration;
    out.beta2 = std::max(beta2, 1.0);
    out.beta1.assign(m, 1.0);
    out.beta1_condexp.assign(m, 0.0);
    out.beta1_refined.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        require(pm[i] > 0.0, "beta_by_enumeration: block " + std::to_string(i) + " has zero marginal");
        out.beta1_condexp[i] = condexp[i] / pm[i];
        if (groups_of[i].empty()) continue;
        double r = 0.0;
        for (std::size_t t = 1; t <= eta; ++t) {
            double best = 0.0;
            for (const auto& h : hist[i]) best = std::max(best, h[t]);
            r += double(t) * best / pm[i];
        }
        out.beta1_refined[i] = r;
        out.beta1[i] = std::min(out.beta1_condexp[i], r);
    }
    return out;
}

/// Closed-form β constants for τ-nice sampling: β₁ from the τ-nice formula, β₂ = min(η, τ).
inline BetaConstants beta_closed_form_tau_nice(std::size_t m, std::size_t eta, std::size_t tau) {
    BetaConstants out;
    out.method = BetaMethod::ClosedFormTauNice;
    double b1 = (m == 1) ? 1.0 : beta_tau_nice(m, eta, tau);
    out.beta1.assign(m, b1);
    out.beta2 = double(std::min(eta, tau));
    return out;
}

/// Generic fallback valid for any sampling: β₁,ᵢ = β₂ = min(η, τ_max).
inline BetaConstants beta_conservative(std::size_t m, std::size_t eta, std::size_t tau_max) {
    BetaConstants out;
    out.method = BetaMethod::Conservative;
    out.beta2 = double(std::min(eta, tau_max));
    out.beta1.assign(m, out.beta2);
    return out;
}

/// Checks 1 ≤ β₁,ᵢ ≤ β₂ ≤ min(η, τ_max) up to `tol`.
inline bool beta_invariants_hold(const BetaConstants& b, std::size_t eta, std::size_t tau_max, double tol = 1e-12) {
    const double cap = double(std::min(eta, tau_max));
    if (b.beta2 > cap + tol) return false;
    for (double v : b.beta1)
        if (v < 1.0 - tol || v > b.beta2 + tol) return false;
    return true;
}

}  // namespace blockfb
