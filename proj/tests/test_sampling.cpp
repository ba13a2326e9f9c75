#include <gtest/gtest.h>

#include <blockfb/sampling.hpp>

#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

using namespace blockfb;

namespace {

using Sets = std::vector<std::vector<std::size_t>>;

/// Probability of a mask (bit i = block i) under the scheme, computed from its definition.
double mask_prob(const SamplingScheme& s, std::uint32_t mask) {
    const std::size_t m = s.m();
    switch (s.kind()) {
        case SamplingKind::FullyParallel: return mask == (1u << m) - 1 ? 1.0 : 0.0;
        case SamplingKind::TauNice: {
            if (std::size_t(std::popcount(mask)) != s.tau()) return 0.0;
            double c = 1.0;
            for (std::size_t j = 1; j <= s.tau(); ++j) c = c * double(m - s.tau() + j) / double(j);
            return 1.0 / c;
        }
        default: {
            double p = 0.0;
            for (const auto& a : s.atoms()) {
                std::uint32_t am = 0;
                for (auto i : a.support) am |= 1u << i;
                if (am == mask) p += a.prob;
            }
            return p;
        }
    }
}

/// E[max_k Σ_{j∈I_k} εⱼ | εᵢ = 1] by summing over all 2^m masks.
std::vector<double> condexp_oracle(const SamplingScheme& s, const Sets& sets) {
    const std::size_t m = s.m();
    std::vector<double> num(m, 0.0), den(m, 0.0);
    for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
        const double p = mask_prob(s, mask);
        if (p == 0.0) continue;
        int best = 0;
        for (const auto& I : sets) {
            int c = 0;
            for (auto j : I) c += (mask >> j) & 1u;
            best = std::max(best, c);
        }
        for (std::size_t i = 0; i < m; ++i)
            if ((mask >> i) & 1u) {
                num[i] += p * best;
                den[i] += p;
            }
    }
    for (std::size_t i = 0; i < m; ++i) num[i] /= den[i];
    return num;
}

Sets random_equal_sets(Rng& rng, std::size_t m, std::size_t eta, std::size_t count) {
    Sets sets;
    std::vector<std::size_t> perm(m);
    for (std::size_t k = 0; k < count; ++k) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t j = 0; j < eta; ++j) std::swap(perm[j], perm[j + rng.below(m - j)]);
        std::vector<std::size_t> I(perm.begin(), perm.begin() + std::ptrdiff_t(eta));
        std::sort(I.begin(), I.end());
        sets.push_back(I);
    }
    return sets;
}

void expect_marginals_match(const SamplingScheme& s, std::uint64_t seed, std::size_t draws, double se_mult) {
    Rng rng(seed);
    Sampler sampler(s);
    std::vector<std::size_t> sel;
    std::vector<double> count(s.m(), 0.0);
    for (std::size_t d = 0; d < draws; ++d) {
        sampler.draw(rng, sel);
        ASSERT_FALSE(sel.empty());
        ASSERT_TRUE(std::is_sorted(sel.begin(), sel.end()));
        ASSERT_EQ(std::set<std::size_t>(sel.begin(), sel.end()).size(), sel.size());
        for (auto i : sel) count[i] += 1.0;
    }
    const auto& p = s.marginals();
    for (std::size_t i = 0; i < s.m(); ++i) {
        const double phat = count[i] / double(draws);
        const double se = std::sqrt(std::max(p[i] * (1.0 - p[i]), 1e-300) / double(draws));
        EXPECT_LE(std::abs(phat - p[i]), se_mult * se + 1e-15) << s.describe() << " block " << i;
    }
}

}  // namespace

TEST(Schemes, ValidationRejectsBadInput) {
    EXPECT_THROW(SamplingScheme::tau_nice(5, 0), Error);
    EXPECT_THROW(SamplingScheme::tau_nice(5, 6), Error);
    EXPECT_THROW(SamplingScheme::serial({0.5, 0.4}), Error);
    EXPECT_THROW(SamplingScheme::serial({1.0, 0.0}), Error);
    EXPECT_THROW(SamplingScheme::explicit_atoms(3, {{{0}, 0.5}, {{}, 0.5}}), Error);
    EXPECT_THROW(SamplingScheme::explicit_atoms(3, {{{0, 1}, 1.0}}), Error);  // block 2 never selected
    EXPECT_THROW(SamplingScheme::explicit_atoms(3, {{{0, 1, 2}, 0.9}}), Error);
}

TEST(Schemes, TauMax) {
    EXPECT_EQ(SamplingScheme::tau_nice(7, 3).tau_max(), 3u);
    EXPECT_EQ(SamplingScheme::fully_parallel(4).tau_max(), 4u);
    EXPECT_EQ(SamplingScheme::uniform_serial(4).tau_max(), 1u);
    EXPECT_EQ(SamplingScheme::explicit_atoms(3, {{{0}, 0.25}, {{1, 2}, 0.75}}).tau_max(), 2u);
}

TEST(Marginals, FullyParallel) {
    EXPECT_EQ(SamplingScheme::fully_parallel(3).marginals(), (std::vector<double>{1, 1, 1}));
}

TEST(Marginals, TauNice) {
    for (double p : marginals(SamplingScheme::tau_nice(5, 2))) EXPECT_DOUBLE_EQ(p, 0.4);
}

TEST(Marginals, ExplicitAtoms) {
    auto s = SamplingScheme::explicit_atoms(3, {{{0}, 0.25}, {{1, 2}, 0.75}});
    EXPECT_DOUBLE_EQ(s.marginals()[0], 0.25);
    EXPECT_DOUBLE_EQ(s.marginals()[1], 0.75);
    EXPECT_DOUBLE_EQ(s.marginals()[2], 0.75);
}

TEST(Draw, FullyParallelAlwaysAll) {
    Rng rng(1);
    auto s = SamplingScheme::fully_parallel(6);
    for (int t = 0; t < 100; ++t) EXPECT_EQ(draw(s, rng), std::vector<bool>(6, true));
}

TEST(Draw, TauEqualsMIsAll) {
    Rng rng(2);
    auto s = SamplingScheme::tau_nice(5, 5);
    for (int t = 0; t < 100; ++t) EXPECT_EQ(draw(s, rng), std::vector<bool>(5, true));
}

TEST(Draw, TauNiceTwoOfFiveWithinThreeStandardErrors) {
    expect_marginals_match(SamplingScheme::tau_nice(5, 2), 2024, 100000, 3.0);
}

TEST(Draw, EveryKindMatchesMarginalsWithinFourStandardErrors) {
    expect_marginals_match(SamplingScheme::tau_nice(9, 4), 1, 100000, 4.0);
    expect_marginals_match(SamplingScheme::tau_nice(50, 10), 2, 100000, 4.0);
    expect_marginals_match(SamplingScheme::serial({0.1, 0.2, 0.3, 0.4}), 3, 100000, 4.0);
    expect_marginals_match(SamplingScheme::uniform_serial(7), 4, 100000, 4.0);
    expect_marginals_match(SamplingScheme::fully_parallel(3), 5, 1000, 4.0);
    expect_marginals_match(SamplingScheme::explicit_atoms(4, {{{0}, 0.1}, {{1, 2}, 0.6}, {{0, 2, 3}, 0.3}}), 6, 100000, 4.0);
}

TEST(Draw, TauNiceSubsetsAreUniform) {
    auto s = SamplingScheme::tau_nice(5, 2);
    Rng rng(77);
    Sampler sampler(s);
    std::vector<std::size_t> sel;
    std::map<std::pair<std::size_t, std::size_t>, double> freq;
    const int draws = 100000;
    for (int d = 0; d < draws; ++d) {
        sampler.draw(rng, sel);
        ASSERT_EQ(sel.size(), 2u);
        freq[{sel[0], sel[1]}] += 1.0;
    }
    ASSERT_EQ(freq.size(), 10u);
    const double p = 0.1, se = std::sqrt(p * (1 - p) / draws);
    for (const auto& [k, c] : freq) EXPECT_LE(std::abs(c / draws - p), 4.0 * se);
}

TEST(Draw, DeterministicPerSeedAndStreamsDiffer) {
    auto s = SamplingScheme::tau_nice(20, 5);
    Rng a(9), b(9);
    Sampler sa(s), sb(s);
    std::vector<std::size_t> x, y;
    for (int t = 0; t < 100; ++t) {
        sa.draw(a, x);
        sb.draw(b, y);
        ASSERT_EQ(x, y);
    }
    Rng base(9);
    Rng s1 = base.split(1), s2 = base.split(2);
    int same = 0;
    for (int t = 0; t < 100; ++t) same += (s1() == s2());
    EXPECT_LT(same, 3);
}

TEST(BetaTauNice, ClosedFormExamples) {
    EXPECT_DOUBLE_EQ(beta_tau_nice(10, 4, 1), 1.0);
    EXPECT_DOUBLE_EQ(beta_tau_nice(10, 1, 7), 1.0);
    EXPECT_DOUBLE_EQ(beta_tau_nice(5, 3, 2), 1.5);
    EXPECT_THROW(beta_tau_nice(1, 1, 1), Error);
    EXPECT_DOUBLE_EQ(beta_closed_form_tau_nice(1, 1, 1).beta1[0], 1.0);
}

TEST(BetaDoublyUniform, Examples) {
    for (std::size_t tau = 1; tau <= 6; ++tau)
        EXPECT_NEAR(beta_doubly_uniform(6, 3, double(tau), double(tau * tau)), beta_tau_nice(6, 3, tau), 1e-15);
    EXPECT_DOUBLE_EQ(beta_doubly_uniform(8, 5, 1.0, 1.0), 1.0);
    EXPECT_NEAR(beta_doubly_uniform(4, 2, 2.5, 8.5), 1.8, 1e-15);
    EXPECT_THROW(beta_doubly_uniform(4, 2, 0.0, 1.0), Error);
    EXPECT_THROW(beta_doubly_uniform(4, 2, 2.0, 1.0), Error);
}

TEST(BetaDoublyUniform, MixtureMatchesEnumeration) {
    // Σεᵢ ∈ {1, 4} with probability 1/2 each on m = 4: every singleton w.p. 1/8, the full set w.p. 1/2.
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < 4; ++i) atoms.push_back({{i}, 0.125});
    atoms.push_back({{0, 1, 2, 3}, 0.5});
    auto s = SamplingScheme::explicit_atoms(4, atoms);
    auto [m1, m2] = batch_moments(s);
    EXPECT_NEAR(m1, 2.5, 1e-15);
    EXPECT_NEAR(m2, 8.5, 1e-15);
    Sets pairs;
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) pairs.push_back({a, b});
    auto b = beta_by_enumeration(s, pairs);
    for (double v : b.beta1_condexp) EXPECT_NEAR(v, 1.8, 1e-12);
}

TEST(BetaEnumeration, FullyParallelGivesEta) {
    Sets sets{{0, 1, 2}, {2, 3}, {4}};
    auto b = beta_by_enumeration(SamplingScheme::fully_parallel(5), sets);
    for (double v : b.beta1_condexp) EXPECT_DOUBLE_EQ(v, 3.0);
    EXPECT_DOUBLE_EQ(b.beta2, 3.0);
    // the refinement only looks at groups containing the block
    EXPECT_EQ(b.beta1, (std::vector<double>{3.0, 3.0, 3.0, 2.0, 1.0}));
}

TEST(BetaEnumeration, FullySeparableGivesOne) {
    Sets sets{{0}, {1}, {2}, {3}};
    for (std::size_t tau = 1; tau <= 4; ++tau) {
        auto b = beta_by_enumeration(SamplingScheme::tau_nice(4, tau), sets);
        for (double v : b.beta1) EXPECT_DOUBLE_EQ(v, 1.0);
        EXPECT_DOUBLE_EQ(b.beta2, 1.0);
    }
}

TEST(BetaEnumeration, FiveChooseTwoEtaThree) {
    Sets sets{{0, 1, 2}, {2, 3, 4}, {0, 3, 4}, {1, 2, 4}};
    auto b = beta_by_enumeration(SamplingScheme::tau_nice(5, 2), sets);
    for (double v : b.beta1) EXPECT_NEAR(v, 1.5, 1e-12);
    EXPECT_DOUBLE_EQ(b.beta2, 2.0);
}

TEST(BetaEnumeration, ConditionalExpectationMatchesMaskOracle) {
    Rng rng(5);
    for (std::size_t m = 2; m <= 8; ++m)
        for (std::size_t tau = 1; tau <= m; ++tau)
            for (int rep = 0; rep < 5; ++rep) {
                Sets sets;
                const std::size_t p = 1 + rng.below(4);
                for (std::size_t k = 0; k < p; ++k) {
                    auto I = random_equal_sets(rng, m, 1 + rng.below(m), 1).front();
                    sets.push_back(I);
                }
                auto s = SamplingScheme::tau_nice(m, tau);
                auto b = beta_by_enumeration(s, sets);
                auto oracle = condexp_oracle(s, sets);
                for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(b.beta1_condexp[i], oracle[i], 1e-12);
                EXPECT_TRUE(beta_invariants_hold(b, max_cardinality(sets), tau));
                std::vector<bool> cov(m, false);
                for (const auto& I : sets)
                    for (auto i : I) cov[i] = true;
                for (std::size_t i = 0; i < m; ++i) {
                    if (!cov[i]) continue;
                    EXPECT_LE(b.beta1[i], b.beta1_condexp[i] + 1e-12);
                }
            }
}

TEST(BetaEnumeration, ExplicitAtomsMatchMaskOracle) {
    Rng rng(6);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t m = 3 + rng.below(4);
        std::vector<Atom> atoms;
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            Atom a{{i}, 0.0};
            for (std::size_t j = 0; j < m; ++j)
                if (j != i && rng.uniform() < 0.4) a.support.push_back(j);
            std::sort(a.support.begin(), a.support.end());
            a.prob = rng.uniform(0.1, 1.0);
            total += a.prob;
            atoms.push_back(a);
        }
        for (auto& a : atoms) a.prob /= total;
        double fix = 1.0;
        for (std::size_t k = 0; k + 1 < atoms.size(); ++k) fix -= atoms[k].prob;
        atoms.back().prob = fix;
        auto s = SamplingScheme::explicit_atoms(m, atoms);
        auto sets = random_equal_sets(rng, m, 2, 3);
        auto b = beta_by_enumeration(s, sets);
        auto oracle = condexp_oracle(s, sets);
        auto cov = std::vector<bool>(m, false);
        for (const auto& I : sets)
            for (auto i : I) cov[i] = true;
        for (std::size_t i = 0; i < m; ++i) {
            if (!cov[i]) continue;
            EXPECT_NEAR(b.beta1_condexp[i], oracle[i], 1e-12);
        }
        EXPECT_TRUE(beta_invariants_hold(b, 2, s.tau_max()));
    }
}

TEST(BetaEnumeration, EqualCardinalityMatchesClosedFormAndIsUniform) {
    Rng rng(8);
    for (std::size_t m = 2; m <= 8; ++m)
        for (std::size_t tau = 1; tau <= m; ++tau) {
            const std::size_t eta = 1 + rng.below(m);
            auto sets = random_equal_sets(rng, m, eta, 3);
            for (std::size_t i = 0; i < m; ++i) sets.push_back({});
            // cover every block with an eta-sized set so that the structure's eta is exact everywhere
            for (std::size_t i = 0; i < m; ++i) {
                auto I = random_equal_sets(rng, m, eta, 1).front();
                if (std::find(I.begin(), I.end(), i) == I.end()) I.back() = i;
                std::sort(I.begin(), I.end());
                I.erase(std::unique(I.begin(), I.end()), I.end());
                if (I.size() == eta) sets.push_back(I);
            }
            std::erase_if(sets, [](const auto& I) { return I.empty(); });
            auto b = beta_by_enumeration(SamplingScheme::tau_nice(m, tau), sets);
            const double cf = m >= 2 ? beta_tau_nice(m, eta, tau) : 1.0;
            auto cov = std::vector<bool>(m, false);
            for (const auto& I : sets)
                for (auto i : I) cov[i] = true;
            for (std::size_t i = 0; i < m; ++i) {
                if (!cov[i]) continue;
                EXPECT_NEAR(b.beta1[i], cf, 1e-12) << "m=" << m << " tau=" << tau << " eta=" << eta;
            }
        }
}

TEST(BetaEnumeration, UncoveredBlocksGetOne) {
    auto b = beta_by_enumeration(SamplingScheme::tau_nice(4, 3), Sets{{0, 1}});
    EXPECT_DOUBLE_EQ(b.beta1[2], 1.0);
    EXPECT_DOUBLE_EQ(b.beta1[3], 1.0);
}

TEST(BetaEnumeration, RefinementCanExceedConditionalExpectation) {
    // Block 0 in {0,1} and {0,1,2}: the per-size maximum mixes two distributions.
    auto b = beta_by_enumeration(SamplingScheme::tau_nice(5, 2), Sets{{0, 1}, {0, 1, 2}});
    EXPECT_NEAR(b.beta1_condexp[0], 1.5, 1e-12);
    EXPECT_NEAR(b.beta1_refined[0], 1.75, 1e-12);
    EXPECT_NEAR(b.beta1[0], 1.5, 1e-12);
}

TEST(BetaEnumeration, TooLargeSupportThrows) {
    EXPECT_FALSE(is_enumerable(SamplingScheme::tau_nice(1000, 50)));
    EXPECT_THROW(beta_by_enumeration(SamplingScheme::tau_nice(1000, 50), Sets{{0, 1}}), Error);
}

TEST(BetaEnumeration, NullAtomsIgnoredForBeta2) {
    auto s = SamplingScheme::explicit_atoms(3, {{{0}, 0.5}, {{1}, 0.5 - 1e-17}, {{2}, 5e-18}, {{0, 1, 2}, 5e-18}});
    auto b = beta_by_enumeration(s, Sets{{0, 1, 2}});
    EXPECT_DOUBLE_EQ(b.beta2, 1.0);
}

TEST(BetaConservative, IsMinOfEtaAndTauMax) {
    auto b = beta_conservative(10, 3, 7);
    EXPECT_DOUBLE_EQ(b.beta2, 3.0);
    for (double v : b.beta1) EXPECT_DOUBLE_EQ(v, 3.0);
    EXPECT_TRUE(beta_invariants_hold(b, 3, 7));
    EXPECT_DOUBLE_EQ(beta_conservative(10, 8, 2).beta2, 2.0);
}

TEST(BetaInvariants, HoldForClosedForms) {
    for (std::size_t m = 2; m <= 30; ++m)
        for (std::size_t eta = 1; eta <= m; eta += 3)
            for (std::size_t tau = 1; tau <= m; tau += 2)
                EXPECT_TRUE(beta_invariants_hold(beta_closed_form_tau_nice(m, eta, tau), eta, tau));
}
