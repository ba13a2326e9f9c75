#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "core.hpp"
#include "problems.hpp"

namespace blockfb {

struct RateBoundInputs {
    double dist_W_sq = 0.0;    ///< dist²_W(x⁰, S*)
    double F0_gap = 0.0;       ///< F(x⁰) − F*
    double p_min = 1.0;
    double delta = 1.0;
    double mu_gamma = 0.0;     ///< strong convexity of f in ‖·‖_Γ⁻¹
    double sigma_gamma = 0.0;  ///< strong convexity of g in ‖·‖_Γ⁻¹
    std::optional<double> c_eb;

    void validate() const {
        require(p_min > 0.0 && p_min <= 1.0, "rate bounds: p_min must lie in (0, 1]");
        require(delta > 0.0 && delta < 2.0, "rate bounds: delta must lie in (0, 2)");
        require(dist_W_sq >= 0.0 && F0_gap >= 0.0, "rate bounds: distance and gap must be nonnegative");
        require(mu_gamma >= 0.0 && sigma_gamma >= 0.0, "rate bounds: moduli must be nonnegative");
        require(mu_gamma <= delta + 1e-12, "rate bounds: mu_gamma cannot exceed delta");
    }
};

inline double stepsize_factor(double delta) { return std::max(1.0, 1.0 / (2.0 - delta)); }

/// [dist²_W/2 + (max{1, 1/(2−δ)}/p_min − 1)·(F(x⁰) − F*)]/n.
inline double sublinear_bound(const RateBoundInputs& in, std::size_t n) {
    in.validate();
    require(n >= 1, "sublinear_bound: n must be at least 1");
    return (in.dist_W_sq / 2.0 + (stepsize_factor(in.delta) / in.p_min - 1.0) * in.F0_gap) / double(n);
}

/// (p_min·dist²_W/2 + max{1, 1/(2−δ)}·(F(x⁰) − F*))/(1 + p_min·n).
inline double sublinear_bound_v2(const RateBoundInputs& in, std::size_t n) {
    in.validate();
    return (in.p_min * in.dist_W_sq / 2.0 + stepsize_factor(in.delta) * in.F0_gap) / (1.0 + in.p_min * double(n));
}

/// ρ = 1 − 2p_min(μ + σ)/(1 + μ + 2σ); needs μ + σ > 0 and δ ≤ 1.
inline double strong_convexity_rate(const RateBoundInputs& in) {
    in.validate();
    require(in.mu_gamma + in.sigma_gamma > 0.0, "strong_convexity_rate: needs mu + sigma > 0");
    require(in.delta <= 1.0, "strong_convexity_rate: needs delta <= 1");
    const double s = in.mu_gamma + in.sigma_gamma;
    return 1.0 - 2.0 * in.p_min * s / (1.0 + in.mu_gamma + 2.0 * in.sigma_gamma);
}

/// Initial constant of the strong-convexity rate: p_min(1 + σ)dist²_W/2 + F(x⁰) − F*.
inline double strong_convexity_constant(const RateBoundInputs& in) {
    in.validate();
    return in.p_min * (1.0 + in.sigma_gamma) * in.dist_W_sq / 2.0 + in.F0_gap;
}

/// ρ = 1 − p_min·min{1, (2−δ)/(2c)}, the objective rate under the error bound.
inline double error_bound_rate(const RateBoundInputs& in) {
    in.validate();
    require(in.c_eb.has_value() && *in.c_eb > 0.0, "error_bound_rate: a positive error-bound constant is required");
    return 1.0 - in.p_min * std::min(1.0, (2.0 - in.delta) / (2.0 * *in.c_eb));
}

/// Iterate rate √ρ for E‖xⁿ − x*‖_W.
inline double error_bound_iterate_rate(const RateBoundInputs& in) { return std::sqrt(error_bound_rate(in)); }

/// G(x, u) ≤ (1 + ‖A‖²/(αμ))·(D(u) − inf D).
inline double duality_gap_strongly_convex(double D_gap, double A_norm, double alpha, double mu) {
    require(alpha > 0.0 && mu > 0.0, "duality_gap_strongly_convex: moduli must be positive");
    require(D_gap >= 0.0 && A_norm >= 0.0, "duality_gap_strongly_convex: gap and norm must be nonnegative");
    return (1.0 + A_norm * A_norm / (alpha * mu)) * D_gap;
}

/// G(x, u) ≤ 2‖A‖θ/√μ·√(D(u) − inf D), valid while D(u) − inf D < ‖A‖²θ²/μ.
inline double duality_gap_lipschitz(double D_gap, double A_norm, double theta, double mu) {
    require(theta > 0.0 && mu > 0.0, "duality_gap_lipschitz: theta and mu must be positive");
    require(D_gap >= 0.0 && A_norm >= 0.0, "duality_gap_lipschitz: gap and norm must be nonnegative");
    if (!(D_gap < A_norm * A_norm * theta * theta / mu))
        throw validation_error("duality_gap_lipschitz: dual gap too large, the bound does not apply yet");
    return 2.0 * A_norm * theta / std::sqrt(mu) * std::sqrt(D_gap);
}

struct EbEstimate {
    double c_hat = 0.0;
    std::size_t used = 0;
    std::size_t skipped = 0;
    std::vector<double> ratios;
};

/**
 * Empirical lower bound on the error-bound constant: the largest ratio
 * dist_Γ⁻¹(x, x_ref) / ‖x − prox_{Γg}(x − Γ∇f(x))‖_Γ⁻¹ over the probes. Optimal probes are skipped.
 */
template <CompositeProblem P>
EbEstimate estimate_eb_constant(const P& problem, const std::vector<double>& x_ref,
                                const std::vector<std::vector<double>>& probes, const std::vector<double>& gamma) {
    const auto& part = problem.partition();
    require(x_ref.size() == part.N(), "estimate_eb_constant: reference solution has the wrong dimension");
    require(gamma.size() == part.m(), "estimate_eb_constant: one stepsize per block required");
    EbEstimate est;
    std::vector<double> g(part.N()), z(part.N());
    for (const auto& x : probes) {
        require(x.size() == part.N(), "estimate_eb_constant: probe has the wrong dimension");
        problem.smooth_gradient(x, g);
        double res = 0.0, dist = 0.0;
        for (std::size_t i = 0; i < part.m(); ++i) {
            std::span<double> zi(z.data() + part.offset(i), part.dim(i));
            for (std::size_t j = 0; j < zi.size(); ++j) zi[j] = x[part.offset(i) + j] - gamma[i] * g[part.offset(i) + j];
            problem.prox_block(i, zi, gamma[i]);
            for (std::size_t j = part.offset(i); j < part.offset(i + 1); ++j) {
                res += (x[j] - z[j]) * (x[j] - z[j]) / gamma[i];
                dist += (x[j] - x_ref[j]) * (x[j] - x_ref[j]) / gamma[i];
            }
        }
        if (res <= 0.0) {
            ++est.skipped;
            continue;
        }
        double r = std::sqrt(dist / res);
        est.ratios.push_back(r);
        est.c_hat = std::max(est.c_hat, r);
        ++est.used;
    }
    return est;
}

}  // namespace blockfb
