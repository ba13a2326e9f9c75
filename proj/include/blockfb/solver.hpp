#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "core.hpp"
#include "problems.hpp"
#include "sampling.hpp"
#include "smoothness.hpp"

namespace blockfb {

struct StopRule {
    double tolerance = 1e-8;            ///< on the full forward-backward residual ‖Δ‖_Γ⁻¹; 0 disables
    std::optional<double> f_target;     ///< stop once F(xⁿ) ≤ f_target
};

struct SolverConfig {
    double delta = 1.0;
    SmoothnessCertificate certificate;
    SamplingScheme scheme = SamplingScheme::fully_parallel(1);
    std::size_t max_iters = 1000;
    StopRule stop;
    bool monotone = false;
    double monotone_slack = 0.0;        ///< relative: accept iff F(x̃) ≤ F(x) + slack·(1 + |F(x)|)
    std::uint64_t seed = 0;
    std::size_t record_every = 0;       ///< telemetry stride in iterations; 0 means max_iters
    std::vector<std::size_t> record_at; ///< explicit telemetry iterations, overrides record_every
    bool bitrepro = true;
    std::size_t refresh_every = 10000;  ///< block updates between full cache recomputations
    double gamma_max = 1e6;

    void validate(std::size_t m) const {
        require(delta > 0.0 && delta < 2.0, "solver: delta must lie in (0, 2)");
        require(certificate.nu.size() == m, "solver: certificate has " + std::to_string(certificate.nu.size()) +
                                                " entries for " + std::to_string(m) + " blocks");
        require(scheme.m() == m, "solver: sampling is defined on " + std::to_string(scheme.m()) + " blocks, problem has " +
                                     std::to_string(m));
        require(monotone_slack >= 0.0, "solver: monotone slack must be nonnegative");
        require(refresh_every >= 1, "solver: refresh_every must be positive");
        require(gamma_max > 0.0, "solver: gamma_max must be positive");
    }
};

struct TelemetryRow {
    std::size_t iter = 0;
    double epoch = 0.0;
    double F = 0.0;
    double residual_norm = 0.0;
    std::size_t rejections = 0;
    double wall_ms = 0.0;
};

struct RunReport {
    std::vector<TelemetryRow> rows;
    std::vector<double> x;
    std::vector<double> gamma;
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    std::size_t rejections = 0;
    bool converged = false;
    std::string stop_reason;
    std::vector<std::string> warnings;
};

/// Telemetry iterations ⌈m·k/τ⌉ for k = 0..epochs, with τ the expected batch size.
inline std::vector<std::size_t> epoch_schedule(std::size_t m, double tau, std::size_t epochs) {
    std::vector<std::size_t> s;
    for (std::size_t k = 0; k <= epochs; ++k) s.push_back(std::size_t(std::ceil(double(m) * double(k) / tau - 1e-9)));
    return s;
}

/**
 * Parallel random block-coordinate forward-backward iteration on one problem instance.
 *
 * Every selected block's partial gradient is read at the start-of-iteration point before any block is written.
 */
template <CompositeProblem P>
class Solver {
public:
    Solver(const Solver&) = delete;
    Solver& operator=(const Solver&) = delete;

    Solver(const P& problem, SolverConfig cfg, std::optional<std::vector<double>> x0 = std::nullopt)
        : problem_(&problem), cfg_(std::move(cfg)), rng_(cfg_.seed), sampler_(cfg_.scheme) {
        const auto& part = problem.partition();
        cfg_.validate(part.m());
        sampler_ = Sampler(cfg_.scheme);
        gamma_ = stepsizes(cfg_.certificate, cfg_.delta, cfg_.gamma_max);
        x_ = x0 ? std::move(*x0) : std::vector<double>(part.N(), 0.0);
        require(x_.size() == part.N(), "solver: initial point has the wrong dimension");
        project_initial_point();
        cache_.emplace(problem.init_cache(x_));
        F_ = problem.cached_smooth_value(*cache_, x_) + problem.g_value(x_);
        require(std::isfinite(F_), "solver: objective is not finite at the initial point");
        xbar_.resize(part.N());
    }

    const std::vector<double>& x() const noexcept { return x_; }
    const std::vector<double>& gamma() const noexcept { return gamma_; }
    std::size_t iteration() const noexcept { return n_; }
    std::size_t rejections() const noexcept { return rejections_; }
    double F() const noexcept { return F_; }
    const std::vector<std::size_t>& last_selection() const noexcept { return selected_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    const SolverConfig& config() const noexcept { return cfg_; }
    /// F evaluated from scratch at the current iterate.
    double fresh_F() const { return problem_->smooth_value(x_) + problem_->g_value(x_); }

    /// One iteration; returns false when a monotone candidate was rejected.
    bool step() {
        sampler_.draw(rng_, selected_);
        return apply_selection();
    }

    /// One iteration with a caller-chosen selection (sorted, distinct block indices).
    bool step_with(std::span<const std::size_t> blocks) {
        selected_.assign(blocks.begin(), blocks.end());
        return apply_selection();
    }

    /// ‖x̄ − x‖_Γ⁻¹ for the full forward-backward candidate x̄ computed over all blocks.
    double residual_norm() {
        const auto& part = problem_->partition();
        double s = 0.0;
        for (std::size_t i = 0; i < part.m(); ++i) {
            auto d = candidate_block(i);
            double b = 0.0;
            for (std::size_t j = 0; j < d.size(); ++j) {
                double r = d[j] - x_[part.offset(i) + j];
                b += r * r;
            }
            s += b / gamma_[i];
        }
        return std::sqrt(s);
    }

    RunReport run() {
        using clock = std::chrono::steady_clock;
        const auto t0 = clock::now();
        const auto& part = problem_->partition();
        RunReport rep;
        rep.seed = cfg_.seed;
        rep.gamma = gamma_;
        rep.warnings = warnings_;

        std::vector<std::size_t> schedule = cfg_.record_at;
        if (schedule.empty()) {
            std::size_t stride = cfg_.record_every ? cfg_.record_every : std::max<std::size_t>(cfg_.max_iters, 1);
            for (std::size_t k = 0; k <= cfg_.max_iters; k += stride) schedule.push_back(k);
            if (schedule.back() != cfg_.max_iters) schedule.push_back(cfg_.max_iters);
        }
        std::sort(schedule.begin(), schedule.end());
        schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());
        const std::size_t last = std::min(cfg_.max_iters, schedule.back());

        auto record = [&]() {
            TelemetryRow r;
            r.iter = n_;
            r.epoch = double(n_) * cfg_.scheme.expected_batch() / double(part.m());
            r.F = F_;
            r.residual_norm = cfg_.stop.tolerance > 0.0 ? residual_norm() : std::nan("");
            r.rejections = rejections_;
            r.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            rep.rows.push_back(r);
            return r;
        };

        std::size_t next = 0;
        while (true) {
            if (next < schedule.size() && schedule[next] == n_) {
                auto r = record();
                ++next;
                if (cfg_.stop.tolerance > 0.0 && r.residual_norm <= cfg_.stop.tolerance) {
                    rep.converged = true;
                    rep.stop_reason = "residual";
                    break;
                }
            }
            if (cfg_.stop.f_target && F_ <= *cfg_.stop.f_target) {
                if (rep.rows.empty() || rep.rows.back().iter != n_) record();
                rep.converged = true;
                rep.stop_reason = "f_target";
                break;
            }
            if (n_ >= last) {
                rep.stop_reason = "max_iters";
                break;
            }
            step();
        }
        rep.x = x_;
        rep.iterations = n_;
        rep.rejections = rejections_;
        return rep;
    }

private:
    void project_initial_point() {
        const auto& part = problem_->partition();
        bool moved = false;
        for (std::size_t i = 0; i < part.m(); ++i) {
            std::span<double> xi(x_.data() + part.offset(i), part.dim(i));
            if (std::isfinite(problem_->h_block(i, xi))) continue;
            problem_->prox_block(i, xi, 0.0);
            moved = true;
        }
        if (moved) warnings_.push_back("initial point outside dom g; projected onto the domain");
    }

    /// prox_{γᵢhᵢ}(xᵢ − γᵢ∇ᵢf(x)) written into xbar_ block i.
    std::span<double> candidate_block(std::size_t i) {
        const auto& part = problem_->partition();
        std::span<double> out(xbar_.data() + part.offset(i), part.dim(i));
        problem_->partial_gradient(*cache_, x_, i, out);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = x_[part.offset(i) + j] - gamma_[i] * out[j];
        problem_->prox_block(i, out, gamma_[i]);
        return out;
    }

    bool apply_selection() {
        const auto& part = problem_->partition();
        ++n_;
        delta_.clear();
        double dg = 0.0;
        for (std::size_t i : selected_) candidate_block(i);
        for (std::size_t i : selected_) {
            std::span<const double> xi(x_.data() + part.offset(i), part.dim(i));
            std::span<const double> ci(xbar_.data() + part.offset(i), part.dim(i));
            for (std::size_t j = 0; j < xi.size(); ++j) delta_.push_back(ci[j] - xi[j]);
            if constexpr (requires { problem_->h_change(i, xi, ci); })
                dg += problem_->h_change(i, xi, ci);
            else
                dg += problem_->h_block(i, ci) - problem_->h_block(i, xi);
        }
        if (!std::isfinite(dg))
            throw runtime_error("solver: prox produced a point outside dom h at iteration " + std::to_string(n_));
        const double df = problem_->stage(*cache_, x_, selected_, delta_);
        const double dF = df + dg;
        if (cfg_.monotone && dF > cfg_.monotone_slack * (1.0 + std::abs(F_))) {
            problem_->discard(*cache_);
            ++rejections_;
            return false;
        }
        problem_->commit(*cache_);
        std::size_t pos = 0;
        for (std::size_t i : selected_)
            for (std::size_t j = part.offset(i); j < part.offset(i + 1); ++j) x_[j] += delta_[pos++];
        F_ += dF;
        updates_ += selected_.size();
        if (updates_ >= cfg_.refresh_every) {
            updates_ = 0;
            problem_->refresh(*cache_, x_);
            F_ = problem_->cached_smooth_value(*cache_, x_) + problem_->g_value(x_);
        }
        return true;
    }

    const P* problem_;
    SolverConfig cfg_;
    Rng rng_;
    Sampler sampler_;
    std::vector<double> gamma_;
    std::vector<double> x_;
    std::vector<double> xbar_;
    std::vector<double> delta_;
    std::vector<std::size_t> selected_;
    std::optional<typename P::Cache> cache_;
    double F_ = 0.0;
    std::size_t n_ = 0;
    std::size_t rejections_ = 0;
    std::size_t updates_ = 0;
    std::vector<std::string> warnings_;
};

template <CompositeProblem P>
RunReport run(const P& problem, const SolverConfig& cfg, std::optional<std::vector<double>> x0 = std::nullopt) {
    Solver<P> s(problem, cfg, std::move(x0));
    return s.run();
}

/// Worker count: BLOCKFB_THREADS when set, else the hardware concurrency.
inline std::size_t thread_budget() {
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BLOCKFB_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return std::size_t(v);
    }
    return hw;
}

/// Runs fn(0..count-1) on up to `threads` workers; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t k = 0; k < count; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            while (!failed) {
                std::size_t k = next++;
                if (k >= count) return;
                try {
                    fn(k);
                } catch (...) {
                    if (!failed.exchange(true)) err = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

struct AveragedReport {
    std::vector<std::size_t> iter;
    std::vector<double> epoch;
    std::vector<double> mean_F;
    std::vector<double> stderr_F;
    std::vector<RunReport> runs;
};

/**
 * Runs one solve per seed and averages F over seeds at each telemetry point.
 * Runs that stop early are extended with their last recorded value.
 */
template <CompositeProblem P>
AveragedReport run_ensemble(const P& problem, const SolverConfig& cfg, const std::vector<std::uint64_t>& seeds,
                            std::optional<std::vector<double>> x0 = std::nullopt, std::size_t threads = 0) {
    require(!seeds.empty(), "run_ensemble: at least one seed required");
    AveragedReport out;
    out.runs.resize(seeds.size());
    parallel_for(seeds.size(), threads ? threads : thread_budget(), [&](std::size_t k) {
        SolverConfig c = cfg;
        c.seed = seeds[k];
        out.runs[k] = run(problem, c, x0);
    });
    std::size_t len = 0;
    const RunReport* longest = nullptr;
    for (const auto& r : out.runs)
        if (r.rows.size() > len) {
            len = r.rows.size();
            longest = &r;
        }
    const double S = double(seeds.size());
    for (std::size_t t = 0; t < len; ++t) {
        out.iter.push_back(longest->rows[t].iter);
        out.epoch.push_back(longest->rows[t].epoch);
        auto at = [t](const RunReport& r) { return r.rows[std::min(t, r.rows.size() - 1)].F; };
        double s = 0.0;
        for (const auto& r : out.runs) s += at(r);
        const double mean = s / S;
        double ss = 0.0;
        for (const auto& r : out.runs) ss += (at(r) - mean) * (at(r) - mean);
        const double var = seeds.size() > 1 ? ss / (S - 1.0) : 0.0;
        out.mean_F.push_back(mean);
        out.stderr_F.push_back(std::sqrt(var / S));
    }
    return out;
}

struct ReferenceSolution {
    std::vector<double> x;
    double F_star = 0.0;
    double residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/**
 * High-accuracy deterministic forward-backward solve: all blocks every iteration,
 * δ = 1 with the S3 certificate, until ‖Δ‖_Γ⁻¹ ≤ tol or max_iters.
 */
template <CompositeProblem P>
ReferenceSolution reference_solve(const P& problem, double tol = 1e-12, std::size_t max_iters = 100000,
                                  std::optional<std::vector<double>> x0 = std::nullopt) {
    SolverConfig cfg;
    cfg.certificate = nu_s3(problem.structure());
    cfg.scheme = SamplingScheme::fully_parallel(problem.partition().m());
    cfg.delta = 1.0;
    cfg.max_iters = max_iters;
    cfg.record_every = 50;
    cfg.stop.tolerance = tol;
    Solver<P> s(problem, cfg, std::move(x0));
    auto rep = s.run();
    ReferenceSolution ref;
    ref.x = rep.x;
    ref.F_star = s.fresh_F();
    ref.residual = rep.rows.back().residual_norm;
    ref.iterations = rep.iterations;
    ref.converged = rep.converged;
    return ref;
}

}  // namespace blockfb
