// Command-line front end: instance generation, single solves, experiment grids,
// reference solves and beta/ESO verification.

#include <CLI11.hpp>
#include <json.hpp>

#include <blockfb/blockfb.hpp>
#include <blockfb/io.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <algorithm>
#include <initializer_list>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace blockfb;

namespace {

using AnyProblem = std::variant<LassoProblem, MinNormDualProblem, RidgeDualProblem, SvmDualProblem>;

struct LoadedProblem {
    std::optional<AnyProblem> problem;
    std::string kind;
    json info = json::object();
    std::uint64_t input_hash = 0;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> max_iters;
};

struct LoadedConfig {
    json cfg;
    fs::path base;
    std::string text;
};

const std::vector<std::string> kTopLevelKeys = {"problem", "sampling", "certificate", "delta", "monotone", "monotone_slack",
                                                "seed", "max_iters", "epochs", "record_every", "tolerance", "f_target",
                                                "refresh_every", "x0", "out", "grid", "reference", "F_star",
                                                "structure"};

void absolutize(json& j, const fs::path& base, std::initializer_list<const char*> keys) {
    for (const char* k : keys)
        if (j.contains(k) && j.at(k).is_string()) {
            fs::path p = j.at(k).get<std::string>();
            if (p.is_relative()) j[k] = fs::absolute(base / p).lexically_normal().string();
        }
}

/// Parses the config, rejects unknown keys, resolves relative paths and folds in flag overrides so
/// that the echoed config reproduces the run on its own.
LoadedConfig load_config(const std::string& path, const Overrides& ov = {}) {
    LoadedConfig c;
    c.text = io::read_file(path);
    try {
        c.cfg = json::parse(c.text);
    } catch (const json::parse_error& e) {
        throw validation_error("config " + path + ": " + e.what());
    }
    if (!c.cfg.is_object()) throw validation_error("config " + path + ": top level must be an object");
    for (const auto& [k, v] : c.cfg.items())
        if (std::find(kTopLevelKeys.begin(), kTopLevelKeys.end(), k) == kTopLevelKeys.end())
            throw validation_error("config " + path + ": unknown field '" + k + "'");
    if (c.cfg.contains("max_iters") && c.cfg.contains("epochs"))
        throw validation_error("config " + path + ": give either 'max_iters' or 'epochs', not both");
    c.base = fs::path(path).parent_path();
    if (c.cfg.contains("problem")) absolutize(c.cfg["problem"], c.base, {"A", "b", "K", "X", "y"});
    absolutize(c.cfg, c.base, {"x0"});
    if (ov.seed) {
        c.cfg["seed"] = *ov.seed;
        if (c.cfg.contains("grid") && c.cfg["grid"].contains("seeds")) {
            c.cfg["grid"]["seed_count"] = c.cfg["grid"]["seeds"].size();
            c.cfg["grid"].erase("seeds");
        }
    }
    if (ov.out) c.cfg["out"] = *ov.out;
    if (ov.max_iters) {
        c.cfg["max_iters"] = *ov.max_iters;
        c.cfg.erase("epochs");
    }
    return c;
}

fs::path resolve(const fs::path& base, const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw validation_error(std::string("problem: missing path field '") + key + "'");
    fs::path p = j.at(key).get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw validation_error("problem: file not found: " + p.string());
    return p;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw validation_error(std::string("config: field '") + key + "' has the wrong type");
    }
}

LoadedProblem load_problem(const json& pj, const fs::path& base) {
    if (!pj.is_object() || !pj.contains("kind")) throw validation_error("config: 'problem' object with a 'kind' field required");
    LoadedProblem out;
    out.kind = pj.at("kind").get<std::string>();
    auto hash_file = [&](const fs::path& p) { out.input_hash = io::fnv1a(io::read_file(p), out.input_hash ^ 0x9e37); };

    if (out.kind == "lasso") {
        SparseCol A;
        Eigen::VectorXd b;
        if (pj.contains("generate")) {
            const auto& g = pj.at("generate");
            LassoInstanceSpec spec;
            spec.p = get_or<std::size_t>(g, "p", spec.p);
            spec.m = get_or<std::size_t>(g, "m", spec.m);
            spec.nnz_per_row = get_or<std::size_t>(g, "nnz_per_row", spec.nnz_per_row);
            spec.xbar_nnz = get_or<std::size_t>(g, "xbar_nnz", spec.xbar_nnz);
            spec.noise = get_or<double>(g, "noise", spec.noise);
            spec.seed = get_or<std::uint64_t>(g, "seed", spec.seed);
            auto inst = generate_lasso_instance(spec);
            out.info["generated"] = {{"p", spec.p}, {"m", spec.m}, {"nnz_per_row", spec.nnz_per_row}, {"seed", spec.seed},
                                     {"noise", spec.noise}, {"eta", inst.eta}, {"max_col_support", inst.max_col_support}};
            out.input_hash = io::fnv1a(g.dump());
            A = std::move(inst.A);
            b = std::move(inst.b);
        } else {
            auto pa = resolve(base, pj, "A"), pb = resolve(base, pj, "b");
            hash_file(pa);
            hash_file(pb);
            A = io::read_matrix(pa);
            b = io::read_vector(pb);
        }
        double lambda;
        if (pj.contains("lambda")) lambda = get_or<double>(pj, "lambda", 0.0);
        else if (pj.contains("lambda_ratio")) lambda = lasso_lambda_from_ratio(A, b, get_or<double>(pj, "lambda_ratio", 0.1));
        else throw validation_error("lasso: 'lambda' or 'lambda_ratio' required");
        require(lambda > 0.0, "lasso: lambda must be positive");
        out.info["lambda"] = lambda;
        out.problem.emplace(std::in_place_type<LassoProblem>, std::move(A), std::move(b), lambda);
    } else if (out.kind == "min_norm") {
        auto pa = resolve(base, pj, "A"), pb = resolve(base, pj, "b");
        hash_file(pa);
        hash_file(pb);
        out.problem.emplace(std::in_place_type<MinNormDualProblem>, io::read_matrix(pa), io::read_vector(pb));
    } else if (out.kind == "ridge" || out.kind == "svm") {
        const double lambda = get_or<double>(pj, "lambda", 0.0);
        require(lambda > 0.0, out.kind + ": positive 'lambda' required");
        auto py = resolve(base, pj, "y");
        hash_file(py);
        Eigen::VectorXd y = io::read_vector(py);
        Eigen::MatrixXd X, K;
        if (pj.contains("X")) {
            auto px = resolve(base, pj, "X");
            hash_file(px);
            X = io::read_dense_matrix(px);
            K = X * X.transpose();
        } else {
            auto pk = resolve(base, pj, "K");
            hash_file(pk);
            K = io::read_dense_matrix(pk);
        }
        if (out.kind == "ridge") out.problem.emplace(std::in_place_type<RidgeDualProblem>, K, y, lambda, X);
        else out.problem.emplace(std::in_place_type<SvmDualProblem>, K, y, lambda, X);
    } else {
        throw validation_error("problem: unknown kind '" + out.kind + "' (expected lasso, min_norm, ridge or svm)");
    }
    std::visit([&](const auto& p) {
        auto st = p.structure();
        out.info["m"] = p.partition().m();
        out.info["eta"] = st.eta();
    }, *out.problem);
    return out;
}

template <class P>
SmoothnessCertificate make_certificate(const P& problem, const json& cj, const SamplingScheme& scheme) {
    const auto st = problem.structure();
    const std::size_t m = st.m, eta = st.eta();
    if (cj.is_object() && cj.contains("custom")) {
        auto nu = cj.at("custom").get<std::vector<double>>();
        require(nu.size() == m, "certificate: custom nu must have one entry per block");
        auto c = nu_s3(nu);
        c.condition = Condition::S1;
        c.provenance = "custom (caller-certified)";
        return c;
    }
    if (!cj.is_string()) throw validation_error("certificate: expected a name or {\"custom\": [...]}");
    const auto name = cj.get<std::string>();
    auto need_tau_nice = [&]() {
        require(scheme.kind() == SamplingKind::TauNice, "certificate '" + name + "' needs tau_nice sampling");
    };
    if (name == "s1_tau_nice") {
        need_tau_nice();
        return nu_s1(st, beta_closed_form_tau_nice(m, eta, scheme.tau()));
    }
    if (name == "s1_refined") {
        need_tau_nice();
        return nu_s1_refined(st, scheme.tau());
    }
    if (name == "s1_enumerated") return nu_s1(st, beta_by_enumeration(scheme, st.index_sets));
    if (name == "s2") return nu_s2(st, scheme);
    if (name == "s2_conservative") {
        auto c = nu_s1(st, beta_conservative(m, eta, scheme.tau_max()));
        c.condition = Condition::S2;
        c.provenance = "nu = min(eta, tau_max) * L_i";
        return c;
    }
    if (name == "s3") return nu_s3(st);
    throw validation_error("certificate: unknown choice '" + name +
                           "' (expected s1_tau_nice, s1_refined, s1_enumerated, s2, s2_conservative, s3 or custom)");
}

json report_summary(const RunReport& rep) {
    return {{"iterations", rep.iterations}, {"rejections", rep.rejections}, {"converged", rep.converged},
            {"stop_reason", rep.stop_reason}, {"final_F", rep.rows.empty() ? 0.0 : rep.rows.back().F},
            {"warnings", rep.warnings}};
}

template <class P>
std::vector<double> initial_point(const P& problem, const json& cfg, const fs::path& base) {
    if (!cfg.contains("x0")) return std::vector<double>(problem.partition().N(), 0.0);
    auto v = io::read_vector(resolve(base, cfg, "x0"));
    require(std::size_t(v.size()) == problem.partition().N(), "x0: wrong dimension");
    return {v.data(), v.data() + v.size()};
}

SolverConfig solver_config(const json& cfg, const SamplingScheme& scheme, SmoothnessCertificate cert) {
    SolverConfig sc;
    sc.scheme = scheme;
    sc.certificate = std::move(cert);
    sc.delta = get_or<double>(cfg, "delta", 1.0);
    sc.monotone = get_or<bool>(cfg, "monotone", false);
    sc.monotone_slack = get_or<double>(cfg, "monotone_slack", 0.0);
    sc.seed = get_or<std::uint64_t>(cfg, "seed", 0);
    sc.stop.tolerance = get_or<double>(cfg, "tolerance", 1e-8);
    sc.refresh_every = get_or<std::size_t>(cfg, "refresh_every", sc.refresh_every);
    if (cfg.contains("f_target")) sc.stop.f_target = get_or<double>(cfg, "f_target", 0.0);
    const std::size_t m = scheme.m();
    if (!cfg.contains("epochs")) {
        sc.max_iters = get_or<std::size_t>(cfg, "max_iters", 1000);
        sc.record_every = get_or<std::size_t>(cfg, "record_every", std::max<std::size_t>(1, sc.max_iters / 100));
    } else {
        const auto epochs = get_or<std::size_t>(cfg, "epochs", 10);
        sc.record_at = epoch_schedule(m, scheme.expected_batch(), epochs);
        sc.max_iters = sc.record_at.back();
    }
    require(sc.delta > 0.0 && sc.delta < 2.0, "config: delta must lie in (0, 2)");
    return sc;
}

fs::path output_dir(const json& cfg, const char* fallback) {
    fs::path out = get_or<std::string>(cfg, "out", fallback);
    fs::create_directories(out);
    return out;
}

json meta_common(const LoadedConfig& lc, const LoadedProblem& lp) {
    return {{"config", lc.cfg},
            {"config_hash", io::hex64(io::fnv1a(lc.text))},
            {"input_hash", io::hex64(lp.input_hash)},
            {"problem", lp.info}};
}

ReferenceSolution reference_for(const AnyProblem& problem, const json& cfg) {
    const json rj = cfg.contains("reference") ? cfg.at("reference") : json::object();
    const double tol = get_or<double>(rj, "tol", 1e-12);
    const auto iters = get_or<std::size_t>(rj, "max_iters", 100000);
    return std::visit([&](const auto& p) { return reference_solve(p, tol, iters); }, problem);
}

int cmd_gen(const LassoInstanceSpec& spec, const std::string& out_dir) {
    auto inst = generate_lasso_instance(spec);
    fs::path out = out_dir;
    io::write_matrix_market(out / "A.mtx", inst.A);
    io::write_vector(out / "b.csv", inst.b);
    io::write_vector(out / "xbar.csv", inst.xbar);
    json meta{{"p", spec.p},   {"m", spec.m},   {"nnz_per_row", spec.nnz_per_row}, {"xbar_nnz", spec.xbar_nnz},
              {"noise", spec.noise}, {"seed", spec.seed}, {"eta", inst.eta}, {"max_col_support", inst.max_col_support}};
    io::atomic_write(out / "instance.json", meta.dump(2) + "\n");
    std::cout << meta.dump() << "\n";
    return 0;
}

int cmd_solve(const std::string& config_path, const Overrides& ov) {
    auto lc = load_config(config_path, ov);
    auto lp = load_problem(lc.cfg.at("problem"), lc.base);
    const auto out = output_dir(lc.cfg, "out");
    return std::visit([&](const auto& p) {
        const auto scheme = io::scheme_from_json(get_or<json>(lc.cfg, "sampling", json{{"kind", "fully_parallel"}}), p.partition().m());
        auto cert = make_certificate(p, get_or<json>(lc.cfg, "certificate", json("s3")), scheme);
        auto sc = solver_config(lc.cfg, scheme, cert);
        auto rep = run(p, sc, initial_point(p, lc.cfg, lc.base));
        io::atomic_write(out / "run.csv", io::telemetry_csv(rep));
        json meta = meta_common(lc, lp);
        meta["seed"] = rep.seed;
        meta["sampling"] = io::scheme_to_json(scheme);
        meta["certificate"] = io::certificate_to_json(cert);
        meta["result"] = report_summary(rep);
        io::atomic_write(out / "run.json", meta.dump(2) + "\n");
        io::write_vector(out / "x.csv", Eigen::Map<const Eigen::VectorXd>(rep.x.data(), Eigen::Index(rep.x.size())));
        for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << meta["result"].dump() << "\n";
        return 0;
    }, *lp.problem);
}

int cmd_reference(const std::string& config_path, const Overrides& ov) {
    auto lc = load_config(config_path, ov);
    auto lp = load_problem(lc.cfg.at("problem"), lc.base);
    const auto out = output_dir(lc.cfg, "out");
    auto ref = reference_for(*lp.problem, lc.cfg);
    json meta = meta_common(lc, lp);
    meta["F_star"] = ref.F_star;
    meta["residual"] = ref.residual;
    meta["iterations"] = ref.iterations;
    meta["converged"] = ref.converged;
    meta["x_ref"] = "x_ref.csv";
    io::write_vector(out / "x_ref.csv", Eigen::Map<const Eigen::VectorXd>(ref.x.data(), Eigen::Index(ref.x.size())));
    io::atomic_write(out / "reference.json", meta.dump(2) + "\n");
    std::cout << json{{"F_star", ref.F_star}, {"residual", ref.residual}, {"converged", ref.converged}}.dump() << "\n";
    return ref.converged ? 0 : 1;
}

std::string cell_name(const std::string& cert, std::size_t tau, double delta) {
    std::ostringstream ss;
    ss << cert << "_tau" << tau << "_delta" << delta;
    return ss.str();
}

int cmd_experiment(const std::string& config_path, const Overrides& ov) {
    auto lc = load_config(config_path, ov);
    const auto& cfg = lc.cfg;
    auto lp = load_problem(cfg.at("problem"), lc.base);
    const auto out = output_dir(cfg, "experiment_out");
    const json grid = get_or<json>(cfg, "grid", json::object());
    const auto taus = get_or<std::vector<std::size_t>>(grid, "taus", {1});
    const auto certs = get_or<std::vector<std::string>>(grid, "certificates", {"s1_tau_nice"});
    const auto deltas = get_or<std::vector<double>>(grid, "deltas", {1.0});
    std::vector<std::uint64_t> seeds = get_or<std::vector<std::uint64_t>>(grid, "seeds", {});
    if (seeds.empty()) {
        const auto count = get_or<std::size_t>(grid, "seed_count", 5);
        const auto base_seed = get_or<std::uint64_t>(cfg, "seed", 0);
        for (std::size_t k = 0; k < count; ++k) seeds.push_back(base_seed + k);
    }
    require(!taus.empty() && !certs.empty() && !deltas.empty(), "experiment: grid lists must be nonempty");

    double F_star;
    std::vector<double> x_ref;
    if (cfg.contains("F_star")) {
        F_star = get_or<double>(cfg, "F_star", 0.0);
    } else {
        auto ref = reference_for(*lp.problem, cfg);
        F_star = ref.F_star;
        x_ref = ref.x;
        if (!ref.converged) std::cerr << "warning: reference solve did not reach its tolerance (residual " << ref.residual << ")\n";
    }

    return std::visit([&](const auto& p) {
        const std::size_t m = p.partition().m();
        struct Cell {
            std::string cert;
            std::size_t tau;
            double delta;
            std::uint64_t seed;
        };
        std::vector<Cell> cells;
        for (const auto& c : certs)
            for (auto t : taus)
                for (auto d : deltas)
                    for (auto s : seeds) cells.push_back({c, t, d, s});

        std::map<std::string, std::vector<RunReport>> by_curve;
        std::map<std::string, std::vector<double>> gammas;
        std::mutex mu;
        json cfg_run = cfg;
        cfg_run["tolerance"] = 0.0;
        parallel_for(cells.size(), thread_budget(), [&](std::size_t k) {
            const auto& cell = cells[k];
            require(cell.tau >= 1 && cell.tau <= m, "experiment: tau out of range");
            auto scheme = SamplingScheme::tau_nice(m, cell.tau);
            auto cert = make_certificate(p, json(cell.cert), scheme);
            json cj = cfg_run;
            cj["delta"] = cell.delta;
            cj["seed"] = cell.seed;
            auto sc = solver_config(cj, scheme, cert);
            auto rep = run(p, sc);
            const auto curve = cell_name(cell.cert, cell.tau, cell.delta);
            const auto stem = curve + "_seed" + std::to_string(cell.seed);
            io::atomic_write(out / "runs" / (stem + ".csv"), io::telemetry_csv(rep));
            json meta = meta_common(lc, lp);
            meta["cell"] = {{"certificate", cell.cert}, {"tau", cell.tau}, {"delta", cell.delta}, {"seed", cell.seed}};
            meta["certificate"] = io::certificate_to_json(cert);
            meta["result"] = report_summary(rep);
            meta["F_star"] = F_star;
            io::atomic_write(out / "runs" / (stem + ".json"), meta.dump(2) + "\n");
            std::lock_guard<std::mutex> lock(mu);
            gammas[curve] = rep.gamma;
            by_curve[curve].push_back(std::move(rep));
        });

        json summary = meta_common(lc, lp);
        summary["F_star"] = F_star;
        summary["curves"] = json::array();
        for (auto& [curve, runs] : by_curve) {
            std::sort(runs.begin(), runs.end(), [](const RunReport& a, const RunReport& b) { return a.seed < b.seed; });
            const std::size_t len = runs.front().rows.size();
            for (const auto& r : runs) require(r.rows.size() == len, "experiment: runs of one curve have different lengths");
            const auto& cell = *std::find_if(cells.begin(), cells.end(), [&](const Cell& c) { return cell_name(c.cert, c.tau, c.delta) == curve; });
            const auto scheme = SamplingScheme::tau_nice(m, cell.tau);
            std::optional<RateBoundInputs> rb;
            if (!x_ref.empty()) {
                RateBoundInputs in;
                const auto& g = gammas[curve];
                auto W = DiagonalMetric::w(g, scheme.marginals());
                std::vector<double> diff(x_ref.size());
                for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = -x_ref[j];
                in.dist_W_sq = weighted_norm_sq(diff, p.partition(), W);
                in.F0_gap = std::max(0.0, runs.front().rows.front().F - F_star);
                in.p_min = scheme.p_min();
                in.delta = cell.delta;
                rb = in;
            }
            std::ostringstream ss;
            ss << "epoch,iter,mean_F,mean_gap,stderr,sublinear_bound,sublinear_bound_v2\n";
            const double S = double(runs.size());
            for (std::size_t t = 0; t < len; ++t) {
                double s = 0.0;
                for (const auto& r : runs) s += r.rows[t].F;
                const double mean = s / S;
                double ss2 = 0.0;
                for (const auto& r : runs) ss2 += (r.rows[t].F - mean) * (r.rows[t].F - mean);
                const double se = runs.size() > 1 ? std::sqrt(ss2 / (S - 1.0) / S) : 0.0;
                const auto n = runs.front().rows[t].iter;
                std::string b1 = "", b2 = "";
                if (rb) {
                    if (n >= 1) b1 = io::fmt(sublinear_bound(*rb, n));
                    b2 = io::fmt(sublinear_bound_v2(*rb, n));
                }
                ss << io::fmt(runs.front().rows[t].epoch) << "," << n << "," << io::fmt(mean) << "," << io::fmt(mean - F_star)
                   << "," << io::fmt(se) << "," << b1 << "," << b2 << "\n";
            }
            io::atomic_write(out / "aggregate" / (curve + ".csv"), ss.str());
            summary["curves"].push_back({{"name", curve}, {"seeds", runs.size()}, {"final_mean_gap", [&] {
                double s = 0.0;
                for (const auto& r : runs) s += r.rows.back().F;
                return s / S - F_star;
            }()}});
        }
        io::atomic_write(out / "summary.json", summary.dump(2) + "\n");
        std::cout << summary["curves"].dump() << "\n";
        return 0;
    }, *lp.problem);
}

int cmd_verify(const std::string& config_path, std::size_t trials) {
    auto lc = load_config(config_path);
    const auto& cfg = lc.cfg;
    json report = json::object();
    if (cfg.contains("structure")) {
        auto st = io::structure_from_json(cfg.at("structure"));
        auto scheme = io::scheme_from_json(cfg.at("sampling"), st.m);
        auto b = beta_by_enumeration(scheme, st.index_sets);
        report["beta1"] = b.beta1;
        report["beta1_condexp"] = b.beta1_condexp;
        report["beta1_refined"] = b.beta1_refined;
        report["beta2"] = b.beta2;
        report["eta"] = st.eta();
        report["tau_max"] = scheme.tau_max();
        report["invariants_hold"] = beta_invariants_hold(b, st.eta(), scheme.tau_max());
        if (scheme.kind() == SamplingKind::TauNice && st.m >= 2)
            report["beta_tau_nice"] = beta_tau_nice(st.m, st.eta(), scheme.tau());
    }
    bool ok = true;
    if (cfg.contains("problem")) {
        auto lp = load_problem(cfg.at("problem"), lc.base);
        std::visit([&](const auto& p) {
            const auto scheme = io::scheme_from_json(cfg.at("sampling"), p.partition().m());
            const auto st = p.structure();
            Rng rng(get_or<std::uint64_t>(cfg, "seed", 0));
            auto s1 = nu_s1(st, beta_by_enumeration(scheme, st.index_sets));
            auto r1 = verify_eso_s1(p, scheme, s1, trials, rng);
            auto s2 = nu_s2(st, scheme);
            auto r2 = verify_eso_s2(p, scheme, s2, trials, rng);
            report["eso_s1_min_slack"] = r1.min_slack;
            report["eso_s2_min_slack"] = r2.min_slack;
            report["eso_valid"] = r1.valid() && r2.valid();
            ok = r1.valid() && r2.valid();
        }, *lp.problem);
    }
    if (report.empty()) throw validation_error("verify: config needs 'structure' and/or 'problem' with 'sampling'");
    std::cout << report.dump(2) << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parallel random block-coordinate forward-backward solver"};
    app.require_subcommand(1);

    Overrides ov;
    auto add_overrides = [&](CLI::App* sub) {
        sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { ov.seed = v; }, "Override the config seed");
        sub->add_option_function<std::string>("--out", [&](const std::string& v) { ov.out = v; }, "Override the output directory");
        sub->add_option_function<std::size_t>("--max-iters", [&](const std::size_t& v) { ov.max_iters = v; }, "Override the iteration budget");
    };

    std::string config;
    LassoInstanceSpec spec;
    std::string gen_out = "instance";
    auto* gen = app.add_subcommand("gen", "Generate a sparse Lasso instance");
    gen->add_option("--p", spec.p, "Rows (equations)")->check(CLI::PositiveNumber);
    gen->add_option("--m", spec.m, "Columns (unknowns)")->check(CLI::PositiveNumber);
    gen->add_option("--nnz-per-row", spec.nnz_per_row, "Nonzeros per row")->check(CLI::PositiveNumber);
    gen->add_option("--xbar-nnz", spec.xbar_nnz, "Nonzeros of the ground truth (0: m/10)");
    gen->add_option("--noise", spec.noise, "Noise scale")->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", spec.seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output directory");

    auto* solve = app.add_subcommand("solve", "Run one solve from a JSON config");
    auto* experiment = app.add_subcommand("experiment", "Run a (certificate, tau, delta, seed) grid");
    auto* reference = app.add_subcommand("reference", "High-accuracy deterministic solve for F*");
    auto* verify = app.add_subcommand("verify", "Enumerate beta constants and check ESO inequalities");
    std::size_t trials = 100;
    verify->add_option("--trials", trials, "Random probes per inequality");
    for (auto* sub : {solve, experiment, reference, verify}) sub->add_option("config", config, "JSON config file")->required();
    for (auto* sub : {solve, experiment, reference}) add_overrides(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_gen(spec, gen_out);
        if (*solve) return cmd_solve(config, ov);
        if (*experiment) return cmd_experiment(config, ov);
        if (*reference) return cmd_reference(config, ov);
        if (*verify) return cmd_verify(config, trials);
    } catch (const blockfb::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::Validation ? 2 : 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
