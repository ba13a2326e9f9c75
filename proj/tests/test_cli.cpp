#include <gtest/gtest.h>

#include <blockfb/io.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = BLOCKFB_CLI_PATH;

int sh(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" + kCli + "' " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("blockfb_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write_config(const std::string& name, const json& j) {
        auto p = dir_ / name;
        std::ofstream(p) << j.dump(2);
        return p.string();
    }
    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

    static json small_lasso() {
        return {{"kind", "lasso"}, {"generate", {{"p", 40}, {"m", 60}, {"nnz_per_row", 4}, {"seed", 5}}}, {"lambda_ratio", 0.1}};
    }

    fs::path dir_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& file) {
    std::ifstream in(file);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::size_t column(const std::vector<std::vector<std::string>>& csv, const std::string& name) {
    const auto& h = csv.front();
    return std::size_t(std::find(h.begin(), h.end(), name) - h.begin());
}

std::vector<std::string> column_values(const std::vector<std::vector<std::string>>& csv, const std::string& name) {
    const auto c = column(csv, name);
    std::vector<std::string> out;
    for (std::size_t r = 1; r < csv.size(); ++r) out.push_back(csv[r][c]);
    return out;
}

json read_json(const std::string& file) { return json::parse(blockfb::io::read_file(file)); }

}  // namespace

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(sh(""), 2);
    EXPECT_EQ(sh("--help"), 0);
    EXPECT_EQ(sh("solve " + path("missing.json")), 2);
    EXPECT_EQ(sh("solve " + write_config("bad_kind.json", {{"problem", {{"kind", "logistic"}}}})), 2);
    EXPECT_EQ(sh("solve " + write_config("unknown.json", {{"problem", small_lasso()}, {"colour", 1}})), 2);
    EXPECT_EQ(sh("solve " + write_config("both.json", {{"problem", small_lasso()}, {"epochs", 1}, {"max_iters", 3}})), 2);
    EXPECT_EQ(sh("solve " + write_config("delta.json", {{"problem", small_lasso()}, {"delta", 2.5}})), 2);
    {
        std::ofstream(path("broken.json")) << "{ not json";
        EXPECT_EQ(sh("solve " + path("broken.json")), 2);
    }
    // a reference solve that cannot converge in its budget is a runtime failure
    EXPECT_EQ(sh("reference " + write_config("ref.json", {{"problem", small_lasso()},
                                                           {"reference", {{"tol", 1e-14}, {"max_iters", 2}}},
                                                           {"out", path("ref_out")}})),
              1);
    EXPECT_EQ(sh("solve " + write_config("ok.json", {{"problem", small_lasso()}, {"max_iters", 5}, {"out", path("ok_out")}})), 0);
}

TEST_F(Cli, GenIsDeterministic) {
    const std::string args = "gen --p 30 --m 80 --nnz-per-row 5 --seed 11 --out ";
    ASSERT_EQ(sh(args + path("a")), 0);
    ASSERT_EQ(sh(args + path("b")), 0);
    for (const char* f : {"A.mtx", "b.csv", "xbar.csv", "instance.json"})
        EXPECT_EQ(blockfb::io::read_file(path(std::string("a/") + f)), blockfb::io::read_file(path(std::string("b/") + f))) << f;
    auto meta = read_json(path("a/instance.json"));
    EXPECT_EQ(meta["noise"].get<double>(), 0.06);
    EXPECT_LE(meta["eta"].get<std::size_t>(), 5u);
    ASSERT_EQ(sh("gen --p 30 --m 80 --nnz-per-row 5 --seed 12 --out " + path("c")), 0);
    EXPECT_NE(blockfb::io::read_file(path("a/A.mtx")), blockfb::io::read_file(path("c/A.mtx")));
}

TEST_F(Cli, SolveFromGeneratedFiles) {
    ASSERT_EQ(sh("gen --p 30 --m 80 --nnz-per-row 5 --seed 3 --out " + path("inst")), 0);
    json problem{{"kind", "lasso"}, {"A", "inst/A.mtx"}, {"b", "inst/b.csv"}, {"lambda_ratio", 0.2}};
    auto cfg = write_config("solve.json", {{"problem", problem},
                                           {"sampling", {{"kind", "tau_nice"}, {"tau", 8}}},
                                           {"certificate", "s1_refined"},
                                           {"max_iters", 200},
                                           {"record_every", 20},
                                           {"tolerance", 0},
                                           {"out", path("run")}});
    ASSERT_EQ(sh("solve " + cfg), 0);
    auto csv = read_csv(path("run/run.csv"));
    EXPECT_EQ(csv.front(), (std::vector<std::string>{"iter", "epoch", "F", "residual_norm", "rejections", "wall_ms"}));
    EXPECT_EQ(csv.size(), 1u + 200 / 20 + 1);
    auto meta = read_json(path("run/run.json"));
    EXPECT_TRUE(meta.contains("config_hash"));
    EXPECT_TRUE(meta.contains("input_hash"));
    EXPECT_EQ(meta["certificate"]["condition"], "S1");
    EXPECT_TRUE(fs::path(meta["config"]["problem"]["A"].get<std::string>()).is_absolute());
    EXPECT_EQ(blockfb::io::read_vector(path("run/x.csv")).size(), 80);
}

TEST_F(Cli, RowCountMatchesEpochBudget) {
    auto cfg = write_config("s.json", {{"problem", small_lasso()},
                                       {"sampling", {{"kind", "tau_nice"}, {"tau", 7}}},
                                       {"certificate", "s2"},
                                       {"epochs", 25},
                                       {"tolerance", 0},
                                       {"out", path("run")}});
    ASSERT_EQ(sh("solve " + cfg), 0);
    auto csv = read_csv(path("run/run.csv"));
    ASSERT_EQ(csv.size(), 1u + 25 + 1);
    auto epochs = column_values(csv, "epoch");
    EXPECT_NEAR(std::stod(epochs.back()), 25.0, 0.2);
}

TEST_F(Cli, EchoedConfigReproducesRun) {
    auto cfg = write_config("s.json", {{"problem", small_lasso()},
                                       {"sampling", {{"kind", "tau_nice"}, {"tau", 6}}},
                                       {"certificate", "s1_tau_nice"},
                                       {"delta", 1.4},
                                       {"seed", 3},
                                       {"max_iters", 300},
                                       {"record_every", 10},
                                       {"tolerance", 0},
                                       {"out", path("first")}});
    ASSERT_EQ(sh("solve " + cfg + " --seed 9"), 0);
    auto echo = read_json(path("first/run.json"))["config"];
    EXPECT_EQ(echo["seed"], 9);
    echo["out"] = path("second");
    fs::create_directories(path("elsewhere"));
    auto again = (dir_ / "elsewhere" / "echo.json").string();
    std::ofstream(again) << echo.dump(2);
    ASSERT_EQ(sh("solve " + again), 0);
    auto a = read_csv(path("first/run.csv")), b = read_csv(path("second/run.csv"));
    EXPECT_EQ(column_values(a, "F"), column_values(b, "F"));
    EXPECT_EQ(blockfb::io::read_file(path("first/x.csv")), blockfb::io::read_file(path("second/x.csv")));
}

TEST_F(Cli, FlagOverrides) {
    auto cfg = write_config("s.json", {{"problem", small_lasso()},
                                       {"sampling", {{"kind", "tau_nice"}, {"tau", 6}}},
                                       {"certificate", "s2"},
                                       {"epochs", 10},
                                       {"tolerance", 0},
                                       {"out", path("unused")}});
    ASSERT_EQ(sh("solve " + cfg + " --out " + path("o1") + " --max-iters 40 --seed 2"), 0);
    EXPECT_FALSE(fs::exists(path("unused")));
    auto meta = read_json(path("o1/run.json"));
    EXPECT_EQ(meta["config"]["max_iters"], 40);
    EXPECT_FALSE(meta["config"].contains("epochs"));
    EXPECT_EQ(meta["seed"], 2);
    EXPECT_EQ(meta["result"]["iterations"], 40);
    ASSERT_EQ(sh("solve " + cfg + " --out " + path("o2") + " --max-iters 40 --seed 3"), 0);
    EXPECT_NE(blockfb::io::read_file(path("o1/x.csv")), blockfb::io::read_file(path("o2/x.csv")));
}

TEST_F(Cli, ExperimentAggregateRecomputesFromRuns) {
    auto cfg = write_config("e.json", {{"problem", small_lasso()},
                                       {"grid", {{"certificates", {"s1_tau_nice", "s2_conservative"}},
                                                 {"taus", {1, 6}},
                                                 {"deltas", {1.0, 1.5}},
                                                 {"seed_count", 3}}},
                                       {"seed", 20},
                                       {"epochs", 8},
                                       {"out", path("exp")}});
    ASSERT_EQ(sh("experiment " + cfg, "BLOCKFB_THREADS=2"), 0);
    auto summary = read_json(path("exp/summary.json"));
    ASSERT_EQ(summary["curves"].size(), 8u);
    const double F_star = summary["F_star"].get<double>();
    for (const auto& curve : summary["curves"]) {
        const auto name = curve["name"].get<std::string>();
        auto agg = read_csv(path("exp/aggregate/" + name + ".csv"));
        EXPECT_EQ(agg.front(), (std::vector<std::string>{"epoch", "iter", "mean_F", "mean_gap", "stderr", "sublinear_bound",
                                                         "sublinear_bound_v2"}));
        ASSERT_EQ(agg.size(), 1u + 8 + 1);
        std::vector<std::vector<std::string>> runs;
        for (std::uint64_t s = 20; s < 23; ++s) {
            const auto stem = path("exp/runs/" + name + "_seed" + std::to_string(s));
            auto rc = read_csv(stem + ".csv");
            ASSERT_EQ(rc.size(), agg.size()) << stem;
            runs.push_back(column_values(rc, "F"));
            EXPECT_TRUE(fs::exists(stem + ".json"));
        }
        auto means = column_values(agg, "mean_F");
        auto gaps = column_values(agg, "mean_gap");
        for (std::size_t t = 0; t < means.size(); ++t) {
            double s = 0.0;
            for (const auto& r : runs) s += std::stod(r[t]);
            const double mean = s / 3.0;
            EXPECT_NEAR(std::stod(means[t]), mean, 1e-12 * std::max(1.0, std::abs(mean)));
            EXPECT_NEAR(std::stod(gaps[t]), mean - F_star, 1e-12 * std::max(1.0, std::abs(mean)));
        }
        auto b1 = column_values(agg, "sublinear_bound");
        EXPECT_TRUE(b1.front().empty());
        for (std::size_t t = 1; t < b1.size(); ++t) EXPECT_GE(std::stod(b1[t]), std::stod(gaps[t]));
    }
}

TEST_F(Cli, ThreadCountDoesNotChangeExperimentOutput) {
    json base{{"problem", small_lasso()},
              {"grid", {{"certificates", {"s1_tau_nice"}}, {"taus", {4}}, {"deltas", {1.0}}, {"seed_count", 4}}},
              {"epochs", 5}};
    base["out"] = path("t1");
    ASSERT_EQ(sh("experiment " + write_config("t1.json", base), "BLOCKFB_THREADS=1"), 0);
    base["out"] = path("t3");
    ASSERT_EQ(sh("experiment " + write_config("t3.json", base), "BLOCKFB_THREADS=3"), 0);
    EXPECT_EQ(column_values(read_csv(path("t1/aggregate/s1_tau_nice_tau4_delta1.csv")), "mean_F"),
              column_values(read_csv(path("t3/aggregate/s1_tau_nice_tau4_delta1.csv")), "mean_F"));
}

TEST_F(Cli, ReferenceWritesSolution) {
    auto cfg = write_config("r.json", {{"problem", small_lasso()}, {"out", path("ref")}});
    ASSERT_EQ(sh("reference " + cfg), 0);
    auto meta = read_json(path("ref/reference.json"));
    EXPECT_TRUE(meta["converged"].get<bool>());
    EXPECT_LE(meta["residual"].get<double>(), 1e-12);
    EXPECT_EQ(blockfb::io::read_vector(path("ref/x_ref.csv")).size(), 60);
}

TEST_F(Cli, VerifyStructureAndProblem) {
    auto cfg = write_config("v.json", {{"structure", {{"index_sets", {{0, 1}, {1, 2, 3}, {3, 4}}},
                                                      {"block_lipschitz", {1.0, 2.0, 1.5, 0.5, 1.0}}}},
                                       {"sampling", {{"kind", "tau_nice"}, {"tau", 2}}}});
    EXPECT_EQ(sh("verify " + cfg), 0);
    auto cfg2 = write_config("v2.json", {{"problem", small_lasso()}, {"sampling", {{"kind", "tau_nice"}, {"tau", 3}}}});
    EXPECT_EQ(sh("verify --trials 20 " + cfg2), 0);
}

TEST_F(Cli, ShippedConfigsParse) {
    const fs::path configs = fs::path(BLOCKFB_SOURCE_DIR) / "configs";
    EXPECT_EQ(sh("verify " + (configs / "verify_structure.json").string()), 0);
    auto solve = read_json((configs / "lasso_solve.json").string());
    solve["out"] = path("shipped");
    solve["epochs"] = 3;
    EXPECT_EQ(sh("solve " + write_config("shipped.json", solve)), 0);
}
