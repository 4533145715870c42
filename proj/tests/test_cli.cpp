#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "mcrl/io.hpp"

using namespace mcrl;
namespace fs = std::filesystem;
using json = io::json;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        static std::atomic<int> counter{0};
        dir_ = fs::temp_directory_path() / ("mcrl_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string& args) const {
        const std::string cmd = std::string(MCRL_CLI_PATH) + " " + args + " >" + (dir_ / "stdout.txt").string() +
                                " 2>" + (dir_ / "stderr.txt").string();
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

    static std::map<std::string, std::string> output_hashes(const fs::path& out) {
        std::map<std::string, std::string> h;
        const json m = io::read_json(out / "manifest.json");
        for (const auto& e : m.at("outputs")) h[e.at("path").get<std::string>()] = e.at("sha256").get<std::string>();
        return h;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageAndValidationErrorsExitTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("simulate"), 2);
    EXPECT_EQ(run("simulate not_a_model --out " + path("o")), 2);
    io::write_file_atomic(dir_ / "bad.json", "{ nope");
    EXPECT_EQ(run("simulate " + path("bad.json") + " --out " + path("o")), 2);
    EXPECT_EQ(run("fit " + path("missing_dir") + " --out " + path("f")), 2);
    EXPECT_EQ(run("fit " + path("bad.json") + " --out " + path("f")), 2);
    EXPECT_EQ(run("fit " + path(".") + " --out " + path("f") + " --optimizer grid"), 2);
}

TEST_F(CliTest, IncompleteInputsExitThree) {
    fs::create_directories(dir_ / "empty_logs");
    EXPECT_EQ(run("fit " + path("empty_logs") + " --out " + path("f")), 3);
    io::Table t{{"participant", "model", "loglik", "k", "n", "bic", "wall_time"}, {}};
    t.add({"p", "rssl", "-10", "4", "20", "32", "0"});
    io::write_file_atomic(dir_ / "manifest.csv", io::to_csv(t));
    EXPECT_EQ(run("select " + path("manifest.csv") + " --out " + path("s")), 3);
}

TEST_F(CliTest, SimulateIsReproducible) {
    const std::string args = "simulate model_free_reinforce --runs 3 --trials 6 --seed 4 --out ";
    ASSERT_EQ(run(args + path("a")), 0);
    ASSERT_EQ(run(args + path("b") + " --threads 2"), 0);
    const auto ha = output_hashes(dir_ / "a");
    EXPECT_EQ(ha, output_hashes(dir_ / "b"));
    EXPECT_TRUE(ha.count("curves.csv"));
    EXPECT_TRUE(ha.count("logs/run0002.json"));
    const auto curves = io::load_table(dir_ / "a" / "curves.csv");
    EXPECT_EQ(curves.rows.size(), 6u);
    ASSERT_EQ(run("simulate model_free_reinforce --runs 3 --trials 6 --seed 5 --out " + path("c")), 0);
    EXPECT_NE(output_hashes(dir_ / "c").at("curves.csv"), ha.at("curves.csv"));
}

TEST_F(CliTest, RelativePathsResolveAgainstDataRoot) {
    const std::string cmd = "MCRL_DATA_ROOT=" + dir_.string() + " " + std::string(MCRL_CLI_PATH) +
                            " simulate non_learning --runs 1 --trials 3 --out rel_out >/dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(dir_ / "rel_out" / "manifest.json"));
}

TEST_F(CliTest, FitBudgetOneAndAllModels) {
    ASSERT_EQ(run("simulate rssl --runs 2 --trials 5 --seed 1 --out " + path("sim")), 0);
    ASSERT_EQ(run("fit " + path("sim/logs") + " --models all --budget 1 --optimizer random_search --out " + path("fit")), 0);
    const auto rows = io::load_table(dir_ / "fit" / "fit_manifest.csv").rows;
    EXPECT_EQ(rows.size(), 10u);
    for (const auto& e : fs::directory_iterator(dir_ / "fit" / "fits")) {
        const json r = io::read_json(e.path());
        EXPECT_EQ(r.at("trace").size(), 1u) << e.path();
    }
    EXPECT_EQ(fs::directory_iterator(dir_ / "fit" / "fits") == fs::directory_iterator(), false);
}

TEST_F(CliTest, FitIsResumableAndDeterministic) {
    ASSERT_EQ(run("simulate hybrid_reinforce --runs 2 --trials 4 --seed 2 --out " + path("sim")), 0);
    const std::string args = " --models rssl,non_learning --budget 4 --optimizer random_search --seed 9 --out ";
    ASSERT_EQ(run("fit " + path("sim/logs") + args + path("f1")), 0);
    ASSERT_EQ(run("fit " + path("sim/logs") + args + path("f2")), 0);
    auto h1 = output_hashes(dir_ / "f1"), h2 = output_hashes(dir_ / "f2");
    // fit_manifest carries wall times; the per-fit results must be byte-identical.
    h1.erase("fit_manifest.csv");
    h2.erase("fit_manifest.csv");
    EXPECT_EQ(h1, h2);
    EXPECT_EQ(h1.size(), 4u);

    // Remove one result and rerun: only the missing fit is recomputed.
    const fs::path victim = dir_ / "f1" / "fits" / "run0__rssl.json";
    ASSERT_TRUE(fs::exists(victim)) << "expected participant id run0";
    const std::string kept = io::read_file(dir_ / "f1" / "fits" / "run1__rssl.json");
    fs::remove(victim);
    ASSERT_EQ(run("fit " + path("sim/logs") + args + path("f1")), 0);
    EXPECT_EQ(io::read_json(path("stdout.txt")).at("skipped"), 3);
    EXPECT_TRUE(fs::exists(victim));
    EXPECT_EQ(io::read_file(dir_ / "f1" / "fits" / "run1__rssl.json"), kept);
    auto h3 = output_hashes(dir_ / "f1");
    h3.erase("fit_manifest.csv");
    EXPECT_EQ(h3, h2);
}

TEST_F(CliTest, SelectAndAnalyzeRun) {
    ASSERT_EQ(run("simulate non_learning --runs 3 --trials 5 --seed 3 --out " + path("sim")), 0);
    ASSERT_EQ(run("fit " + path("sim/logs") + " --budget 2 --optimizer random_search --out " + path("fit")), 0);
    ASSERT_EQ(run("select " + path("fit/fit_manifest.csv") + " --out " + path("sel") + " --mc-draws 2000"), 0);
    for (int level = 1; level <= 3; ++level) EXPECT_TRUE(fs::exists(dir_ / "sel" / ("bms_level" + std::to_string(level) + ".json")));
    EXPECT_TRUE(fs::exists(dir_ / "sel" / "grouping.csv"));
    ASSERT_EQ(run("analyze " + path("sim/logs") + " --fits " + path("fit/fit_manifest.csv") + " --out " + path("an")), 0);
    EXPECT_TRUE(fs::exists(dir_ / "an" / "manifest.json"));
    ASSERT_EQ(run("analyze " + path("sim/curves.csv") + " --out " + path("an2")), 0);
    EXPECT_TRUE(fs::exists(dir_ / "an2" / "trends.csv"));
}

TEST_F(CliTest, CertifyReducedMaze) {
    ASSERT_EQ(run("certify --out " + path("cert")), 0);
    const json rep = io::read_json(dir_ / "cert" / "solver_report.json");
    EXPECT_TRUE(rep.at("rr_conformance").at("all_adaptive"));
    EXPECT_NEAR(rep.at("value").get<double>(), 64.0 / 3, 1e-9);
    EXPECT_LT(std::abs(rep.at("rr_value_gap").get<double>()), 1e-9);
}

TEST_F(CliTest, CatalogExport) {
    ASSERT_EQ(run("catalog --out " + path("cat")), 0);
    const json c = io::read_json(dir_ / "cat" / "feature_catalog.json");
    EXPECT_EQ(c.at("entries").size(), 63u);
    EXPECT_TRUE(fs::exists(dir_ / "cat" / "feature_catalog.csv"));
}
