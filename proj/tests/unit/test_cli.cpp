#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "fbmedm/edm.hpp"
#include "fbmedm/io.hpp"

using namespace fbmedm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("fbmedm_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Outcome run(const std::string& args) const {
        const std::string out = path("stdout.txt"), err = path("stderr.txt");
        const std::string cmd = std::string("cd '") + dir_.string() + "' && '" FBMEDM_CLI "' " + args + " >'" + out +
                                "' 2>'" + err + "'";
        const int status = std::system(cmd.c_str());
        Outcome r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = io::read_file(out);
        r.err = io::read_file(err);
        return r;
    }

    nlohmann::json summary(const Outcome& r) const { return nlohmann::json::parse(r.out); }

    fs::path dir_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& file) {
    std::ifstream in(file);
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

const std::string kModel = std::string(FBMEDM_TEST_DATA) + "/tiny_unet_n8.epsw";

}  // namespace

TEST_F(Cli, GenerateIsDeterministic) {
    ASSERT_EQ(run("--seed 5 generate --hurst 0.5 --n 16 --count 50 --out a.edmd").code, 0);
    ASSERT_EQ(run("--seed 5 generate --hurst 0.5 --n 16 --count 50 --out b.edmd").code, 0);
    ASSERT_EQ(run("--seed 6 generate --hurst 0.5 --n 16 --count 50 --out c.edmd").code, 0);
    EXPECT_EQ(io::read_file(path("a.edmd")), io::read_file(path("b.edmd")));
    EXPECT_NE(io::read_file(path("a.edmd")), io::read_file(path("c.edmd")));
    const io::EdmDataset d = io::read_edmd(path("a.edmd"));
    EXPECT_EQ(d.matrices.size(), 50u);
    EXPECT_EQ(d.matrices[0].size(), 16u);
    EXPECT_EQ(d.hurst, 0.5);
    EXPECT_TRUE(fs::exists(path("a.edmd.config.json")));
}

TEST_F(Cli, UsageErrors) {
    const Outcome r = run("generate --hurst 1.5 --out x.edmd");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("hurst"), std::string::npos);
    EXPECT_FALSE(fs::exists(path("x.edmd")));
    EXPECT_NE(run("").code, 0);
    EXPECT_NE(run("complete --in missing.edmd --out y.edmd").code, 0);
}

TEST_F(Cli, SidecarReplaysTheRun) {
    ASSERT_EQ(run("--seed 9 generate --hurst 0.4 --n 8 --count 5 --out a.edmd").code, 0);
    fs::copy_file(path("a.edmd.config.json"), path("replay.json"));
    // the sidecar names the output; point it elsewhere from the command line
    ASSERT_EQ(run("--config replay.json generate --out b.edmd").code, 0);
    EXPECT_EQ(io::read_file(path("a.edmd")), io::read_file(path("b.edmd")));
}

TEST_F(Cli, FistaOnAllKnownJson) {
    const auto m = DistanceMatrix::from_rows({{0, 1, 4}, {1, 0, 1}, {4, 1, 0}});
    io::write_file_atomic(path("m.json"), io::matrix_to_json(m));
    const Outcome r = run("complete --method fista --in m.json --out out.json");
    ASSERT_EQ(r.code, 0) << r.err;
    const MaskedMatrix back = io::matrix_from_json(io::read_file(path("out.json")));
    EXPECT_EQ(back.matrix, m);
}

TEST_F(Cli, MaskAndComplete) {
    ASSERT_EQ(run("--seed 1 generate --n 12 --count 4 --out a.edmd").code, 0);
    ASSERT_EQ(run("--seed 2 mask --in a.edmd --mu 0.3 --out a.mask").code, 0);
    const auto masks = io::read_masks(path("a.mask"));
    ASSERT_EQ(masks.size(), 4u);
    const Outcome r = run("complete --method nn --in a.edmd --mask a.mask --out done.edmd");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto truth = io::read_edmd(path("a.edmd"));
    const auto done = io::read_edmd(path("done.edmd"));
    ASSERT_EQ(done.matrices.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 12; ++j)
                if (masks[k].known(i, j)) EXPECT_EQ(done.matrices[k](i, j), truth.matrices[k](i, j));
}

TEST_F(Cli, SampleWritesMatricesAndSidecar) {
    const Outcome r = run("--seed 3 sample --model '" + kModel + "' --count 10 --steps 10 --out s.edmd");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto d = io::read_edmd(path("s.edmd"));
    ASSERT_EQ(d.matrices.size(), 10u);
    EXPECT_EQ(d.matrices[0].size(), 8u);
    for (const auto& m : d.matrices) EXPECT_TRUE(validate_edm(m, {.check_triangle = false}).ok());
    const auto side = nlohmann::json::parse(io::read_file(path("s.edmd.config.json")));
    EXPECT_EQ(side.at("sample").at("count"), "10");
    EXPECT_EQ(side.at("seed"), "3");
    EXPECT_EQ(run("model --model '" + kModel + "'").code, 0);
}

TEST_F(Cli, ScalingMetric) {
    ASSERT_EQ(run("--seed 4 generate --hurst 0.3333333333333333 --n 64 --count 300 --out g.edmd").code, 0);
    const Outcome r = run("metrics --metric scaling --in g.edmd");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(summary(r).at("hurst").get<double>(), 1.0 / 3.0, 0.02);
}

TEST_F(Cli, SweepMonotoneEdgesAndResume) {
    ASSERT_EQ(run("--seed 2 generate --n 16 --count 20 --out s.edmd").code, 0);
    Outcome r = run("sweep --in s.edmd --mu 0.1 0.5 0.9 --methods fista --rigid-trials 20 --out sw.csv");
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = read_csv(path("sw.csv"));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0][0], "mu");
    std::vector<double> rmse;
    for (std::size_t k = 1; k < rows.size(); ++k) rmse.push_back(std::stod(rows[k][2]));
    EXPECT_LE(rmse[0], rmse[1]);
    EXPECT_LE(rmse[1], rmse[2]);

    r = run("sweep --in s.edmd --mu 0.1 0.5 0.9 --methods fista nn --rigid-trials 20 --out sw.csv");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(summary(r).at("skipped"), 3);
    EXPECT_EQ(summary(r).at("computed"), 3);
    EXPECT_EQ(read_csv(path("sw.csv")).size(), 7u);

    r = run("sweep --in s.edmd --mu 0 1 --methods nn --rigid-trials 5 --out edge.csv");
    ASSERT_EQ(r.code, 0) << r.err;
    rows = read_csv(path("edge.csv"));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(std::stod(rows[1][2]), 0.0);
    EXPECT_EQ(std::stod(rows[1][7]), 1.0);
    EXPECT_TRUE(std::isnan(std::stod(rows[2][2])));
    EXPECT_EQ(std::stod(rows[2][7]), 0.0);
}

TEST_F(Cli, RigidityFraction) {
    const Outcome r = run("--seed 1 rigidity --n 32 --mu 0 --trials 10");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(summary(r).at("rigid_fraction").get<double>(), 1.0);
}
