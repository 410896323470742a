#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "fbmedm/complete.hpp"
#include "fbmedm/fbm.hpp"
#include "fbmedm/fish.hpp"
#include "fbmedm/io.hpp"
#include "fbmedm/unet.hpp"

using namespace fbmedm;

namespace {

std::string cell373() { return io::read_file(std::string(FBMEDM_TEST_DATA) + "/cell373.csv"); }

// Synthetic table: fBm cells in nm with the given absent probes.
std::string synthetic_table(std::size_t cells, std::size_t n, const std::set<std::size_t>& absent, std::uint64_t seed,
                            char sep = ',') {
    FbmParams p;
    p.hurst = 1.0 / 3.0;
    p.n_points = n;
    std::ostringstream s;
    s << "Segment Index" << sep << "Chromosome Index" << sep << "n" << sep << "Z" << sep << "X" << sep << "Y\n";
    const auto traj = generate_fbm(p, cells, seed);
    for (std::size_t c = 0; c < cells; ++c)
        for (std::size_t i = 0; i < n; ++i) {
            s << c * n + i << sep << 100 + c << sep << i + 1;
            for (std::size_t k = 0; k < 3; ++k) {
                s << sep;
                if (absent.count(i))
                    s << "nan";
                else
                    s << 200.0 * traj[c].at(i, k);
            }
            s << "\n";
        }
    return s.str();
}

}  // namespace

TEST(ParseFish, Cell373) {
    const auto cells = parse_fish_table(cell373());
    ASSERT_EQ(cells.size(), 1u);
    const FishCell& c = cells.front();
    EXPECT_EQ(c.chromosome_index, 373);
    EXPECT_EQ(c.size(), 65u);
    EXPECT_EQ(c.absent(), 15u);
    EXPECT_EQ(c.probes[0].index, 1u);
    EXPECT_EQ(c.probes[0].position, (std::array<double, 3>{8482, 129943, 64040}));
    const MaskedMatrix mm = cell_to_masked_edm(c);
    const auto absent = c.absent_indices();
    const std::set<std::size_t> gone(absent.begin(), absent.end());
    for (std::size_t i = 0; i < 65; ++i)
        for (std::size_t j = 0; j < 65; ++j)
            EXPECT_EQ(mm.known(i, j), i != j && !gone.count(i) && !gone.count(j));
    EXPECT_EQ(select_cells(cells, 15).size(), 1u);
    EXPECT_TRUE(select_cells(cells, 14).empty());
}

TEST(ParseFish, EmptyHeaderOnlyAndTabs) {
    EXPECT_TRUE(parse_fish_table("").empty());
    EXPECT_TRUE(parse_fish_table("Segment Index,Chromosome Index,n,Z,X,Y\n").empty());
    const auto comma = parse_fish_table(synthetic_table(3, 6, {2}, 1));
    const auto tab = parse_fish_table(synthetic_table(3, 6, {2}, 1, '\t'));
    ASSERT_EQ(tab.size(), 3u);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(tab[c].probes[i].position, comma[c].probes[i].position);
    EXPECT_EQ(tab[1].absent_indices(), (std::vector<std::size_t>{2}));
    std::istringstream in("1,7,1,0,0,0\n2,7,2,0,0,100\n");
    EXPECT_EQ(parse_fish_table(in).size(), 1u);
}

TEST(ParseFish, RowsReorderedWithinCell) {
    const auto cells = parse_fish_table("1,5,2,0,0,1\n2,5,1,0,0,0\n3,5,3,0,0,3\n");
    ASSERT_EQ(cells[0].size(), 3u);
    EXPECT_EQ(cells[0].probes[0].position[2], 0.0);
    EXPECT_EQ(cells[0].probes[1].position[2], 1.0);
}

TEST(ParseFish, Errors) {
    try {
        parse_fish_table("a,b,n,Z,X,Y\n1,5,1,0,0,0\n1,5,2,0,0\n");
        FAIL() << "expected a parse error";
    } catch (const FishParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(parse_fish_table("1,5,1,0,nan,0\n"), FishParseError);
    EXPECT_THROW(parse_fish_table("1,5,1,0,0,0\n2,5,3,0,0,0\n"), FishParseError);
    EXPECT_THROW(parse_fish_table("1,5,1,0,0,0\n2,5,x,0,0,0\n"), FishParseError);
    EXPECT_THROW(parse_fish_table("1,5,1,0,0,0\n2,5,2,0,zz,0\n"), FishParseError);
}

TEST(CellToEdm, Examples) {
    const auto cells = parse_fish_table("1,5,1,0,0,0\n2,5,2,0,0,100\n");
    const MaskedMatrix mm = cell_to_masked_edm(cells[0]);
    EXPECT_EQ(mm.matrix(0, 1), 1e4);
    EXPECT_TRUE(mm.known(0, 1));
    const auto full = parse_fish_table(synthetic_table(1, 7, {}, 2));
    EXPECT_EQ(cell_to_masked_edm(full[0]).mask, Mask::all_known(7));
    const auto sparse = parse_fish_table("1,5,1,0,0,0\n2,5,2,nan,nan,nan\n");
    EXPECT_THROW(cell_to_masked_edm(sparse[0]), std::invalid_argument);
}

TEST(SelectCells, CountsAbsentProbes) {
    const auto a = parse_fish_table(synthetic_table(4, 8, {}, 3));
    const auto b = parse_fish_table(synthetic_table(3, 8, {1, 5}, 4));
    std::vector<FishCell> mixed = a;
    mixed.insert(mixed.end(), b.begin(), b.end());
    EXPECT_EQ(select_cells(mixed, 0).size(), 4u);
    EXPECT_EQ(select_cells(mixed, 2).size(), 3u);
    EXPECT_TRUE(select_cells(mixed, 1).empty());
}

TEST(Drop, Examples) {
    const MaskedMatrix mm = cell_to_masked_edm(parse_fish_table(cell373()).front());
    const DropResult none = drop_additional(mm, 0, 1);
    EXPECT_EQ(none.masked.mask, mm.mask);
    EXPECT_EQ(none.eval.missing_pairs(), 65u * 64u / 2u);

    const DropResult d = drop_additional(mm, 10, 1);
    EXPECT_EQ(d.dropped.size(), 10u);
    EXPECT_TRUE(std::is_sorted(d.dropped.begin(), d.dropped.end()));
    EXPECT_NEAR(d.masked.mask.missing_ratio(), 0.63, 0.01);
    std::size_t eval = 0;
    for (std::size_t i = 0; i < 65; ++i)
        for (std::size_t j = 0; j < 65; ++j)
            if (d.eval.known(i, j)) {
                EXPECT_TRUE(mm.known(i, j));
                EXPECT_FALSE(d.masked.known(i, j));
                ++eval;
            }
    // 10 dropped rows among 50 present: 10*49 - 45 pairs
    EXPECT_EQ(eval, 2u * (10u * 49u - 45u));
    EXPECT_EQ(drop_additional(mm, 10, 1).dropped, d.dropped);
    EXPECT_THROW(drop_additional(mm, 49, 1), std::invalid_argument);

    const std::vector<std::size_t> rows{3, 3};
    EXPECT_THROW(drop_rows(mm, rows), std::invalid_argument);
    const std::vector<std::size_t> far{65};
    EXPECT_THROW(drop_rows(mm, far), std::invalid_argument);
}

TEST(Impute, NearestNeighbourAndEnsemble) {
    const auto cells = parse_fish_table(synthetic_table(20, 16, {4}, 5));
    ImputeConfig cfg;
    cfg.drop = 3;
    cfg.seed = 9;
    const ImputeSummary nn = impute_cells(cells, cfg);
    ASSERT_EQ(nn.cells.size(), 20u);
    EXPECT_GT(nn.rmse.mean, 0.0);
    EXPECT_GT(nn.step_scale, 0.0);
    for (const CellReport& r : nn.cells) {
        EXPECT_EQ(r.dropped.size(), 3u);
        EXPECT_TRUE(validate_edm(r.completed, {.check_triangle = false}).ok());
    }
    cfg.method = FishMethod::ensemble_mean;
    const ImputeSummary mean = impute_cells(cells, cfg);
    EXPECT_EQ(mean.cells[0].dropped, nn.cells[0].dropped);
    EXPECT_TRUE(impute_cells(std::vector<FishCell>{}, cfg).cells.empty());

    cfg.method = FishMethod::ddrm;
    EXPECT_THROW(impute_cells(cells, cfg), std::invalid_argument);
}

TEST(Impute, SelfReferenceFallsBackToNearestNeighbour) {
    const auto cells = parse_fish_table(synthetic_table(1, 10, {}, 6));
    ImputeConfig cfg;
    cfg.method = FishMethod::ensemble_mean;
    cfg.drop = 2;
    const ImputeSummary s = impute_cells(cells, cfg);
    const CellReport& r = s.cells[0];
    EXPECT_EQ(r.fallback_entries, 2u * 8u + 1u);
    const DropResult d = drop_additional(cell_to_masked_edm(cells[0]), 2, 0);
    EXPECT_EQ(r.completed, nn_complete(d.masked).completed);
}

TEST(Impute, DiffusionCropsToModelSize) {
    const LoadedModel lm = load_predictor(std::string(FBMEDM_TEST_DATA) + "/tiny_unet_n8.epsw");
    FishModel model{lm.predictor.get(), &lm.schedule, lm.normalization};
    const auto cells = parse_fish_table(synthetic_table(2, 12, {}, 7));
    ImputeConfig cfg;
    cfg.method = FishMethod::ddnm;
    cfg.drop = 2;
    cfg.sampler.steps = 5;
    const ImputeSummary s = impute_cells(cells, cfg, &model);
    EXPECT_EQ(s.model_n, 8u);
    for (const CellReport& r : s.cells) {
        EXPECT_TRUE(std::isfinite(r.rmse_nm));
        EXPECT_TRUE(validate_edm(r.completed, {.check_triangle = false}).ok());
    }
}

TEST(FishScaling, SyntheticSlope) {
    const auto cells = parse_fish_table(synthetic_table(400, 64, {10, 30}, 8));
    const ScalingResult r = fish_scaling(cells);
    EXPECT_NEAR(r.hurst, 1.0 / 3.0, 0.03);
    EXPECT_EQ(r.curve.size(), 63u);
    EXPECT_THROW(fish_scaling(std::vector<FishCell>{}), std::invalid_argument);
}

TEST(FishMethods, Names) {
    for (auto m : {FishMethod::nn, FishMethod::ensemble_mean, FishMethod::ddpm, FishMethod::repaint, FishMethod::ddrm,
                   FishMethod::ddnm})
        EXPECT_EQ(parse_fish_method(fish_method_name(m)), m);
    EXPECT_EQ(parse_fish_method("mean"), FishMethod::ensemble_mean);
    EXPECT_THROW(parse_fish_method("knn"), std::invalid_argument);
}
