#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "fbmedm/edm.hpp"
#include "fbmedm/fbm.hpp"
#include "fbmedm/metrics.hpp"
#include "fbmedm/rng.hpp"

using namespace fbmedm;

namespace {

std::vector<DistanceMatrix> fbm_ensemble(double h, std::size_t n, std::size_t count, std::uint64_t seed) {
    FbmParams p;
    p.hurst = h;
    p.n_points = n;
    std::vector<DistanceMatrix> out;
    for (const auto& t : generate_fbm(p, count, seed)) out.push_back(edm_from_trajectory(t));
    return out;
}

Eigen::MatrixXd random_spd(Eigen::Index d, RandomStream& rs) {
    Eigen::MatrixXd a(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rs.normal();
    return a * a.transpose() / double(d) + 0.05 * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

TEST(RmseMasked, Examples) {
    const auto m = fbm_ensemble(0.5, 6, 1, 1).front();
    const Mask b = random_mask(6, 0.5, 3);
    EXPECT_EQ(rmse_masked(m, m, b), 0.0);

    DistanceMatrix a(2, false), t(2, false);
    a(0, 1) = a(1, 0) = 3.0;
    t(0, 1) = t(1, 0) = 7.0;
    EXPECT_DOUBLE_EQ(rmse_masked(a, t, Mask(2)), 4.0);
    // squared storage is compared in raw units
    EXPECT_DOUBLE_EQ(rmse_masked(a.to_squared(), t.to_squared(), Mask(2)), 4.0);
    EXPECT_THROW(rmse_masked(a, t, Mask::all_known(2)), std::invalid_argument);
    EXPECT_THROW(rmse_masked(a, t, Mask(3)), std::invalid_argument);
}

TEST(RmseMasked, BruteForceAndPermutation) {
    RandomStream rs(2, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto e = fbm_ensemble(0.4, 9, 2, 10 + trial);
        Mask b = random_mask(9, 0.4, trial);
        if (b.missing_pairs() == 0) b.set(0, 1, false);
        double s = 0.0;
        int c = 0;
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 9; ++j)
                if (i != j && !b.known(i, j)) {
                    const double d = std::sqrt(e[0](i, j)) - std::sqrt(e[1](i, j));
                    s += d * d;
                    ++c;
                }
        const double r = rmse_masked(e[0], e[1], b);
        EXPECT_NEAR(r, std::sqrt(s / c), 1e-12);

        std::vector<std::size_t> perm(9);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rs);
        DistanceMatrix p0(9), p1(9);
        Mask pb(9);
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 9; ++j) {
                p0(perm[i], perm[j]) = e[0](i, j);
                p1(perm[i], perm[j]) = e[1](i, j);
                if (i != j) pb.set(perm[i], perm[j], b.known(i, j));
            }
        EXPECT_NEAR(rmse_masked(p0, p1, pb), r, 1e-12);
    }
}

TEST(RmseSelected, CountsSelectedEntries) {
    DistanceMatrix a(3, false), t(3, false);
    a(0, 1) = a(1, 0) = 1.0;
    a(1, 2) = a(2, 1) = 10.0;
    Mask sel(3);
    sel.set(0, 1, true);
    EXPECT_DOUBLE_EQ(rmse_selected(a, t, sel), 1.0);
    EXPECT_THROW(rmse_selected(a, t, Mask(3)), std::invalid_argument);
}

TEST(MeanError, Values) {
    const std::vector<double> v{1, 2, 3, 4};
    const MeanError e = mean_error(v);
    EXPECT_DOUBLE_EQ(e.mean, 2.5);
    EXPECT_NEAR(e.error, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}

TEST(Frechet, ClosedForms) {
    Eigen::VectorXd m0(1), m1(1);
    m0 << 0.0;
    m1 << 1.0;
    const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
    EXPECT_NEAR(frechet_distance(m0, one, m1, one), 1.0, 1e-12);
    // N(0,1) vs N(0,4): (1 - 2)^2
    EXPECT_NEAR(frechet_distance(m0, one, m0, 4.0 * one), 1.0, 1e-12);
    EXPECT_THROW(frechet_distance(m0, one, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)),
                 std::invalid_argument);
    Eigen::MatrixXd neg = -one;
    EXPECT_THROW(frechet_distance(m0, neg, m0, one), CovarianceSqrtError);
}

TEST(Frechet, MatchesSpectralOracle) {
    RandomStream rs(4, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd s1 = random_spd(5, rs), s2 = random_spd(5, rs);
        Eigen::VectorXd m1(5), m2(5);
        for (int k = 0; k < 5; ++k) m1(k) = rs.normal(), m2(k) = rs.normal();
        // Tr (S1 S2)^{1/2} from the eigenvalues of the non-symmetric product
        const Eigen::EigenSolver<Eigen::MatrixXd> es(s1 * s2);
        double tr = 0.0;
        for (int k = 0; k < 5; ++k) tr += std::sqrt(es.eigenvalues()(k)).real();
        const double expect = (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr;
        EXPECT_NEAR(frechet_distance(m1, s1, m2, s2), expect, 1e-8);
        EXPECT_NEAR(frechet_distance(m1, s1, m2, s2), frechet_distance(m2, s2, m1, s1), 1e-10);
    }
}

TEST(Frechet, Ensembles) {
    const auto a = fbm_ensemble(0.5, 5, 200, 1);
    const auto b = fbm_ensemble(0.7, 5, 200, 2);
    const EnsembleEmbedding id = identity_embedding(5);
    EXPECT_NEAR(frechet_distance(a, a, id), 0.0, 1e-8);
    const double ab = frechet_distance(a, b, id);
    EXPECT_GT(ab, 0.1);
    EXPECT_NEAR(ab, frechet_distance(b, a, id), 1e-9 * ab);
    const EnsembleEmbedding pca = fit_pca(a, 4);
    EXPECT_NEAR(frechet_distance(a, a, pca), 0.0, 1e-8);

    const MeanError s1 = frechet_distance_subsampled(a, b, id, 3, 20);
    const MeanError s2 = frechet_distance_subsampled(a, b, id, 3, 20);
    EXPECT_EQ(s1.mean, s2.mean);
    EXPECT_GT(s1.error, 0.0);
    EXPECT_NEAR(s1.mean, ab, 0.5 * ab);
    EXPECT_THROW(frechet_distance_subsampled(a, b, id, 3, 1), std::invalid_argument);
    const std::vector<DistanceMatrix> one{a[0]};
    EXPECT_THROW(frechet_distance(one, b, id), std::invalid_argument);
}

TEST(Embedding, IdentityAndPca) {
    const auto m = DistanceMatrix::from_rows({{0, 1, 4}, {1, 0, 9}, {4, 9, 0}});
    const Eigen::VectorXd v = identity_embedding(3).apply(m);
    ASSERT_EQ(v.size(), 3);
    EXPECT_EQ(v(0), 1.0);
    EXPECT_EQ(v(1), 4.0);
    EXPECT_EQ(v(2), 9.0);
    EXPECT_THROW(identity_embedding(4).apply(m), std::invalid_argument);

    const auto e = fbm_ensemble(0.5, 8, 100, 5);
    const EnsembleEmbedding p = fit_pca(e, 6);
    EXPECT_EQ(p.output_dim(), 6u);
    EXPECT_LT((p.basis * p.basis.transpose() - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_THROW(fit_pca(e, 29), std::invalid_argument);
}

TEST(Scaling, BallisticLine) {
    Trajectory t(10, 3);
    for (std::size_t i = 0; i < 10; ++i) t.at(i, 0) = double(i);
    const std::vector<DistanceMatrix> e{edm_from_trajectory(t)};
    const ScalingResult r = scaling_exponent(e, 1, 9);
    EXPECT_NEAR(r.hurst, 1.0, 1e-12);
    ASSERT_EQ(r.curve.size(), 9u);
    EXPECT_EQ(r.curve[2].first, 3.0);
    EXPECT_NEAR(r.curve[2].second, 3.0, 1e-12);
}

TEST(Scaling, FbmEnsembles) {
    for (double h : {1.0 / 3.0, 0.5}) {
        const ScalingResult r = scaling_exponent(fbm_ensemble(h, 64, 1000, 6));
        EXPECT_NEAR(r.hurst, h, 0.02);
    }
    EXPECT_THROW(scaling_exponent(std::vector<DistanceMatrix>{}), std::invalid_argument);
    const std::vector<std::pair<double, double>> pts{{1, 2}, {2, 8}, {4, 32}};
    EXPECT_NEAR(log_log_slope(pts), 2.0, 1e-12);
}

TEST(Collapse, FbmPassesAndInflatedFails) {
    const auto e = fbm_ensemble(1.0 / 3.0, 32, 2000, 7);
    const std::vector<std::size_t> s{2, 8, 16};
    for (const CollapseResult& c : gaussian_collapse(e, s)) {
        EXPECT_TRUE(c.pass) << "s=" << c.s << " ks=" << c.ks;
        EXPECT_EQ(c.samples, 2000u);
    }
    // double the variance at s = 8 against the theoretical reference
    std::vector<DistanceMatrix> inflated = e;
    for (auto& m : inflated)
        for (std::size_t i = 0; i + 8 < 32; ++i) {
            m(i, i + 8) *= 2.0;
            m(i + 8, i) *= 2.0;
        }
    FbmParams p;
    p.hurst = 1.0 / 3.0;
    std::vector<double> ref;
    for (std::size_t v : s) ref.push_back(msd(double(v), p));
    const auto r = gaussian_collapse(inflated, s, 3, ref);
    EXPECT_TRUE(r[0].pass);
    EXPECT_FALSE(r[1].pass);
    EXPECT_TRUE(r[2].pass);
    EXPECT_TRUE(gaussian_collapse(e, std::vector<std::size_t>{}).empty());
    EXPECT_THROW(gaussian_collapse(e, std::vector<std::size_t>{32}), std::invalid_argument);
}

TEST(FidFit, RecoversSyntheticLaw) {
    std::vector<FidPoint> pts;
    for (double m : {1e3, 5e3, 2e4, 1e5})
        for (double mu : {0.1, 0.3, 0.6, 0.9}) pts.push_back({m, mu, std::exp(2.0) * std::pow(mu, 1.41) * std::pow(m, -0.026)});
    const FidScalingFit f = fid_scaling_fit(pts, FidReference{0.5, 0.25});
    EXPECT_NEAR(f.a, 1.41, 1e-6);
    EXPECT_NEAR(f.gamma, 0.026, 1e-6);
    EXPECT_NEAR(f.log_c, 2.0, 1e-6);
    EXPECT_LT(f.max_residual, 1e-9);
    ASSERT_TRUE(f.log10_m_star.has_value());
    const double ln_m = (1.41 * std::log(0.25) + 2.0 - std::log(0.5)) / 0.026;
    EXPECT_NEAR(*f.log10_m_star, ln_m / std::log(10.0), 1e-4);
}

TEST(FidFit, Errors) {
    std::vector<FidPoint> single_mu;
    for (double m : {1e3, 5e3, 2e4, 1e5}) single_mu.push_back({m, 0.5, 1.0 / std::log(m)});
    EXPECT_THROW(fid_scaling_fit(single_mu), std::invalid_argument);
    EXPECT_THROW(fid_scaling_fit(std::vector<FidPoint>(3, {1e3, 0.5, 1.0})), std::invalid_argument);
    std::vector<FidPoint> neg{{1e3, 0.1, 1}, {1e4, 0.2, 1}, {1e3, 0.3, -1}, {1e4, 0.4, 1}};
    EXPECT_THROW(fid_scaling_fit(neg), std::invalid_argument);
}

TEST(MStar, DirectEvaluation) {
    EXPECT_NEAR(theoretical_m_star(2), 1.2325, 1e-4);
    EXPECT_NEAR(theoretical_m_star(64), 77.64, 0.01);
    EXPECT_NEAR(theoretical_m_star(65), 78.88, 0.01);
    EXPECT_THROW(theoretical_m_star(1), std::invalid_argument);
}
