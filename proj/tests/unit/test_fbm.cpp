#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fbmedm/fbm.hpp"

using namespace fbmedm;

namespace {

FbmParams params(double h, std::size_t n, std::size_t dim = 3) {
    FbmParams p;
    p.hurst = h;
    p.n_points = n;
    p.dim = dim;
    return p;
}

}  // namespace

TEST(FbmCovariance, Examples) {
    EXPECT_NEAR(fbm_covariance(0.5, 2.0, 3.0), 2.0, 1e-15);
    EXPECT_NEAR(fbm_covariance(1.0 / 3.0, 1.0, 2.0), std::pow(2.0, 2.0 / 3.0) / 2.0, 1e-15);
    EXPECT_NEAR(fbm_covariance(1.0 / 3.0, 1.0, 2.0), 0.7937005259840997, 1e-12);
    for (double h : {0.1, 0.3, 0.7, 0.9})
        for (double s : {0.5, 1.0, 7.0}) EXPECT_NEAR(fbm_covariance(h, s, s), std::pow(s, 2.0 * h), 1e-12);
    EXPECT_EQ(fbm_covariance(0.5, 0.0, 3.0), 0.0);
}

TEST(FbmCovariance, DomainErrors) {
    EXPECT_THROW(fbm_covariance(0.0, 1.0, 1.0), std::domain_error);
    EXPECT_THROW(fbm_covariance(1.0, 1.0, 1.0), std::domain_error);
    EXPECT_THROW(fbm_covariance(0.5, -1.0, 1.0), std::domain_error);
    EXPECT_THROW(fbm_covariance(0.5, 1.0, -1.0), std::domain_error);
}

TEST(FgnAutocovariance, MatchesIncrementsOfCovariance) {
    for (double h : {0.2, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.9}) {
        EXPECT_NEAR(fgn_autocovariance(h, 0), 1.0, 1e-15);
        for (std::size_t k = 1; k < 6; ++k) {
            const double kk = double(k);
            // Cov(B(k+1)-B(k), B(1)-B(0))
            const double direct =
                fbm_covariance(h, kk + 1, 1) - fbm_covariance(h, kk, 1) - fbm_covariance(h, kk + 1, 0) +
                fbm_covariance(h, kk, 0);
            EXPECT_NEAR(fgn_autocovariance(h, k), direct, 1e-12);
        }
    }
    EXPECT_NEAR(fgn_autocovariance(1.0 / 3.0, 1), -0.20629947401590032, 1e-12);
    EXPECT_NEAR(fgn_autocovariance(0.5, 3), 0.0, 1e-15);
}

TEST(DaviesHarte, SpectrumIsNonNegative) {
    for (double h : {0.05, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.95}) {
        const DaviesHarte dh(h, 63);
        EXPECT_EQ(dh.length(), 63u);
        for (double e : dh.eigenvalues()) EXPECT_GE(e, 0.0);
    }
}

TEST(DaviesHarte, RejectsWrongSizes) {
    const DaviesHarte dh(0.5, 8);
    std::vector<double> normals(15), out(8);
    EXPECT_THROW(dh.sample(normals, out), std::invalid_argument);
}

TEST(CirculantEmbeddingError, CarriesIndex) {
    const CirculantEmbeddingError e(5, -0.25);
    EXPECT_EQ(e.index(), 5u);
    EXPECT_EQ(e.eigenvalue(), -0.25);
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos);
}

TEST(GenerateFbm, Shape) {
    const auto t = generate_fbm(params(0.5, 10, 2), 3, 1);
    ASSERT_EQ(t.size(), 3u);
    for (const auto& tr : t) {
        EXPECT_EQ(tr.n_points, 10u);
        EXPECT_EQ(tr.dim, 2u);
        EXPECT_TRUE(tr.finite());
        EXPECT_EQ(tr.at(0, 0), 0.0);
        EXPECT_EQ(tr.at(0, 1), 0.0);
    }
}

TEST(GenerateFbm, ReproducibleAndIndependentOfJobs) {
    const auto p = params(1.0 / 3.0, 32);
    const auto a = generate_fbm(p, 20, 77, 1);
    const auto b = generate_fbm(p, 20, 77, 4);
    const auto c = generate_fbm(p, 20, 78, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].coords, b[i].coords);
        EXPECT_NE(a[i].coords, c[i].coords);
    }
    // Trajectory i only depends on seed ^ i.
    EXPECT_EQ(generate_fbm(p, 1, 77 ^ 5).front().coords, a[5].coords);
}

TEST(GenerateFbm, InvalidParams) {
    EXPECT_THROW(generate_fbm(params(1.5, 8), 1, 0), std::domain_error);
    EXPECT_THROW(generate_fbm(params(0.5, 1), 1, 0), std::domain_error);
    EXPECT_THROW(generate_fbm(params(0.5, 8, 0), 1, 0), std::domain_error);
    auto p = params(0.5, 8);
    p.step_scale = 0.0;
    EXPECT_THROW(generate_fbm(p, 1, 0), std::domain_error);
}

TEST(GenerateFbm, CovarianceMatchesClosedForm) {
    // H=2/3, N=8, 10^5 trajectories; all coordinates pooled per trajectory would
    // be correlated only through time, so each coordinate is its own sample.
    const auto p = params(2.0 / 3.0, 8);
    const std::size_t count = 100000;
    const auto traj = generate_fbm(p, count, 2024);
    const double coord_var = 1.0 / 3.0;  // a^2 / D
    for (std::size_t s = 1; s < 8; ++s) {
        for (std::size_t t = s; t < 8; ++t) {
            double sum = 0.0, sum2 = 0.0;
            std::size_t m = 0;
            for (const auto& tr : traj)
                for (std::size_t k = 0; k < 3; ++k) {
                    const double v = tr.at(s, k) * tr.at(t, k);
                    sum += v;
                    sum2 += v * v;
                    ++m;
                }
            const double mean = sum / double(m);
            const double se = std::sqrt((sum2 / double(m) - mean * mean) / double(m));
            const double expect = coord_var * fbm_covariance(p.hurst, double(s), double(t));
            EXPECT_NEAR(mean, expect, 3.0 * se) << "s=" << s << " t=" << t;
        }
    }
}

TEST(GenerateFbm, MeanIsZero) {
    const auto p = params(0.5, 16);
    const auto traj = generate_fbm(p, 10000, 31);
    for (std::size_t t = 1; t < 16; ++t) {
        double sum = 0.0, sum2 = 0.0;
        for (const auto& tr : traj) {
            sum += tr.at(t, 0);
            sum2 += tr.at(t, 0) * tr.at(t, 0);
        }
        const double m = sum / 1e4;
        const double se = std::sqrt((sum2 / 1e4 - m * m) / 1e4);
        EXPECT_LT(std::abs(m), 3.0 * se) << "t=" << t;
    }
}

TEST(GenerateFbm, MsdScaling) {
    auto p = params(1.0 / 3.0, 64);
    const auto traj = generate_fbm(p, 10000, 5);
    std::vector<double> ls, lx;
    for (std::size_t s = 2; s <= 16; ++s) {
        double sum = 0.0;
        for (const auto& tr : traj)
            for (std::size_t k = 0; k < 3; ++k) sum += tr.at(s, k) * tr.at(s, k);
        ls.push_back(std::log(double(s)));
        lx.push_back(0.5 * std::log(sum / double(traj.size())));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < ls.size(); ++i) mx += ls[i], my += lx[i];
    mx /= double(ls.size());
    my /= double(ls.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < ls.size(); ++i) num += (ls[i] - mx) * (lx[i] - my), den += (ls[i] - mx) * (ls[i] - mx);
    EXPECT_NEAR(num / den, 1.0 / 3.0, 0.02);
}

TEST(GenerateFbm, UnitCoordinateVariance) {
    auto p = params(0.5, 4, 3);
    p.unit_coordinate_variance = true;
    p.step_scale = 2.0;
    EXPECT_NEAR(p.coordinate_scale(), 2.0, 1e-15);
    p.unit_coordinate_variance = false;
    EXPECT_NEAR(p.coordinate_scale(), 2.0 / std::sqrt(3.0), 1e-15);
}

TEST(IncrementAutocorrelation, SignsFollowHurst) {
    const auto half = generate_fbm(params(0.5, 64), 10000, 11);
    const auto sub = generate_fbm(params(1.0 / 3.0, 64), 10000, 12);
    const auto super = generate_fbm(params(2.0 / 3.0, 64), 10000, 13);
    // 10^4 x 62 x 3 increment pairs, correlated in time; a generous bound on the SE
    const double se = 1.0 / std::sqrt(10000.0 * 3.0);
    for (std::size_t lag = 1; lag <= 3; ++lag) EXPECT_NEAR(increment_autocorrelation(half, lag), 0.0, 3.0 * se);
    EXPECT_NEAR(increment_autocorrelation(sub, 1), 0.5 * (std::pow(2.0, 2.0 / 3.0) - 2.0), 3.0 * se);
    EXPECT_LT(increment_autocorrelation(sub, 1), 0.0);
    EXPECT_GT(increment_autocorrelation(super, 1), 0.0);
    EXPECT_NEAR(increment_autocorrelation(super, 0), 1.0, 1e-12);
}

TEST(IncrementAutocorrelation, Errors) {
    EXPECT_THROW(increment_autocorrelation({}, 1), std::invalid_argument);
    const auto t = generate_fbm(params(0.5, 4), 2, 0);
    EXPECT_THROW(increment_autocorrelation(t, 3), std::invalid_argument);
}

TEST(DistancePdf, Examples) {
    const auto p = params(0.5, 64);
    EXPECT_NEAR(distance_pdf(0.0, 1.0, p), std::pow(3.0 / (2.0 * std::numbers::pi), 1.5), 1e-14);
    EXPECT_NEAR(distance_pdf(2.0, 4.0, p), std::pow(3.0 / (8.0 * std::numbers::pi), 1.5) * std::exp(-1.5), 1e-15);
    EXPECT_NEAR(distance_pdf(0.0, 1.0, params(0.2, 8)), 0.3299226101861591, 1e-14);
    EXPECT_THROW(distance_pdf(1.0, 0.0, p), std::domain_error);
    EXPECT_THROW(distance_pdf(-1.0, 1.0, p), std::domain_error);
}

TEST(DistancePdf, NormalizedOverRadius) {
    for (double h : {1.0 / 3.0, 0.5, 2.0 / 3.0}) {
        for (std::size_t dim : {1u, 2u, 3u}) {
            auto p = params(h, 64, dim);
            p.step_scale = 1.7;
            for (double s : {1.0, 4.0, 30.0}) {
                // Simpson's rule; surface measure of the (dim-1)-sphere of radius x
                const double surface = dim == 1 ? 2.0 : dim == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi;
                const double hi = 12.0 * std::sqrt(msd(s, p));
                const int m = 20000;
                const double dx = hi / m;
                double acc = 0.0;
                for (int i = 0; i <= m; ++i) {
                    const double x = i * dx;
                    const double f = distance_pdf(x, s, p) * surface * std::pow(x, double(dim) - 1.0);
                    acc += f * (i == 0 || i == m ? 1.0 : (i % 2 ? 4.0 : 2.0));
                }
                EXPECT_NEAR(acc * dx / 3.0, 1.0, 1e-6) << "H=" << h << " D=" << dim << " s=" << s;
            }
        }
    }
}

TEST(Msd, PowerLaw) {
    auto p = params(2.0 / 3.0, 64);
    p.step_scale = 3.0;
    EXPECT_NEAR(msd(8.0, p), 9.0 * std::pow(8.0, 4.0 / 3.0), 1e-10);
}
