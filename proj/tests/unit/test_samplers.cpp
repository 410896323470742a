#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fbmedm/edm.hpp"
#include "fbmedm/fbm.hpp"
#include "fbmedm/predictor.hpp"
#include "fbmedm/rng.hpp"
#include "fbmedm/samplers.hpp"
#include "fbmedm/schedule.hpp"
#include "gaussian_chain.hpp"

using namespace fbmedm;

namespace {

const NoiseSchedule& trained() {
    static const NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02);
    return s;
}

GaussianEnsembleSpec random_spec(std::size_t n, std::uint64_t seed) {
    const std::size_t d = n * n;
    RandomStream rs(seed, 0);
    Eigen::MatrixXd a(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rs.normal();
    GaussianEnsembleSpec spec;
    spec.n = n;
    spec.cov = a * a.transpose() / double(d) + 0.1 * Eigen::MatrixXd::Identity(d, d);
    spec.mean.resize(d);
    for (Eigen::Index i = 0; i < Eigen::Index(d); ++i) spec.mean(i) = rs.normal();
    return spec;
}

InpaintTarget half_known(const GaussianEnsembleSpec& spec, std::uint64_t seed) {
    const std::size_t d = spec.n * spec.n;
    RandomStream rs(seed, 1);
    InpaintTarget t;
    t.n = spec.n;
    t.y.resize(d);
    t.known.assign(d, 0);
    for (std::size_t k = 0; k < d; ++k) {
        t.y[k] = spec.mean(Eigen::Index(k)) + rs.normal();
        t.known[k] = rs.uniform() < 0.5;
    }
    return t;
}

double worst_z(const ImageBatch& b, const Eigen::VectorXd& expected, const std::vector<std::uint8_t>& skip) {
    double worst = 0.0;
    for (std::size_t i = 0; i < b.n * b.n; ++i) {
        if (!skip.empty() && skip[i]) continue;
        double s = 0.0, s2 = 0.0;
        for (std::size_t c = 0; c < b.count; ++c) s += b.image(c)[i];
        const double m = s / double(b.count);
        for (std::size_t c = 0; c < b.count; ++c) s2 += (b.image(c)[i] - m) * (b.image(c)[i] - m);
        worst = std::max(worst, std::abs(m - expected(Eigen::Index(i))) / std::sqrt(s2 / double(b.count - 1) / double(b.count)));
    }
    return worst;
}

class NanPredictor final : public EpsilonPredictor {
public:
    std::size_t image_size() const override { return 2; }
    void predict(std::span<const double>, std::size_t, std::size_t t, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), t < 500 ? std::numeric_limits<double>::quiet_NaN() : 0.0);
    }
};

}  // namespace

TEST(AnalyticEpsilon, IdentityCovariance) {
    GaussianEnsembleSpec spec;
    spec.n = 2;
    spec.mean = Eigen::VectorXd::Zero(4);
    spec.cov = Eigen::MatrixXd::Identity(4, 4);
    const AnalyticEpsilon model(spec, trained());
    const std::vector<double> x{0.3, -1.2, 2.0, 0.7};
    std::vector<double> out(4);
    for (std::size_t t : {1u, 250u, 1000u}) {
        model.predict(x, 1, t, out);
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out[k], std::sqrt(1.0 - trained().alpha_bar(t)) * x[k], 1e-12);
    }
}

TEST(AnalyticEpsilon, PureNoiseLimit) {
    const GaussianEnsembleSpec spec = random_spec(2, 3);
    const NoiseSchedule s = schedule_from_betas({0.5, 1.0 - 1e-9});
    const AnalyticEpsilon model(spec, s);
    const std::vector<double> x{0.3, -1.2, 2.0, 0.7};
    std::vector<double> out(4);
    model.predict(x, 1, 2, out);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out[k], x[k], 1e-3);
}

TEST(AnalyticEpsilon, MatchesEmpiricalRegression) {
    const std::size_t n = 4, d = 16, pairs = 100000, t = 300;
    const GaussianEnsembleSpec spec = random_spec(n, 5);
    const AnalyticEpsilon model(spec, trained());
    const double ab = trained().alpha_bar(t);
    const Eigen::LLT<Eigen::MatrixXd> llt(spec.cov);
    RandomStream rs(6, 0);
    Eigen::MatrixXd xt(pairs, d + 1), eps(pairs, d);
    for (std::size_t p = 0; p < pairs; ++p) {
        Eigen::VectorXd z(d), e(d);
        for (std::size_t k = 0; k < d; ++k) z(Eigen::Index(k)) = rs.normal(), e(Eigen::Index(k)) = rs.normal();
        const Eigen::VectorXd x0 = spec.mean + llt.matrixL() * z;
        xt.row(Eigen::Index(p)).head(d) = (std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * e).transpose();
        xt(Eigen::Index(p), Eigen::Index(d)) = 1.0;
        eps.row(Eigen::Index(p)) = e.transpose();
    }
    const Eigen::MatrixXd coef = xt.colPivHouseholderQr().solve(eps);
    const Eigen::MatrixXd fitted = xt * coef;
    std::vector<double> flat(pairs * d), analytic(pairs * d);
    for (std::size_t p = 0; p < pairs; ++p)
        for (std::size_t k = 0; k < d; ++k) flat[p * d + k] = xt(Eigen::Index(p), Eigen::Index(k));
    model.predict(flat, pairs, t, analytic);
    double ss_res = 0.0, ss_tot = 0.0, mean = 0.0;
    for (double v : analytic) mean += v;
    mean /= double(analytic.size());
    for (std::size_t p = 0; p < pairs; ++p)
        for (std::size_t k = 0; k < d; ++k) {
            const double a = analytic[p * d + k];
            ss_res += (fitted(Eigen::Index(p), Eigen::Index(k)) - a) * (fitted(Eigen::Index(p), Eigen::Index(k)) - a);
            ss_tot += (a - mean) * (a - mean);
        }
    EXPECT_GT(1.0 - ss_res / ss_tot, 0.999);
}

TEST(AnalyticEpsilon, Validation) {
    GaussianEnsembleSpec spec = random_spec(2, 1);
    spec.cov(0, 0) = -5.0;
    EXPECT_THROW(AnalyticEpsilon(spec, trained()), std::invalid_argument);
    spec = random_spec(2, 1);
    spec.cov(0, 1) += 1.0;
    EXPECT_THROW(spec.validate(), std::invalid_argument);
    spec.mean.resize(3);
    EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(ConditionalMean, TwoPixelExample) {
    GaussianEnsembleSpec spec;
    spec.n = 1;
    spec.mean = Eigen::VectorXd::Zero(1);
    spec.cov = Eigen::MatrixXd::Identity(1, 1);
    // bivariate case via a 2x2 image with a single correlated pair
    spec.n = 2;
    spec.mean = Eigen::VectorXd::Constant(4, 1.0);
    spec.cov = Eigen::MatrixXd::Identity(4, 4);
    spec.cov(0, 1) = spec.cov(1, 0) = 0.5;
    const std::vector<double> y{3.0, 0.0, 0.0, 0.0};
    const std::vector<std::uint8_t> known{1, 0, 0, 0};
    const Eigen::VectorXd m = spec.conditional_mean(y, known);
    EXPECT_DOUBLE_EQ(m(0), 3.0);
    EXPECT_NEAR(m(1), 1.0 + 0.5 * 2.0, 1e-12);
    EXPECT_NEAR(m(2), 1.0, 1e-12);
}

TEST(DdpmSample, MomentsMatchExactChain) {
    const GaussianEnsembleSpec spec = random_spec(3, 7);
    const AnalyticEpsilon model(spec, trained());
    SamplerConfig cfg;
    cfg.steps = 50;
    const ImageBatch b = ddpm_sample(model, trained(), 4000, 11, cfg);
    EXPECT_EQ(b.count, 4000u);
    EXPECT_EQ(b.n, 3u);
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    fbmedm::testing::GaussianChain(spec, trained(), cfg.steps).sample_moments(cfg.variance, mean, cov);
    EXPECT_LT(worst_z(b, mean, {}), 4.0);
    // the chain's mean is close to the data mean
    EXPECT_LT((mean - spec.mean).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Inpaint, MeansMatchExactChain) {
    const GaussianEnsembleSpec spec = random_spec(3, 8);
    const AnalyticEpsilon model(spec, trained());
    const InpaintTarget y = half_known(spec, 8);
    SamplerConfig cfg;
    cfg.steps = 40;
    cfg.repaint_resamples = 3;
    const fbmedm::testing::GaussianChain chain(spec, trained(), cfg.steps);
    for (InpaintMethod m : {InpaintMethod::ddpm, InpaintMethod::repaint, InpaintMethod::ddrm, InpaintMethod::ddnm}) {
        const ImageBatch out = inpaint(m, model, trained(), y, 3000, cfg, 21);
        EXPECT_LT(worst_z(out, chain.inpaint_mean(m, y, cfg), y.known), 4.0) << inpaint_method_name(m);
    }
}

TEST(Inpaint, KnownPixelsExactAndAllKnownReturnsY) {
    const GaussianEnsembleSpec spec = random_spec(3, 9);
    const AnalyticEpsilon model(spec, trained());
    InpaintTarget y = half_known(spec, 9);
    SamplerConfig cfg;
    cfg.steps = 20;
    for (InpaintMethod m : {InpaintMethod::ddpm, InpaintMethod::repaint, InpaintMethod::ddrm, InpaintMethod::ddnm}) {
        const ImageBatch out = inpaint(m, model, trained(), y, 5, cfg, 1);
        for (std::size_t c = 0; c < 5; ++c)
            for (std::size_t k = 0; k < 9; ++k)
                if (y.known[k]) ASSERT_EQ(out.image(c)[k], y.y[k]) << inpaint_method_name(m);
    }
    y.known.assign(9, 1);
    for (InpaintMethod m : {InpaintMethod::ddpm, InpaintMethod::repaint, InpaintMethod::ddrm, InpaintMethod::ddnm}) {
        const ImageBatch out = inpaint(m, model, trained(), y, 2, cfg, 1);
        for (std::size_t k = 0; k < 9; ++k) ASSERT_EQ(out.image(1)[k], y.y[k]);
    }
}

TEST(Inpaint, RepaintWithOneResampleIsDdpm) {
    const GaussianEnsembleSpec spec = random_spec(3, 10);
    const AnalyticEpsilon model(spec, trained());
    const InpaintTarget y = half_known(spec, 10);
    SamplerConfig cfg;
    cfg.steps = 30;
    cfg.repaint_resamples = 1;
    EXPECT_EQ(repaint_inpaint(model, trained(), y, 8, cfg, 3).data, ddpm_inpaint(model, trained(), y, 8, cfg, 3).data);
}

TEST(Inpaint, NoKnownPixelsMatchesUnconditionalMoments) {
    const GaussianEnsembleSpec spec = random_spec(2, 12);
    const AnalyticEpsilon model(spec, trained());
    InpaintTarget y;
    y.n = 2;
    y.y.assign(4, 0.0);
    y.known.assign(4, 0);
    SamplerConfig cfg;
    cfg.steps = 30;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    fbmedm::testing::GaussianChain(spec, trained(), cfg.steps).sample_moments(cfg.variance, mean, cov);
    EXPECT_LT(worst_z(ddpm_inpaint(model, trained(), y, 4000, cfg, 5), mean, {}), 4.0);
}

TEST(Samplers, DeterministicAcrossBatchAndJobs) {
    const GaussianEnsembleSpec spec = random_spec(3, 13);
    const AnalyticEpsilon model(spec, trained());
    const InpaintTarget y = half_known(spec, 13);
    SamplerConfig a;
    a.steps = 20;
    SamplerConfig b = a;
    b.batch = 3;
    b.jobs = 2;
    EXPECT_EQ(ddpm_sample(model, trained(), 10, 4, a).data, ddpm_sample(model, trained(), 10, 4, b).data);
    EXPECT_NE(ddpm_sample(model, trained(), 10, 4, a).data, ddpm_sample(model, trained(), 10, 5, a).data);
    for (InpaintMethod m : {InpaintMethod::ddpm, InpaintMethod::repaint, InpaintMethod::ddrm, InpaintMethod::ddnm}) {
        const ImageBatch x = inpaint(m, model, trained(), y, 10, a, 4);
        EXPECT_EQ(x.data, inpaint(m, model, trained(), y, 10, a, 4).data);
        EXPECT_EQ(x.data, inpaint(m, model, trained(), y, 10, b, 4).data) << inpaint_method_name(m);
        // chain c does not depend on how many chains run
        const ImageBatch first = inpaint(m, model, trained(), y, 3, a, 4);
        EXPECT_TRUE(std::equal(first.data.begin(), first.data.end(), x.data.begin()));
    }
}

TEST(Samplers, NonFiniteIsReported) {
    const NanPredictor model;
    SamplerConfig cfg;
    cfg.steps = 10;
    try {
        ddpm_sample(model, trained(), 2, 1, cfg);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_GE(e.step(), 1u);
        EXPECT_LE(e.step(), 10u);
    }
}

TEST(Samplers, Validation) {
    const GaussianEnsembleSpec spec = random_spec(2, 14);
    const AnalyticEpsilon model(spec, trained());
    SamplerConfig cfg;
    cfg.ddrm_eta = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.repaint_resamples = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    InpaintTarget y;
    y.n = 3;
    y.y.assign(9, 0.0);
    y.known.assign(9, 0);
    EXPECT_THROW(ddpm_inpaint(model, trained(), y, 1, {}, 0), std::invalid_argument);
    y.n = 2;
    y.y.assign(4, std::nan(""));
    y.known.assign(4, 1);
    EXPECT_THROW(y.validate(), std::invalid_argument);
    EXPECT_THROW(parse_inpaint_method("ddim"), std::invalid_argument);
    for (InpaintMethod m : {InpaintMethod::ddpm, InpaintMethod::repaint, InpaintMethod::ddrm, InpaintMethod::ddnm})
        EXPECT_EQ(parse_inpaint_method(inpaint_method_name(m)), m);
}

TEST(DdnmPath, PlainChainWithoutTravel) {
    EXPECT_EQ(ddnm_path(5, 1, 1), (std::vector<std::size_t>{5, 4, 3, 2, 1, 0}));
    EXPECT_EQ(ddnm_path(5, 3, 1), (std::vector<std::size_t>{5, 4, 3, 2, 1, 0}));
}

TEST(DdnmPath, TimeTravel) {
    const std::vector<std::size_t> expect{10, 9, 8, 7, 8, 9, 10, 9, 8, 7, 8, 9, 10, 9, 8, 7,  // jumps at 7
                                          6,  5, 4, 5, 6, 7, 6, 5, 4, 5, 6, 7, 6, 5, 4,      // jumps at 4
                                          3,  2, 1, 2, 3, 4, 3, 2, 1, 2, 3, 4, 3, 2, 1, 0};  // jumps at 1
    EXPECT_EQ(ddnm_path(10, 3, 3), expect);
    EXPECT_THROW(ddnm_path(0, 1, 1), std::invalid_argument);
}

TEST(Postprocess, ValidEdmUnchanged) {
    FbmParams p;
    p.n_points = 6;
    const DistanceMatrix m = edm_from_trajectory(generate_fbm(p, 1, 2).front());
    NormalizationSpec norm;
    norm.mu = 2.0;
    norm.sigma = 1.5;
    norm.step_scale = 0.5;
    norm.n = 6;
    std::vector<double> raw(36);
    for (std::size_t k = 0; k < 36; ++k) raw[k] = norm.to_image(m.entries()[k]);
    const PostprocessReport r = postprocess_edm(raw, 6, norm);
    for (std::size_t k = 0; k < 36; ++k) EXPECT_NEAR(r.matrix.entries()[k], m.entries()[k], 1e-12);
    EXPECT_LT(r.max_asymmetry, 1e-12);
    EXPECT_EQ(r.max_clipped, 0.0);
}

TEST(Postprocess, AsymmetricAndNegative) {
    NormalizationSpec norm;
    const std::vector<double> raw{5, 1, -3, 3, 5, 2, -1, 2, 5};
    const PostprocessReport r = postprocess_edm(raw, 3, norm);
    EXPECT_EQ(r.matrix(0, 1), 2.0);
    EXPECT_EQ(r.matrix(1, 0), 2.0);
    EXPECT_EQ(r.matrix(0, 2), 0.0);
    EXPECT_EQ(r.matrix(1, 1), 0.0);
    EXPECT_DOUBLE_EQ(r.max_asymmetry, 2.0);
    EXPECT_DOUBLE_EQ(r.max_clipped, 2.0);
    EXPECT_THROW(postprocess_edm(raw, 2, norm), std::invalid_argument);
}

TEST(Postprocess, RandomImagesAreSymmetricHollowNonNegative) {
    RandomStream rs(3, 0);
    NormalizationSpec norm;
    norm.mu = 1.0;
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> raw(25);
        rs.fill_normal(raw);
        const auto v = validate_edm(postprocess_edm(raw, 5, norm).matrix);
        ASSERT_TRUE(v.symmetric && v.hollow && v.nonnegative);
    }
}

TEST(InpaintEdm, TargetAndKnownEntries) {
    FbmParams p;
    p.n_points = 4;
    const DistanceMatrix m = edm_from_trajectory(generate_fbm(p, 1, 3).front());
    const Mask b = random_mask(4, 0.4, 2);
    const MaskedMatrix pm = apply_mask(m, b);
    NormalizationSpec norm;
    norm.mu = 1.0;
    norm.sigma = 2.0;
    norm.n = 4;
    const InpaintTarget t = target_from_masked(pm, norm);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(t.known[i * 5], 1);
        EXPECT_DOUBLE_EQ(t.y[i * 5], -0.5);
        for (std::size_t j = 0; j < 4; ++j)
            if (i != j) EXPECT_EQ(t.known[i * 4 + j], b.known(i, j) ? 1 : 0);
    }
    GaussianEnsembleSpec spec;
    spec.n = 4;
    spec.mean = Eigen::VectorXd::Zero(16);
    spec.cov = Eigen::MatrixXd::Identity(16, 16);
    const AnalyticEpsilon model(spec, trained());
    SamplerConfig cfg;
    cfg.steps = 10;
    const DistanceMatrix out = inpaint_edm(InpaintMethod::ddnm, model, trained(), pm, norm, cfg, 1);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            if (b.known(i, j)) EXPECT_EQ(out(i, j), m(i, j));
    EXPECT_TRUE(validate_edm(out, {.check_triangle = false}).ok());
}
