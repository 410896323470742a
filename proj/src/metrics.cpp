#include "fbmedm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "fbmedm/io.hpp"
#include "fbmedm/rng.hpp"

namespace fbmedm {

namespace {

double raw(const DistanceMatrix& m, std::size_t i, std::size_t j) {
    return m.squared() ? std::sqrt(std::max(0.0, m(i, j))) : m(i, j);
}

void require_same_size(const DistanceMatrix& a, const DistanceMatrix& b, const Mask& m, const char* who) {
    if (a.size() != b.size() || a.size() != m.size()) throw std::invalid_argument(std::string(who) + ": size mismatch");
}

}  // namespace

double rmse_selected(const DistanceMatrix& a_hat, const DistanceMatrix& a_true, const Mask& select) {
    require_same_size(a_hat, a_true, select, "rmse_selected");
    const std::size_t n = a_hat.size();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && select.known(i, j)) {
                const double d = raw(a_hat, i, j) - raw(a_true, i, j);
                sum += d * d;
                ++count;
            }
    if (count == 0) throw std::invalid_argument("rmse: no entries to evaluate");
    return std::sqrt(sum / static_cast<double>(count));
}

double rmse_masked(const DistanceMatrix& a_hat, const DistanceMatrix& a_true, const Mask& b) {
    require_same_size(a_hat, a_true, b, "rmse_masked");
    Mask unknown(b.size(), false);
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = i + 1; j < b.size(); ++j)
            if (!b.known(i, j)) unknown.set(i, j, true);
    return rmse_selected(a_hat, a_true, unknown);
}

MeanError mean_error(std::span<const double> values) {
    MeanError r;
    if (values.empty()) return r;
    const double n = static_cast<double>(values.size());
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - r.mean) * (v - r.mean);
        r.error = std::sqrt(sq / (n - 1.0) / n);
    }
    return r;
}

Eigen::VectorXd EnsembleEmbedding::apply(const DistanceMatrix& m) const {
    if (m.size() != n) throw std::invalid_argument("embedding expects " + std::to_string(n) + "x" + std::to_string(n));
    Eigen::VectorXd flat(static_cast<Eigen::Index>(input_dim()));
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) flat(k++) = m(i, j);
    if (kind == Kind::identity) return flat;
    return basis * (flat - mean);
}

EnsembleEmbedding identity_embedding(std::size_t n) {
    EnsembleEmbedding e;
    e.kind = EnsembleEmbedding::Kind::identity;
    e.n = n;
    e.reference = "identity";
    return e;
}

EnsembleEmbedding fit_pca(std::span<const DistanceMatrix> reference, std::size_t dim, std::string provenance) {
    if (reference.size() < 2) throw std::invalid_argument("fit_pca: need at least two reference matrices");
    const EnsembleEmbedding flat = identity_embedding(reference.front().size());
    const auto p = static_cast<Eigen::Index>(flat.input_dim());
    if (dim == 0 || static_cast<Eigen::Index>(dim) > p)
        throw std::invalid_argument("fit_pca: dimension must lie in 1.." + std::to_string(p));
    Eigen::MatrixXd x(p, Eigen::Index(reference.size()));
    for (std::size_t k = 0; k < reference.size(); ++k) x.col(Eigen::Index(k)) = flat.apply(reference[k]);
    EnsembleEmbedding e = flat;
    e.kind = EnsembleEmbedding::Kind::pca;
    e.mean = x.rowwise().mean();
    x.colwise() -= e.mean;
    const Eigen::MatrixXd cov = x * x.transpose() / double(reference.size() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigendecomposition failed");
    // eigenvalues ascending: take the last `dim` columns, largest first
    e.basis.resize(Eigen::Index(dim), p);
    for (std::size_t k = 0; k < dim; ++k) e.basis.row(Eigen::Index(k)) = es.eigenvectors().col(p - 1 - Eigen::Index(k)).transpose();
    e.reference = std::move(provenance);
    return e;
}

std::string encode_pcae(const EnsembleEmbedding& emb) {
    if (emb.kind != EnsembleEmbedding::Kind::pca) throw std::invalid_argument("encode_pcae: not a PCA embedding");
    io::ByteWriter w;
    w.magic("PCAE");
    w.u32(io::kFormatVersion);
    w.u32(static_cast<std::uint32_t>(emb.input_dim()));
    w.u32(static_cast<std::uint32_t>(emb.output_dim()));
    for (Eigen::Index i = 0; i < emb.mean.size(); ++i) w.f32(static_cast<float>(emb.mean(i)));
    for (Eigen::Index r = 0; r < emb.basis.rows(); ++r)
        for (Eigen::Index c = 0; c < emb.basis.cols(); ++c) w.f32(static_cast<float>(emb.basis(r, c)));
    return w.take();
}

EnsembleEmbedding decode_pcae(std::string_view bytes) {
    io::ByteReader r(bytes, "PCAE");
    r.expect_magic("PCAE");
    const std::uint32_t version = r.u32();
    if (version != io::kFormatVersion) throw io::FormatError("PCAE: unsupported version " + std::to_string(version));
    const std::uint32_t in = r.u32(), out = r.u32();
    // input_dim = n(n-1)/2
    const auto n = static_cast<std::size_t>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * in)) / 2.0));
    if (n * (n - 1) / 2 != in) throw io::FormatError("PCAE: input dimension is not a triangle number");
    if (r.remaining() != 4ull * (in + std::size_t(out) * in)) throw io::FormatError("PCAE: payload size does not match header");
    EnsembleEmbedding e;
    e.kind = EnsembleEmbedding::Kind::pca;
    e.n = n;
    e.mean.resize(in);
    for (std::uint32_t i = 0; i < in; ++i) e.mean(i) = r.f32();
    e.basis.resize(out, in);
    for (std::uint32_t a = 0; a < out; ++a)
        for (std::uint32_t b = 0; b < in; ++b) e.basis(a, b) = r.f32();
    e.reference = "PCAE file";
    return e;
}

void write_pcae(const std::filesystem::path& path, const EnsembleEmbedding& emb) {
    io::write_file_atomic(path, encode_pcae(emb));
}

EnsembleEmbedding read_pcae(const std::filesystem::path& path) { return decode_pcae(io::read_file(path)); }

namespace {

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& s, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
    if (es.info() != Eigen::Success) throw CovarianceSqrtError(std::string(what) + ": eigendecomposition failed", {});
    const Eigen::VectorXd ev = es.eigenvalues();
    const double tol = 1e-9 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -tol)
        throw CovarianceSqrtError(std::string(what) + ": matrix is not positive semidefinite",
                                  std::vector<double>(ev.data(), ev.data() + ev.size()));
    return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

void moments(std::span<const DistanceMatrix> e, const EnsembleEmbedding& emb, std::span<const std::size_t> pick,
             Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
    const auto d = static_cast<Eigen::Index>(emb.output_dim());
    Eigen::MatrixXd x(d, Eigen::Index(pick.size()));
    for (std::size_t k = 0; k < pick.size(); ++k) x.col(Eigen::Index(k)) = emb.apply(e[pick[k]]);
    mean = x.rowwise().mean();
    x.colwise() -= mean;
    cov = x * x.transpose() / double(pick.size() - 1);
}

double frechet_of(std::span<const DistanceMatrix> e1, std::span<const DistanceMatrix> e2, const EnsembleEmbedding& emb,
                  std::span<const std::size_t> p1, std::span<const std::size_t> p2) {
    Eigen::VectorXd m1, m2;
    Eigen::MatrixXd s1, s2;
    moments(e1, emb, p1, m1, s1);
    moments(e2, emb, p2, m2, s2);
    return frechet_distance(m1, s1, m2, s2);
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

}  // namespace

double frechet_distance(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                        const Eigen::MatrixXd& s2) {
    if (m1.size() != m2.size() || s1.rows() != m1.size() || s2.rows() != m2.size())
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    const Eigen::MatrixXd r1 = sym_sqrt(s1, "frechet_distance: S1");
    const Eigen::MatrixXd inner = sym_sqrt(r1 * s2 * r1, "frechet_distance: S1^1/2 S2 S1^1/2");
    const double value = (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * inner.trace();
    return std::max(0.0, value);
}

double frechet_distance(std::span<const DistanceMatrix> e1, std::span<const DistanceMatrix> e2,
                        const EnsembleEmbedding& emb) {
    if (e1.size() < 2 || e2.size() < 2) throw std::invalid_argument("frechet_distance: need at least two samples per ensemble");
    const auto p1 = iota(e1.size()), p2 = iota(e2.size());
    return frechet_of(e1, e2, emb, p1, p2);
}

MeanError frechet_distance_subsampled(std::span<const DistanceMatrix> e1, std::span<const DistanceMatrix> e2,
                                      const EnsembleEmbedding& emb, std::uint64_t seed, std::size_t draws,
                                      double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0) || draws < 2)
        throw std::invalid_argument("frechet_distance_subsampled: need fraction in (0,1] and at least two draws");
    const auto k1 = static_cast<std::size_t>(std::floor(fraction * double(e1.size())));
    const auto k2 = static_cast<std::size_t>(std::floor(fraction * double(e2.size())));
    if (k1 < 2 || k2 < 2) throw std::invalid_argument("frechet_distance_subsampled: subsample too small");
    std::vector<double> values(draws);
    for (std::size_t d = 0; d < draws; ++d) {
        RandomStream rng(seed, stream_id({0xF1Dull, d}));
        auto p1 = iota(e1.size()), p2 = iota(e2.size());
        std::shuffle(p1.begin(), p1.end(), rng);
        std::shuffle(p2.begin(), p2.end(), rng);
        p1.resize(k1);
        p2.resize(k2);
        values[d] = frechet_of(e1, e2, emb, p1, p2);
    }
    MeanError r = mean_error(values);
    r.error *= std::sqrt(double(draws));  // spread of the subsample values, not of their mean
    return r;
}

double log_log_slope(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) throw std::invalid_argument("log_log_slope: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : points) {
        if (!(x > 0.0 && y > 0.0)) throw std::invalid_argument("log_log_slope: values must be positive");
        const double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = double(points.size());
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw std::invalid_argument("log_log_slope: all abscissae equal");
    return (n * sxy - sx * sy) / den;
}

ScalingResult scaling_exponent(std::span<const DistanceMatrix> ensemble, std::size_t s_min, std::size_t s_max) {
    if (ensemble.empty()) throw std::invalid_argument("scaling_exponent: empty ensemble");
    const std::size_t n = ensemble.front().size();
    if (s_max == 0) s_max = n / 4;
    s_max = std::min(s_max, n - 1);
    ScalingResult r;
    for (std::size_t s = 1; s < n; ++s) {
        double sum = 0.0;
        for (const DistanceMatrix& m : ensemble) {
            if (m.size() != n) throw std::invalid_argument("scaling_exponent: matrices differ in size");
            for (std::size_t i = 0; i + s < n; ++i) {
                const double v = m(i, i + s);
                sum += m.squared() ? v : v * v;
            }
        }
        r.curve.emplace_back(double(s), std::sqrt(sum / double(ensemble.size() * (n - s))));
    }
    if (s_min < 1 || s_max <= s_min) throw std::invalid_argument("scaling_exponent: fit window needs s_min < s_max");
    std::vector<std::pair<double, double>> window(r.curve.begin() + long(s_min - 1), r.curve.begin() + long(s_max));
    r.hurst = log_log_slope(window);
    return r;
}

std::vector<CollapseResult> gaussian_collapse(std::span<const DistanceMatrix> ensemble,
                                              std::span<const std::size_t> s_values, std::size_t dim,
                                              std::span<const double> reference_msd, double level) {
    std::vector<CollapseResult> out;
    if (s_values.empty()) return out;
    if (ensemble.empty()) throw std::invalid_argument("gaussian_collapse: empty ensemble");
    if (!reference_msd.empty() && reference_msd.size() != s_values.size())
        throw std::invalid_argument("gaussian_collapse: need one reference value per s");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("gaussian_collapse: level must lie in (0, 1)");
    const std::size_t n = ensemble.front().size();
    const boost::math::chi_squared_distribution<double> chi2(static_cast<double>(dim));
    // asymptotic Kolmogorov quantile c(level): P(K > c) = level
    const double c_level = std::sqrt(-0.5 * std::log(level / 2.0));

    for (std::size_t q = 0; q < s_values.size(); ++q) {
        const std::size_t s = s_values[q];
        if (s == 0 || s >= n) throw std::invalid_argument("gaussian_collapse: s outside 1..n-1");
        // one entry per matrix so samples are independent; the offset walks along the diagonal
        std::vector<double> v(ensemble.size());
        for (std::size_t k = 0; k < ensemble.size(); ++k) {
            const std::size_t i = k % (n - s);
            const double a = ensemble[k](i, i + s);
            v[k] = ensemble[k].squared() ? a : a * a;
        }
        double msd_s;
        if (!reference_msd.empty()) {
            msd_s = reference_msd[q];
        } else {
            msd_s = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
        }
        if (!(msd_s > 0.0)) throw std::invalid_argument("gaussian_collapse: mean squared distance must be positive");
        for (double& x : v) x *= double(dim) / msd_s;
        std::sort(v.begin(), v.end());
        const double m = double(v.size());
        double d = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double f = boost::math::cdf(chi2, std::max(0.0, v[k]));
            d = std::max({d, double(k + 1) / m - f, f - double(k) / m});
        }
        CollapseResult r;
        r.s = s;
        r.samples = v.size();
        r.ks = d;
        r.critical = c_level / std::sqrt(m);
        r.pass = d <= r.critical;
        out.push_back(r);
    }
    return out;
}

FidScalingFit fid_scaling_fit(std::span<const FidPoint> points, std::optional<FidReference> reference) {
    if (points.size() < 4) throw std::invalid_argument("fid_scaling_fit: need at least 4 points");
    const auto m = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd x(m, 3);
    Eigen::VectorXd y(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const FidPoint& p = points[std::size_t(k)];
        if (!(p.database_size > 0.0 && p.mu > 0.0 && p.fid > 0.0))
            throw std::invalid_argument("fid_scaling_fit: M, mu and fid must be positive");
        x(k, 0) = std::log(p.mu);
        x(k, 1) = -std::log(p.database_size);
        x(k, 2) = 1.0;
        y(k) = std::log(p.fid);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < 3)
        throw std::invalid_argument("fid_scaling_fit: design is rank deficient (need several distinct mu and M)");
    const Eigen::VectorXd beta = qr.solve(y);
    FidScalingFit fit;
    fit.a = beta(0);
    fit.gamma = beta(1);
    fit.log_c = beta(2);
    const Eigen::VectorXd res = y - x * beta;
    fit.residuals.assign(res.data(), res.data() + res.size());
    fit.max_residual = res.cwiseAbs().maxCoeff();
    if (reference) {
        if (!(reference->fid > 0.0 && reference->mu > 0.0))
            throw std::invalid_argument("fid_scaling_fit: reference fid and mu must be positive");
        if (fit.gamma == 0.0) throw std::invalid_argument("fid_scaling_fit: gamma is zero, M* undefined");
        const double ln_m = (fit.a * std::log(reference->mu) + fit.log_c - std::log(reference->fid)) / fit.gamma;
        fit.log10_m_star = ln_m / std::numbers::ln10;
    }
    return fit;
}

double theoretical_m_star(std::size_t n) {
    if (n < 2) throw std::invalid_argument("theoretical_m_star: n must be at least 2");
    const double per_dof = std::log(std::sqrt(2.0 * std::numbers::pi)) + 0.5;
    return 2.0 * double(n - 1) * per_dof / std::numbers::ln10;
}

}  // namespace fbmedm
