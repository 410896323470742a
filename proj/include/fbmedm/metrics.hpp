#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fbmedm/edm.hpp"

namespace fbmedm {

// RMSE over the off-diagonal entries with b == 0, in raw distance units
// (square roots are taken when the matrices hold squared distances).
double rmse_masked(const DistanceMatrix& a_hat, const DistanceMatrix& a_true, const Mask& b);

// Same, over the off-diagonal entries with `select` == 1.
double rmse_selected(const DistanceMatrix& a_hat, const DistanceMatrix& a_true, const Mask& select);

struct MeanError {
    double mean = 0.0;
    double error = 0.0;  // standard error of the mean
};
MeanError mean_error(std::span<const double> values);

// Linear map from a matrix's upper triangle (i < j, row-major) to features.
struct EnsembleEmbedding {
    enum class Kind { identity, pca };
    Kind kind = Kind::identity;
    std::size_t n = 0;
    Eigen::VectorXd mean;   // pca only
    Eigen::MatrixXd basis;  // pca only, output_dim x input_dim, orthonormal rows
    std::string reference;  // provenance of the fit

    std::size_t input_dim() const { return n * (n - 1) / 2; }
    std::size_t output_dim() const { return kind == Kind::identity ? input_dim() : std::size_t(basis.rows()); }
    Eigen::VectorXd apply(const DistanceMatrix& m) const;
};

EnsembleEmbedding identity_embedding(std::size_t n);
EnsembleEmbedding fit_pca(std::span<const DistanceMatrix> reference, std::size_t dim, std::string provenance = {});

std::string encode_pcae(const EnsembleEmbedding& emb);
EnsembleEmbedding decode_pcae(std::string_view bytes);
void write_pcae(const std::filesystem::path& path, const EnsembleEmbedding& emb);
EnsembleEmbedding read_pcae(const std::filesystem::path& path);

class CovarianceSqrtError : public std::runtime_error {
public:
    CovarianceSqrtError(const std::string& what, std::vector<double> spectrum)
        : std::runtime_error(what), spectrum_(std::move(spectrum)) {}
    const std::vector<double>& spectrum() const { return spectrum_; }

private:
    std::vector<double> spectrum_;
};

// |m1 - m2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); the trace of the square root is
// computed from the symmetric S1^{1/2} S2 S1^{1/2}, which has the same spectrum.
double frechet_distance(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                        const Eigen::MatrixXd& s2);

double frechet_distance(std::span<const DistanceMatrix> e1, std::span<const DistanceMatrix> e2,
                        const EnsembleEmbedding& emb);

// Mean and standard deviation of the distance over `draws` random subsamples
// holding `fraction` of each ensemble.
MeanError frechet_distance_subsampled(std::span<const DistanceMatrix> e1, std::span<const DistanceMatrix> e2,
                                      const EnsembleEmbedding& emb, std::uint64_t seed, std::size_t draws = 100,
                                      double fraction = 0.9);

struct ScalingResult {
    double hurst = 0.0;
    std::vector<std::pair<double, double>> curve;  // (s, x(s)) for s = 1 .. n-1
};

// x(s) = sqrt(mean of the s-th diagonal over the ensemble); hurst is the
// least-squares slope of log x against log s over [s_min, s_max]
// (s_max = 0 selects n/4).
ScalingResult scaling_exponent(std::span<const DistanceMatrix> ensemble, std::size_t s_min = 2, std::size_t s_max = 0);

// Slope of log y against log x.
double log_log_slope(std::span<const std::pair<double, double>> points);

struct CollapseResult {
    std::size_t s = 0;
    std::size_t samples = 0;
    double ks = 0.0;
    double critical = 0.0;  // asymptotic critical value at the requested level
    bool pass = false;
};

// For every s, D * a / <a> with one entry (i, i+s) per matrix is compared to
// chi-squared with `dim` degrees of freedom by a Kolmogorov-Smirnov test.
// <a> is the ensemble mean of the s-th diagonal unless reference_msd supplies
// it (one value per s).
std::vector<CollapseResult> gaussian_collapse(std::span<const DistanceMatrix> ensemble,
                                              std::span<const std::size_t> s_values, std::size_t dim = 3,
                                              std::span<const double> reference_msd = {}, double level = 0.01);

struct FidPoint {
    double database_size = 0.0;  // M
    double mu = 0.0;
    double fid = 0.0;
};

struct FidScalingFit {
    double a = 0.0;
    double gamma = 0.0;
    double log_c = 0.0;  // ln fid = a ln mu - gamma ln M + log_c
    std::vector<double> residuals;
    double max_residual = 0.0;
    std::optional<double> log10_m_star;
};

struct FidReference {
    double fid = 0.0;  // level to reach (e.g. the inpainting FID)
    double mu = 0.0;
};

FidScalingFit fid_scaling_fit(std::span<const FidPoint> points, std::optional<FidReference> reference = std::nullopt);

// 2 (n - 1) (ln sqrt(2 pi) + 1/2) / ln 10
double theoretical_m_star(std::size_t n);

}  // namespace fbmedm
