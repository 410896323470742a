#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbmedm {

struct FbmParams {
    double hurst = 0.5;
    double step_scale = 1.0;  // typical single-jump displacement a
    std::size_t n_points = 64;
    std::size_t dim = 3;
    // Off: each coordinate has variance a^2 s^{2H} / dim, so |x|^2 averages a^2 s^{2H}.
    // On: every coordinate has variance a^2 s^{2H}.
    bool unit_coordinate_variance = false;

    void validate() const;
    double coordinate_scale() const;
};

// n_points positions with dim coordinates each, stored row-major.
struct Trajectory {
    std::size_t n_points = 0;
    std::size_t dim = 0;
    std::vector<double> coords;

    Trajectory() = default;
    Trajectory(std::size_t n, std::size_t d) : n_points(n), dim(d), coords(n * d, 0.0) {}

    double& at(std::size_t i, std::size_t k) { return coords[i * dim + k]; }
    double at(std::size_t i, std::size_t k) const { return coords[i * dim + k]; }
    std::span<const double> point(std::size_t i) const { return {coords.data() + i * dim, dim}; }
    bool finite() const;
};

class CirculantEmbeddingError : public std::runtime_error {
public:
    CirculantEmbeddingError(std::size_t index, double eigenvalue);
    std::size_t index() const { return index_; }
    double eigenvalue() const { return eigenvalue_; }

private:
    std::size_t index_;
    double eigenvalue_;
};

// Cov(B_H(s), B_H(t)) = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2
double fbm_covariance(double hurst, double s, double t);

// Autocovariance of unit fractional Gaussian noise at integer lag k.
double fgn_autocovariance(double hurst, std::size_t lag);

// Exact sampler for unit-variance fractional Gaussian noise of a fixed length,
// by circulant embedding (Davies-Harte). The spectrum is computed once.
class DaviesHarte {
public:
    // Eigenvalues in (-tolerance, 0) are clamped to zero; anything lower throws.
    static constexpr double kNegativeTolerance = 1e-10;

    DaviesHarte(double hurst, std::size_t length);

    std::size_t length() const { return length_; }
    std::span<const double> eigenvalues() const { return eigenvalues_; }

    // Fill `out` (size length()) with one fGn path driven by `normals`
    // (size 2 * length(), standard normal draws).
    void sample(std::span<const double> normals, std::span<double> out) const;

private:
    std::size_t length_;
    std::vector<double> eigenvalues_;
    std::vector<double> sqrt_weights_;
};

// `count` independent trajectories starting at the origin. Trajectory i uses
// the sub-seed seed ^ i, so results do not depend on `jobs`.
std::vector<Trajectory> generate_fbm(const FbmParams& params, std::size_t count, std::uint64_t seed,
                                     unsigned jobs = 1);

// Normalized autocorrelation of the increments at `lag`, averaged over the
// ensemble, over time and over coordinates.
double increment_autocorrelation(std::span<const Trajectory> trajectories, std::size_t lag);

// Density of the dim-dimensional displacement between two points a contour
// distance s apart, evaluated at radius x.
double distance_pdf(double x, double s, const FbmParams& params);

// <|x(s)|^2> = a^2 s^{2H}
double msd(double s, const FbmParams& params);

}  // namespace fbmedm
