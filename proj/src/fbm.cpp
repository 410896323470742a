#include "fbmedm/fbm.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>

#include "fbmedm/parallel.hpp"
#include "fbmedm/rng.hpp"

namespace fbmedm {

void FbmParams::validate() const {
    if (!(hurst > 0.0 && hurst < 1.0))
        throw std::domain_error("hurst must lie in (0, 1), got " + std::to_string(hurst));
    if (!(step_scale > 0.0) || !std::isfinite(step_scale))
        throw std::domain_error("step_scale must be positive");
    if (n_points < 2) throw std::domain_error("n_points must be at least 2");
    if (dim < 1) throw std::domain_error("dim must be at least 1");
}

double FbmParams::coordinate_scale() const {
    return unit_coordinate_variance ? step_scale : step_scale / std::sqrt(static_cast<double>(dim));
}

bool Trajectory::finite() const {
    for (double v : coords)
        if (!std::isfinite(v)) return false;
    return true;
}

CirculantEmbeddingError::CirculantEmbeddingError(std::size_t index, double eigenvalue)
    : std::runtime_error("circulant embedding has negative eigenvalue " + std::to_string(eigenvalue) +
                         " at index " + std::to_string(index)),
      index_(index),
      eigenvalue_(eigenvalue) {}

double fbm_covariance(double hurst, double s, double t) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw std::domain_error("hurst must lie in (0, 1)");
    if (s < 0.0 || t < 0.0) throw std::domain_error("fbm_covariance needs non-negative times");
    const double two_h = 2.0 * hurst;
    return 0.5 * (std::pow(t, two_h) + std::pow(s, two_h) - std::pow(std::abs(t - s), two_h));
}

double fgn_autocovariance(double hurst, std::size_t lag) {
    const double two_h = 2.0 * hurst;
    const double k = static_cast<double>(lag);
    if (lag == 0) return 1.0;
    return 0.5 * (std::pow(k + 1.0, two_h) - 2.0 * std::pow(k, two_h) + std::pow(k - 1.0, two_h));
}

DaviesHarte::DaviesHarte(double hurst, std::size_t length) : length_(length) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw std::domain_error("hurst must lie in (0, 1)");
    if (length < 1) throw std::domain_error("fGn length must be positive");
    const std::size_t m = length;
    const std::size_t size = 2 * m;

    // First row of the circulant: c_0..c_m, c_{m-1}..c_1
    std::vector<std::complex<double>> row(size);
    for (std::size_t k = 0; k <= m; ++k) row[k] = fgn_autocovariance(hurst, k);
    for (std::size_t k = m + 1; k < size; ++k) row[k] = fgn_autocovariance(hurst, size - k);

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, row);

    eigenvalues_.resize(size);
    sqrt_weights_.resize(size);
    for (std::size_t k = 0; k < size; ++k) {
        double lambda = spectrum[k].real();
        if (lambda < 0.0) {
            if (lambda < -kNegativeTolerance) throw CirculantEmbeddingError(k, lambda);
            lambda = 0.0;
        }
        eigenvalues_[k] = lambda;
        // endpoints k = 0 and k = m carry a real normal, the rest a complex one
        const double denom = (k == 0 || k == m) ? static_cast<double>(size) : 2.0 * static_cast<double>(size);
        sqrt_weights_[k] = std::sqrt(lambda / denom);
    }
}

void DaviesHarte::sample(std::span<const double> normals, std::span<double> out) const {
    const std::size_t m = length_;
    const std::size_t size = 2 * m;
    if (normals.size() != size || out.size() != m)
        throw std::invalid_argument("DaviesHarte::sample: expected " + std::to_string(size) + " normals and " +
                                    std::to_string(m) + " outputs");
    std::vector<std::complex<double>> w(size);
    w[0] = sqrt_weights_[0] * normals[0];
    w[m] = sqrt_weights_[m] * normals[1];
    for (std::size_t k = 1; k < m; ++k) {
        w[k] = sqrt_weights_[k] * std::complex<double>(normals[2 * k], normals[2 * k + 1]);
        w[size - k] = std::conj(w[k]);
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> y;
    fft.fwd(y, w);
    for (std::size_t j = 0; j < m; ++j) out[j] = y[j].real();
}

std::vector<Trajectory> generate_fbm(const FbmParams& params, std::size_t count, std::uint64_t seed,
                                     unsigned jobs) {
    params.validate();
    if (count < 1) throw std::domain_error("count must be at least 1");
    const std::size_t steps = params.n_points - 1;
    const DaviesHarte generator(params.hurst, steps);
    const double scale = params.coordinate_scale();

    std::vector<Trajectory> out(count);
    parallel_for(count, jobs, [&](std::size_t i) {
        Trajectory traj(params.n_points, params.dim);
        std::vector<double> normals(2 * steps);
        std::vector<double> increments(steps);
        for (std::size_t k = 0; k < params.dim; ++k) {
            RandomStream rng(seed ^ static_cast<std::uint64_t>(i), stream_id({0xFB3ull, k}));
            rng.fill_normal(normals);
            generator.sample(normals, increments);
            double pos = 0.0;
            for (std::size_t s = 0; s < steps; ++s) {
                pos += scale * increments[s];
                traj.at(s + 1, k) = pos;
            }
        }
        out[i] = std::move(traj);
    });
    return out;
}

double increment_autocorrelation(std::span<const Trajectory> trajectories, std::size_t lag) {
    if (trajectories.empty()) throw std::invalid_argument("increment_autocorrelation: empty ensemble");
    double cross = 0.0, square = 0.0;
    std::size_t used = 0;
    for (const Trajectory& tr : trajectories) {
        if (tr.n_points <= lag + 1) continue;
        ++used;
        const std::size_t steps = tr.n_points - 1;
        for (std::size_t k = 0; k < tr.dim; ++k) {
            for (std::size_t s = 0; s + lag < steps; ++s) {
                const double d0 = tr.at(s + 1, k) - tr.at(s, k);
                const double d1 = tr.at(s + lag + 1, k) - tr.at(s + lag, k);
                cross += d0 * d1;
                square += 0.5 * (d0 * d0 + d1 * d1);
            }
        }
    }
    if (used == 0) throw std::invalid_argument("increment_autocorrelation: no trajectory longer than lag + 1");
    return cross / square;
}

double msd(double s, const FbmParams& params) {
    return params.step_scale * params.step_scale * std::pow(s, 2.0 * params.hurst);
}

double distance_pdf(double x, double s, const FbmParams& params) {
    if (!(s > 0.0)) throw std::domain_error("distance_pdf needs s > 0");
    if (x < 0.0) throw std::domain_error("distance_pdf needs x >= 0");
    const double d = static_cast<double>(params.dim);
    const double var = msd(s, params);
    return std::pow(d / (2.0 * std::numbers::pi * var), d / 2.0) * std::exp(-d * x * x / (2.0 * var));
}

}  // namespace fbmedm
