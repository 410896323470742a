#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "fbmedm/schedule.hpp"

namespace fbmedm {

// Denoiser contract: maps a batch of noisy n x n images at step t of the
// training chain (1-based) to the predicted noise. Implementations are
// deterministic and must allow concurrent predict() calls.
class EpsilonPredictor {
public:
    virtual ~EpsilonPredictor() = default;
    virtual std::size_t image_size() const = 0;

    // x and out hold `batch` row-major images back to back.
    virtual void predict(std::span<const double> x, std::size_t batch, std::size_t t,
                         std::span<double> out) const = 0;
};

// Gaussian data model over flattened images: x0 ~ N(mean, cov).
struct GaussianEnsembleSpec {
    std::size_t n = 0;
    Eigen::VectorXd mean;  // n*n
    Eigen::MatrixXd cov;   // n*n x n*n

    void validate(double tol = 1e-10) const;

    // Conditional law of the unknown pixels given known ones (known[k] != 0).
    // Returns the full-length mean with the known pixels set to their values.
    Eigen::VectorXd conditional_mean(std::span<const double> values, std::span<const std::uint8_t> known) const;
};

// Exact minimum-MSE noise predictor for Gaussian data:
//   E[x0|x_t] = m + sqrt(ab) S (ab S + (1 - ab) I)^{-1} (x_t - sqrt(ab) m)
//   eps = (x_t - sqrt(ab) E[x0|x_t]) / sqrt(1 - ab)
// S is diagonalized once, so every step is two matrix products and no
// per-step state is kept.
class AnalyticEpsilon final : public EpsilonPredictor {
public:
    AnalyticEpsilon(GaussianEnsembleSpec spec, NoiseSchedule schedule);

    std::size_t image_size() const override { return spec_.n; }
    void predict(std::span<const double> x, std::size_t batch, std::size_t t, std::span<double> out) const override;

    // Posterior mean E[x0 | x_t] for a single image.
    Eigen::VectorXd denoise(const Eigen::VectorXd& xt, std::size_t t) const;

private:
    GaussianEnsembleSpec spec_;
    NoiseSchedule schedule_;
    Eigen::MatrixXd eigvecs_;
    Eigen::VectorXd eigvals_;
};

}  // namespace fbmedm
