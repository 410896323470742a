#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fbmedm {

// Posterior standard deviation used in the reverse step.
enum class PosteriorVariance {
    beta,        // sigma_t^2 = beta_t
    beta_tilde,  // sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
};

// Variance-preserving noise schedule. Steps are numbered 1..size(); step 0 is
// the clean image (abar_0 = 1). timestep(i) is the index of step i in the
// chain the predictor was trained on, which differs from i after subsampling.
class NoiseSchedule {
public:
    NoiseSchedule() = default;
    NoiseSchedule(std::vector<double> betas, std::vector<double> alpha_bars, std::vector<std::size_t> timesteps);

    std::size_t size() const { return betas_.size(); }
    double beta(std::size_t i) const { return betas_.at(i - 1); }
    double alpha(std::size_t i) const { return 1.0 - betas_.at(i - 1); }
    double alpha_bar(std::size_t i) const { return i == 0 ? 1.0 : alpha_bars_.at(i - 1); }
    std::size_t timestep(std::size_t i) const { return timesteps_.at(i - 1); }
    double sigma(std::size_t i, PosteriorVariance variance) const;

    std::span<const double> betas() const { return betas_; }
    std::span<const double> alpha_bars() const { return alpha_bars_; }
    std::span<const std::size_t> timesteps() const { return timesteps_; }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
    std::vector<std::size_t> timesteps_;
};

NoiseSchedule linear_schedule(std::size_t steps, double beta_start, double beta_end);

// Schedule from explicit betas (as stored with trained weights).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

// Shorter chain visiting the given steps (ascending, 1-based) of `s`. The
// new betas are 1 - abar_{S_i} / abar_{S_{i-1}}; the cumulative products are
// copied from `s` so marginals match exactly.
NoiseSchedule subsample_schedule(const NoiseSchedule& s, std::span<const std::size_t> indices);

// `steps` roughly evenly spaced indices in 1..T ending at T. steps >= T gives 1..T.
std::vector<std::size_t> uniform_indices(std::size_t T, std::size_t steps);

// out = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise
void forward_noise(std::span<const double> x0, std::size_t t, const NoiseSchedule& s, std::span<const double> noise,
                   std::span<double> out);

}  // namespace fbmedm
