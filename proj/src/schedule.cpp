#include "fbmedm/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fbmedm/simd.hpp"

namespace fbmedm {

NoiseSchedule::NoiseSchedule(std::vector<double> betas, std::vector<double> alpha_bars,
                             std::vector<std::size_t> timesteps)
    : betas_(std::move(betas)), alpha_bars_(std::move(alpha_bars)), timesteps_(std::move(timesteps)) {
    if (betas_.empty()) throw std::invalid_argument("NoiseSchedule: empty schedule");
    if (alpha_bars_.size() != betas_.size() || timesteps_.size() != betas_.size())
        throw std::invalid_argument("NoiseSchedule: inconsistent lengths");
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        if (!(betas_[i] > 0.0 && betas_[i] < 1.0))
            throw std::invalid_argument("NoiseSchedule: beta_" + std::to_string(i + 1) + " outside (0, 1)");
        const double prev = i == 0 ? 1.0 : alpha_bars_[i - 1];
        if (!(alpha_bars_[i] < prev && alpha_bars_[i] > 0.0))
            throw std::invalid_argument("NoiseSchedule: alpha_bar must decrease strictly");
    }
}

double NoiseSchedule::sigma(std::size_t i, PosteriorVariance variance) const {
    const double b = beta(i);
    if (variance == PosteriorVariance::beta) return std::sqrt(b);
    return std::sqrt((1.0 - alpha_bar(i - 1)) / (1.0 - alpha_bar(i)) * b);
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    std::vector<double> abar(betas.size());
    std::vector<std::size_t> ts(betas.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        prod *= 1.0 - betas[i];
        abar[i] = prod;
        ts[i] = i + 1;
    }
    return NoiseSchedule(std::move(betas), std::move(abar), std::move(ts));
}

NoiseSchedule linear_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) throw std::invalid_argument("linear_schedule: need at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("linear_schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[i] = beta_start + f * (beta_end - beta_start);
    }
    return schedule_from_betas(std::move(betas));
}

NoiseSchedule subsample_schedule(const NoiseSchedule& s, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("subsample_schedule: no indices");
    std::vector<double> betas, abar;
    std::vector<std::size_t> ts;
    std::size_t prev = 0;
    for (std::size_t idx : indices) {
        if (idx < 1 || idx > s.size())
            throw std::invalid_argument("subsample_schedule: index " + std::to_string(idx) + " outside 1.." +
                                        std::to_string(s.size()));
        if (idx <= prev) throw std::invalid_argument("subsample_schedule: indices must be strictly ascending");
        betas.push_back(1.0 - s.alpha_bar(idx) / s.alpha_bar(prev));
        abar.push_back(s.alpha_bar(idx));
        ts.push_back(s.timestep(idx));
        prev = idx;
    }
    return NoiseSchedule(std::move(betas), std::move(abar), std::move(ts));
}

std::vector<std::size_t> uniform_indices(std::size_t T, std::size_t steps) {
    if (T == 0 || steps == 0) throw std::invalid_argument("uniform_indices: T and steps must be positive");
    std::vector<std::size_t> out;
    if (steps >= T) {
        for (std::size_t i = 1; i <= T; ++i) out.push_back(i);
        return out;
    }
    // index_k = round(k * T / steps), k = 1..steps; distinct because T > steps.
    for (std::size_t k = 1; k <= steps; ++k) out.push_back((k * T + steps / 2) / steps);
    out.back() = T;
    return out;
}

void forward_noise(std::span<const double> x0, std::size_t t, const NoiseSchedule& s, std::span<const double> noise,
                   std::span<double> out) {
    if (x0.size() != noise.size() || x0.size() != out.size())
        throw std::invalid_argument("forward_noise: shape mismatch");
    if (t > s.size()) throw std::invalid_argument("forward_noise: step outside the schedule");
    const double ab = s.alpha_bar(t);
    simd::kernels().affine3(out.data(), out.size(), std::sqrt(ab), x0.data(), std::sqrt(1.0 - ab), noise.data(), 0.0,
                            nullptr);
}

}  // namespace fbmedm
