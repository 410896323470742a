#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fbmedm/edm.hpp"
#include "fbmedm/predictor.hpp"
#include "fbmedm/schedule.hpp"

namespace fbmedm {

struct SamplerConfig {
    std::size_t steps = 200;  // sampling chain length (uniform subsample of the trained chain)
    std::size_t repaint_resamples = 10;
    std::size_t ddnm_travel_length = 3;
    std::size_t ddnm_repeats = 3;
    double ddrm_eta = 0.85;
    double ddrm_sigma_y = 0.0;
    PosteriorVariance variance = PosteriorVariance::beta;
    std::size_t batch = 256;  // chains per predictor call
    unsigned jobs = 1;

    void validate() const;
};

enum class InpaintMethod { ddpm, repaint, ddrm, ddnm };

std::string_view inpaint_method_name(InpaintMethod m);
InpaintMethod parse_inpaint_method(std::string_view name);

// `count` row-major n x n images stored back to back.
struct ImageBatch {
    std::size_t n = 0;
    std::size_t count = 0;
    std::vector<double> data;

    std::span<const double> image(std::size_t i) const { return {data.data() + i * n * n, n * n}; }
    std::span<double> image(std::size_t i) { return {data.data() + i * n * n, n * n}; }
};

// Observed image for inpainting. Pixels with known[k] == 0 are ignored.
struct InpaintTarget {
    std::size_t n = 0;
    std::vector<double> y;
    std::vector<std::uint8_t> known;

    void validate() const;
};

class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(const std::string& sampler, std::size_t step)
        : std::runtime_error(sampler + ": non-finite value at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

// Chain actually run for cfg.steps over a trained schedule.
NoiseSchedule sampling_schedule(const NoiseSchedule& trained, std::size_t steps);

// Noise protocol shared by all samplers: the draw for chain c at step i,
// visit u of that step and purpose slot k comes from the stream
// (seed, stream_id({tag, c, i, u, k})). Chain c is the global index, so
// batching and threading do not change results; RePaint with one resample
// makes exactly the draws of ddpm_inpaint.
namespace noise_slot {
inline constexpr std::uint64_t start = 0;      // x_T
inline constexpr std::uint64_t known = 1;      // noise for the observed image
inline constexpr std::uint64_t posterior = 2;  // reverse-step noise
inline constexpr std::uint64_t forward = 3;    // re-noising (RePaint loops, DDNM time travel)
}  // namespace noise_slot

ImageBatch ddpm_sample(const EpsilonPredictor& model, const NoiseSchedule& trained, std::size_t count,
                       std::uint64_t seed, const SamplerConfig& cfg = {});

ImageBatch ddpm_inpaint(const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget& y,
                        std::size_t count, const SamplerConfig& cfg, std::uint64_t seed);
ImageBatch repaint_inpaint(const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget& y,
                           std::size_t count, const SamplerConfig& cfg, std::uint64_t seed);
ImageBatch ddrm_inpaint(const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget& y,
                        std::size_t count, const SamplerConfig& cfg, std::uint64_t seed);
ImageBatch ddnm_inpaint(const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget& y,
                        std::size_t count, const SamplerConfig& cfg, std::uint64_t seed);

ImageBatch inpaint(InpaintMethod method, const EpsilonPredictor& model, const NoiseSchedule& trained,
                   const InpaintTarget& y, std::size_t count, const SamplerConfig& cfg, std::uint64_t seed);

// Positions (N down to 0) visited by DDNM with time travel: after reaching
// step 1 + j*L (j*L < N - L) the chain re-noises L steps forward, repeats - 1
// times per jump point.
std::vector<std::size_t> ddnm_path(std::size_t steps, std::size_t travel_length, std::size_t repeats);

// Map between EDM entries and network images: x = (a / step_scale^2 - mu) / sigma.
struct NormalizationSpec {
    double mu = 0.0;
    double sigma = 1.0;
    double hurst = 0.5;
    std::size_t n = 0;
    double step_scale = 1.0;

    double to_image(double a) const { return (a / (step_scale * step_scale) - mu) / sigma; }
    double to_entry(double x) const { return (x * sigma + mu) * step_scale * step_scale; }
};

// Normalized image of a partial EDM. The diagonal is treated as known (zero distance).
InpaintTarget target_from_masked(const MaskedMatrix& pm, const NormalizationSpec& norm);

struct PostprocessReport {
    DistanceMatrix matrix;
    double max_asymmetry = 0.0;  // max |a_ij - a_ji| before symmetrization
    double max_clipped = 0.0;    // largest negative magnitude set to 0
};

// Denormalize, symmetrize, zero the diagonal, clip negatives.
PostprocessReport postprocess_edm(std::span<const double> raw, std::size_t n, const NormalizationSpec& norm);

// Inpaint a partial EDM and return the post-processed completion.
DistanceMatrix inpaint_edm(InpaintMethod method, const EpsilonPredictor& model, const NoiseSchedule& trained,
                           const MaskedMatrix& pm, const NormalizationSpec& norm, const SamplerConfig& cfg,
                           std::uint64_t seed);

}  // namespace fbmedm
