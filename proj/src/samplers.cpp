#include "fbmedm/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fbmedm/parallel.hpp"
#include "fbmedm/rng.hpp"
#include "fbmedm/simd.hpp"

namespace fbmedm {

void SamplerConfig::validate() const {
    if (steps == 0 || repaint_resamples == 0 || ddnm_travel_length == 0 || ddnm_repeats == 0 || batch == 0)
        throw std::invalid_argument("SamplerConfig: counts must be positive");
    if (!(ddrm_eta > 0.0 && ddrm_eta <= 1.0)) throw std::invalid_argument("SamplerConfig: ddrm_eta must lie in (0, 1]");
    if (!(ddrm_sigma_y >= 0.0)) throw std::invalid_argument("SamplerConfig: ddrm_sigma_y must be non-negative");
}

std::string_view inpaint_method_name(InpaintMethod m) {
    switch (m) {
        case InpaintMethod::ddpm: return "ddpm";
        case InpaintMethod::repaint: return "repaint";
        case InpaintMethod::ddrm: return "ddrm";
        case InpaintMethod::ddnm: return "ddnm";
    }
    return "?";
}

InpaintMethod parse_inpaint_method(std::string_view name) {
    for (auto m : {InpaintMethod::ddpm, InpaintMethod::repaint, InpaintMethod::ddrm, InpaintMethod::ddnm})
        if (inpaint_method_name(m) == name) return m;
    throw std::invalid_argument("unknown inpainting method '" + std::string(name) + "'");
}

void InpaintTarget::validate() const {
    if (n == 0 || y.size() != n * n || known.size() != n * n)
        throw std::invalid_argument("InpaintTarget: y and known must hold n*n values");
    for (std::size_t k = 0; k < y.size(); ++k)
        if (known[k] && !std::isfinite(y[k]))
            throw std::invalid_argument("InpaintTarget: known pixel " + std::to_string(k) + " is not finite");
}

NoiseSchedule sampling_schedule(const NoiseSchedule& trained, std::size_t steps) {
    if (steps >= trained.size()) return trained;
    const auto idx = uniform_indices(trained.size(), steps);
    return subsample_schedule(trained, idx);
}

std::vector<std::size_t> ddnm_path(std::size_t steps, std::size_t travel_length, std::size_t repeats) {
    if (steps == 0 || travel_length == 0 || repeats == 0)
        throw std::invalid_argument("ddnm_path: arguments must be positive");
    std::map<std::size_t, std::size_t> jumps;  // position -> remaining back-jumps
    for (std::size_t j = 0; j + travel_length < steps; j += travel_length) jumps[j + 1] = repeats - 1;
    std::vector<std::size_t> path{steps};
    std::size_t pos = steps + 1;
    while (pos >= 2) {
        --pos;
        if (pos != steps) path.push_back(pos);
        auto it = jumps.find(pos);
        if (it != jumps.end() && it->second > 0) {
            --it->second;
            for (std::size_t k = 0; k < travel_length; ++k) path.push_back(++pos);
        }
    }
    path.push_back(0);
    return path;
}

namespace {

constexpr std::uint64_t kNoiseTag = 0x5A3D1Eull;

void draw(std::uint64_t seed, std::size_t chain, std::size_t step, std::size_t visit, std::uint64_t slot,
          std::span<double> out) {
    RandomStream rs(seed, stream_id({kNoiseTag, chain, step, visit, slot}));
    rs.fill_normal(out);
}

// State of `b` chains (global indices c0 .. c0+b-1) of d pixels each.
struct Chains {
    const EpsilonPredictor& model;
    const NoiseSchedule& s;
    std::uint64_t seed;
    std::size_t c0, b, d;
    std::vector<double> x, eps, z, w;

    Chains(const EpsilonPredictor& m, const NoiseSchedule& sched, std::uint64_t sd, std::size_t first, std::size_t count)
        : model(m), s(sched), seed(sd), c0(first), b(count), d(m.image_size() * m.image_size()),
          x(b * d), eps(b * d), z(d), w(d) {
        for (std::size_t c = 0; c < b; ++c) draw(seed, c0 + c, 0, 0, noise_slot::start, chain(c));
    }

    std::span<double> chain(std::size_t c) { return {x.data() + c * d, d}; }
    std::span<double> eps_of(std::size_t c) { return {eps.data() + c * d, d}; }

    void predict(std::size_t i) { model.predict(x, b, s.timestep(i), eps); }

    void check(std::string_view name, std::size_t i) const {
        for (double v : x)
            if (!std::isfinite(v)) throw NonFiniteError(std::string(name), i);
    }

    // x <- mu_theta(x, i) + sigma_i z for chain c; z is drawn unless i == 1.
    void reverse_step(std::size_t c, std::size_t i, std::size_t visit, PosteriorVariance variance) {
        const auto& k = simd::kernels();
        const double a = 1.0 / std::sqrt(s.alpha(i));
        const double e = -s.beta(i) / (std::sqrt(s.alpha(i)) * std::sqrt(1.0 - s.alpha_bar(i)));
        double* xc = chain(c).data();
        if (i > 1) {
            draw(seed, c0 + c, i, visit, noise_slot::posterior, z);
            k.affine3(xc, d, a, xc, e, eps_of(c).data(), s.sigma(i, variance), z.data());
        } else {
            k.affine3(xc, d, a, xc, e, eps_of(c).data(), 0.0, nullptr);
        }
    }

    // x_i <- sqrt(1 - beta_i) x_{i-1} + sqrt(beta_i) z
    void forward_step(std::size_t c, std::size_t i, std::size_t visit) {
        draw(seed, c0 + c, i, visit, noise_slot::forward, z);
        double* xc = chain(c).data();
        simd::kernels().affine3(xc, d, std::sqrt(1.0 - s.beta(i)), xc, std::sqrt(s.beta(i)), z.data(), 0.0, nullptr);
    }

    // Known pixels noised to level i-1 (exactly y at i == 1), merged into chain c.
    void merge_known(std::size_t c, std::size_t i, std::size_t visit, const InpaintTarget& y) {
        const auto& k = simd::kernels();
        if (i > 1) {
            draw(seed, c0 + c, i, visit, noise_slot::known, z);
            const double ab = s.alpha_bar(i - 1);
            k.affine3(w.data(), d, std::sqrt(ab), y.y.data(), std::sqrt(1.0 - ab), z.data(), 0.0, nullptr);
            k.select(chain(c).data(), d, y.known.data(), w.data(), chain(c).data());
        } else {
            k.select(chain(c).data(), d, y.known.data(), y.y.data(), chain(c).data());
        }
    }

    void final_projection(const InpaintTarget& y) {
        for (std::size_t c = 0; c < b; ++c)
            simd::kernels().select(chain(c).data(), d, y.known.data(), y.y.data(), chain(c).data());
    }
};

void run_ddpm(Chains& ch, const SamplerConfig& cfg) {
    for (std::size_t i = ch.s.size(); i >= 1; --i) {
        ch.predict(i);
        for (std::size_t c = 0; c < ch.b; ++c) ch.reverse_step(c, i, 0, cfg.variance);
        ch.check("ddpm_sample", i);
    }
}

void run_repaint(Chains& ch, const InpaintTarget& y, const SamplerConfig& cfg, std::size_t resamples,
                 std::string_view name) {
    for (std::size_t i = ch.s.size(); i >= 1; --i) {
        // no resampling on the last step: there is no noise left to harmonize
        const std::size_t loops = i > 1 ? resamples : 1;
        for (std::size_t u = 0; u < loops; ++u) {
            ch.predict(i);
            for (std::size_t c = 0; c < ch.b; ++c) {
                ch.reverse_step(c, i, u, cfg.variance);
                ch.merge_known(c, i, u, y);
                if (u + 1 < loops) ch.forward_step(c, i, u);
            }
            ch.check(name, i);
        }
    }
    ch.final_projection(y);
}

void run_ddrm(Chains& ch, const InpaintTarget& y, const SamplerConfig& cfg) {
    const double eta = cfg.ddrm_eta;
    const double sy = cfg.ddrm_sigma_y;
    const double keep = std::sqrt(1.0 - eta * eta);
    for (std::size_t i = ch.s.size(); i >= 1; --i) {
        const double ab = ch.s.alpha_bar(i), abp = ch.s.alpha_bar(i - 1);
        const double sig = std::sqrt((1.0 - ab) / ab);
        const double sigp = std::sqrt((1.0 - abp) / abp);
        const double sab = std::sqrt(ab), sabp = std::sqrt(abp), s1ab = std::sqrt(1.0 - ab);
        ch.predict(i);
        for (std::size_t c = 0; c < ch.b; ++c) {
            if (i > 1)
                draw(ch.seed, ch.c0 + c, i, 0, noise_slot::posterior, ch.z);
            else
                std::fill(ch.z.begin(), ch.z.end(), 0.0);
            auto x = ch.chain(c);
            auto e = ch.eps_of(c);
            for (std::size_t k = 0; k < ch.d; ++k) {
                const double xbar = x[k] / sab;
                const double x0 = (x[k] - s1ab * e[k]) / sab;
                double next;
                if (!y.known[k]) {
                    next = x0 + keep * sigp * (xbar - x0) / sig + eta * sigp * ch.z[k];
                } else if (sigp < sy) {
                    next = x0 + keep * sigp * (y.y[k] - x0) / sy + eta * sigp * ch.z[k];
                } else {
                    next = y.y[k] + std::sqrt(sigp * sigp - sy * sy) * ch.z[k];
                }
                x[k] = sabp * next;
            }
        }
        ch.check("ddrm_inpaint", i);
    }
    if (sy == 0.0) ch.final_projection(y);
}

void run_ddnm(Chains& ch, const InpaintTarget& y, const SamplerConfig& cfg) {
    const auto path = ddnm_path(ch.s.size(), cfg.ddnm_travel_length, cfg.ddnm_repeats);
    std::vector<std::size_t> reverse_visits(ch.s.size() + 1, 0), forward_visits(ch.s.size() + 1, 0);
    const auto& kern = simd::kernels();
    for (std::size_t p = 1; p < path.size(); ++p) {
        const std::size_t from = path[p - 1], to = path[p];
        if (to > from) {
            const std::size_t visit = forward_visits[to]++;
            for (std::size_t c = 0; c < ch.b; ++c) ch.forward_step(c, to, visit);
            continue;
        }
        const std::size_t i = from;
        const std::size_t visit = reverse_visits[i]++;
        const double ab = ch.s.alpha_bar(i), abp = ch.s.alpha_bar(i - 1);
        const double c_x0 = std::sqrt(abp) * ch.s.beta(i) / (1.0 - ab);
        const double c_xt = std::sqrt(ch.s.alpha(i)) * (1.0 - abp) / (1.0 - ab);
        ch.predict(i);
        for (std::size_t c = 0; c < ch.b; ++c) {
            double* x = ch.chain(c).data();
            // x0|t, then replace its range-space component by y
            kern.affine3(ch.w.data(), ch.d, 1.0 / std::sqrt(ab), x, -std::sqrt(1.0 - ab) / std::sqrt(ab),
                         ch.eps_of(c).data(), 0.0, nullptr);
            kern.select(ch.w.data(), ch.d, y.known.data(), y.y.data(), ch.w.data());
            if (i > 1) {
                draw(ch.seed, ch.c0 + c, i, visit, noise_slot::posterior, ch.z);
                kern.affine3(x, ch.d, c_xt, x, c_x0, ch.w.data(), ch.s.sigma(i, cfg.variance), ch.z.data());
            } else {
                kern.affine3(x, ch.d, c_xt, x, c_x0, ch.w.data(), 0.0, nullptr);
            }
        }
        ch.check("ddnm_inpaint", i);
    }
    ch.final_projection(y);
}

enum class Kind { sample, ddpm, repaint, ddrm, ddnm };

ImageBatch run(Kind kind, const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget* y,
               std::size_t count, const SamplerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t n = model.image_size();
    if (y) {
        y->validate();
        if (y->n != n)
            throw std::invalid_argument("inpainting target is " + std::to_string(y->n) + "x" + std::to_string(y->n) +
                                        " but the model expects " + std::to_string(n) + "x" + std::to_string(n));
    }
    const NoiseSchedule s = sampling_schedule(trained, cfg.steps);
    ImageBatch out;
    out.n = n;
    out.count = count;
    out.data.resize(count * n * n);
    const std::size_t batches = (count + cfg.batch - 1) / cfg.batch;
    parallel_for(batches, cfg.jobs, [&](std::size_t bi) {
        const std::size_t c0 = bi * cfg.batch;
        Chains ch(model, s, seed, c0, std::min(cfg.batch, count - c0));
        switch (kind) {
            case Kind::sample: run_ddpm(ch, cfg); break;
            case Kind::ddpm: run_repaint(ch, *y, cfg, 1, "ddpm_inpaint"); break;
            case Kind::repaint: run_repaint(ch, *y, cfg, cfg.repaint_resamples, "repaint_inpaint"); break;
            case Kind::ddrm: run_ddrm(ch, *y, cfg); break;
            case Kind::ddnm: run_ddnm(ch, *y, cfg); break;
        }
        std::copy(ch.x.begin(), ch.x.end(), out.data.begin() + static_cast<std::ptrdiff_t>(c0 * n * n));
    });
    return out;
}

}  // namespace

ImageBatch ddpm_sample(const EpsilonPredictor& model, const NoiseSchedule& trained, std::size_t count,
                       std::uint64_t seed, const SamplerConfig& cfg) {
    return run(Kind::sample, model, trained, nullptr, count, cfg, seed);
}

ImageBatch ddpm_inpaint(const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget& y,
                        std::size_t count, const SamplerConfig& cfg, std::uint64_t seed) {
    return run(Kind::ddpm, model, trained, &y, count, cfg, seed);
}

ImageBatch repaint_inpaint(const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget& y,
                           std::size_t count, const SamplerConfig& cfg, std::uint64_t seed) {
    return run(Kind::repaint, model, trained, &y, count, cfg, seed);
}

ImageBatch ddrm_inpaint(const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget& y,
                        std::size_t count, const SamplerConfig& cfg, std::uint64_t seed) {
    return run(Kind::ddrm, model, trained, &y, count, cfg, seed);
}

ImageBatch ddnm_inpaint(const EpsilonPredictor& model, const NoiseSchedule& trained, const InpaintTarget& y,
                        std::size_t count, const SamplerConfig& cfg, std::uint64_t seed) {
    return run(Kind::ddnm, model, trained, &y, count, cfg, seed);
}

ImageBatch inpaint(InpaintMethod method, const EpsilonPredictor& model, const NoiseSchedule& trained,
                   const InpaintTarget& y, std::size_t count, const SamplerConfig& cfg, std::uint64_t seed) {
    switch (method) {
        case InpaintMethod::ddpm: return ddpm_inpaint(model, trained, y, count, cfg, seed);
        case InpaintMethod::repaint: return repaint_inpaint(model, trained, y, count, cfg, seed);
        case InpaintMethod::ddrm: return ddrm_inpaint(model, trained, y, count, cfg, seed);
        case InpaintMethod::ddnm: return ddnm_inpaint(model, trained, y, count, cfg, seed);
    }
    throw std::invalid_argument("inpaint: unknown method");
}

InpaintTarget target_from_masked(const MaskedMatrix& pm, const NormalizationSpec& norm) {
    const std::size_t n = pm.size();
    InpaintTarget t;
    t.n = n;
    t.y.assign(n * n, 0.0);
    t.known.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const bool known = i == j || pm.known(i, j);
            t.known[i * n + j] = known ? 1 : 0;
            if (known) t.y[i * n + j] = norm.to_image(i == j ? 0.0 : pm.matrix(i, j));
        }
    return t;
}

PostprocessReport postprocess_edm(std::span<const double> raw, std::size_t n, const NormalizationSpec& norm) {
    if (raw.size() != n * n) throw std::invalid_argument("postprocess_edm: expected n*n values");
    PostprocessReport r;
    r.matrix = DistanceMatrix(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double a = norm.to_entry(raw[i * n + j]);
            const double b = norm.to_entry(raw[j * n + i]);
            r.max_asymmetry = std::max(r.max_asymmetry, std::abs(a - b));
            double v = 0.5 * (a + b);
            if (v < 0.0) {
                r.max_clipped = std::max(r.max_clipped, -v);
                v = 0.0;
            }
            r.matrix(i, j) = v;
            r.matrix(j, i) = v;
        }
    }
    return r;
}

DistanceMatrix inpaint_edm(InpaintMethod method, const EpsilonPredictor& model, const NoiseSchedule& trained,
                           const MaskedMatrix& pm, const NormalizationSpec& norm, const SamplerConfig& cfg,
                           std::uint64_t seed) {
    const InpaintTarget target = target_from_masked(pm, norm);
    const ImageBatch img = inpaint(method, model, trained, target, 1, cfg, seed);
    DistanceMatrix out = postprocess_edm(img.image(0), pm.size(), norm).matrix;
    out.set_squared(pm.matrix.squared());
    // the denormalization round trip is not bit-exact; restore observed values
    for (std::size_t i = 0; i < pm.size(); ++i)
        for (std::size_t j = 0; j < pm.size(); ++j)
            if (pm.known(i, j)) out(i, j) = pm.matrix(i, j);
    return out;
}

}  // namespace fbmedm
