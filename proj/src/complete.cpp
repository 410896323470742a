#include "fbmedm/complete.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "fbmedm/rng.hpp"
#include "fbmedm/simd.hpp"

namespace fbmedm {

std::string_view method_name(CompletionMethod m) {
    switch (m) {
        case CompletionMethod::fista: return "fista";
        case CompletionMethod::opt: return "opt";
        case CompletionMethod::nn: return "nn";
        case CompletionMethod::db: return "db";
        case CompletionMethod::mean: return "mean";
    }
    return "?";
}

CompletionMethod parse_completion_method(std::string_view name) {
    for (auto m : {CompletionMethod::fista, CompletionMethod::opt, CompletionMethod::nn, CompletionMethod::db,
                   CompletionMethod::mean})
        if (method_name(m) == name) return m;
    throw std::invalid_argument("unknown completion method '" + std::string(name) + "'");
}

void CompletionConfig::validate() const {
    if (!(beta_scale > 0.0) || !(fista_tol > 0.0) || fista_max_iter == 0)
        throw std::invalid_argument("CompletionConfig: FISTA parameters must be positive");
    if (!(beta_decay > 0.0 && beta_decay <= 1.0)) throw std::invalid_argument("CompletionConfig: beta_decay must lie in (0, 1]");
    if (opt_steps == 0 || !(opt_lr > 0.0) || opt_dim == 0 || opt_restarts == 0 || !(opt_lr_final_ratio > 0.0))
        throw std::invalid_argument("CompletionConfig: OPT parameters must be positive");
}

namespace {

void require_known(const MaskedMatrix& pm) {
    if (pm.mask.size() != pm.matrix.size()) throw std::invalid_argument("mask and matrix differ in size");
    if (pm.mask.missing_pairs() == pm.size() * (pm.size() - 1) / 2 || pm.size() < 2)
        throw std::invalid_argument("completion needs at least one known off-diagonal entry");
}

double mean_known(const MaskedMatrix& pm) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pm.size(); ++i)
        for (std::size_t j = i + 1; j < pm.size(); ++j)
            if (pm.known(i, j)) {
                sum += std::abs(pm.matrix(i, j));
                ++count;
            }
    return count ? sum / static_cast<double>(count) : 0.0;
}

// Symmetrize, zero the diagonal, clip negatives and restore the known entries.
DistanceMatrix finalize(const Eigen::MatrixXd& a, const MaskedMatrix& pm, bool keep_known) {
    const std::size_t n = pm.size();
    DistanceMatrix out(n, pm.matrix.squared());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = keep_known && pm.known(i, j) ? pm.matrix(i, j) : 0.5 * (a(i, j) + a(j, i));
            v = std::max(v, 0.0);
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

}  // namespace

Eigen::MatrixXd soft_threshold(const Eigen::MatrixXd& a, double beta) {
    if (beta < 0.0) throw std::invalid_argument("soft_threshold: beta must be non-negative");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success) throw ConvergenceError("soft_threshold: SVD did not converge", 0);
    const Eigen::VectorXd shrunk = (svd.singularValues().array() - beta).max(0.0).matrix();
    return svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();
}

double fista_objective(const Eigen::MatrixXd& a, const MaskedMatrix& pm, double beta) {
    const std::size_t n = pm.size();
    double fit = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                fit += a(i, i) * a(i, i);
            } else if (pm.known(i, j)) {
                const double d = a(i, j) - pm.matrix(i, j);
                fit += d * d;
            }
        }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return 0.5 * fit + beta * svd.singularValues().sum();
}

CompletionResult fista_complete(const MaskedMatrix& pm, const CompletionConfig& cfg) {
    cfg.validate();
    require_known(pm);
    const std::size_t n = pm.size();
    const double scale = mean_known(pm);
    const double beta_final = cfg.beta > 0.0 ? cfg.beta : cfg.beta_scale * scale;
    double beta = std::max(beta_final, cfg.beta_start_scale * scale);
    if (cfg.beta_decay == 1.0) beta = beta_final;

    // Known-entry selector; the diagonal is a known zero.
    Eigen::MatrixXd known = Eigen::MatrixXd::Identity(Eigen::Index(n), Eigen::Index(n));
    Eigen::MatrixXd target = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (pm.known(i, j)) {
                known(i, j) = 1.0;
                target(i, j) = pm.matrix(i, j);
            }
    const Eigen::MatrixXd unknown = Eigen::MatrixXd::Ones(Eigen::Index(n), Eigen::Index(n)) - known;

    CompletionResult result;
    result.method = CompletionMethod::fista;

    // Monotone variant: the extrapolation follows the thresholded candidate,
    // but a candidate that raises the objective is not accepted.
    Eigen::MatrixXd x = target;
    Eigen::MatrixXd x_prev = target;
    Eigen::MatrixXd z = target;
    double x_fit = 0.0;
    double x_nuclear = Eigen::JacobiSVD<Eigen::MatrixXd>(target).singularValues().sum();
    double t = 1.0;
    double loss_prev = std::numeric_limits<double>::infinity();
    Eigen::BDCSVD<Eigen::MatrixXd> svd;
    for (std::size_t k = 1; k <= cfg.fista_max_iter; ++k) {
        const Eigen::MatrixXd step = target + unknown.cwiseProduct(z);
        svd.compute(step, Eigen::ComputeThinU | Eigen::ComputeThinV);
        if (svd.info() != Eigen::Success) throw ConvergenceError("fista_complete: SVD did not converge", k);
        const Eigen::VectorXd shrunk = (svd.singularValues().array() - beta).max(0.0).matrix();
        const Eigen::MatrixXd a = svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();

        const double fit = known.cwiseProduct(a - target).squaredNorm();
        const double cand_loss = 0.5 * fit + beta * shrunk.sum();
        const double kept_loss = 0.5 * x_fit + beta * x_nuclear;
        const bool accepted = cand_loss <= kept_loss;

        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        x_prev = x;
        if (accepted) {
            x = a;
            x_fit = fit;
            x_nuclear = shrunk.sum();
        }
        z = x + (t / t_next) * (a - x) + ((t - 1.0) / t_next) * (x - x_prev);
        t = t_next;

        const double loss = accepted ? cand_loss : kept_loss;
        result.loss_history.push_back(loss);
        result.iterations = k;
        result.final_loss = loss;

        if (beta > beta_final) {
            beta = std::max(beta_final, beta * cfg.beta_decay);
            loss_prev = std::numeric_limits<double>::infinity();
            continue;
        }
        if (!accepted) continue;
        if (loss_prev > 0.0 && std::isfinite(loss_prev) && std::abs(loss - loss_prev) / loss_prev < cfg.fista_tol) break;
        loss_prev = loss;
    }
    result.completed = finalize(x, pm, true);
    return result;
}

double opt_loss_and_gradient(const MaskedMatrix& pm, std::span<const double> coords, std::size_t dim,
                             std::span<double> gradient) {
    const std::size_t n = pm.size();
    std::fill(gradient.begin(), gradient.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!pm.known(i, j)) continue;
            double a = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = coords[i * dim + k] - coords[j * dim + k];
                a += d * d;
            }
            const double r = a - pm.matrix(i, j);
            loss += r * r;
            for (std::size_t k = 0; k < dim; ++k) {
                const double g = 4.0 * r * (coords[i * dim + k] - coords[j * dim + k]);
                gradient[i * dim + k] += g;
                gradient[j * dim + k] -= g;
            }
        }
    }
    return loss;
}

CompletionResult opt_complete(const MaskedMatrix& pm, const CompletionConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    require_known(pm);
    const std::size_t n = pm.size();
    const std::size_t dim = cfg.opt_dim;

    // Work with coordinates in units of sqrt(mean known entry).
    const double unit2 = std::max(mean_known(pm), std::numeric_limits<double>::min());
    const double unit = std::sqrt(unit2);
    MaskedMatrix scaled = pm;
    for (double& v : scaled.matrix.entries()) v /= unit2;

    std::vector<double> warm(n * dim, 0.0);
    {
        const CompletionResult nn = nn_complete(scaled);
        RealizeOptions ro;
        ro.dim = dim;
        ro.best_effort = true;
        const Realization r = realize(nn.completed, ro);
        warm = r.points.coords;
    }

    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double decay = std::pow(cfg.opt_lr_final_ratio, 1.0 / static_cast<double>(cfg.opt_steps));

    std::vector<double> best_coords;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t steps_run = 0;

    for (std::size_t restart = 0; restart < cfg.opt_restarts; ++restart) {
        std::vector<double> x = warm;
        if (restart > 0) {
            RandomStream rng(seed, stream_id({0x0B7ull, restart}));
            const double sigma = 1.0 / std::sqrt(2.0 * static_cast<double>(dim));
            for (double& v : x) v = sigma * rng.normal();
        }
        std::vector<double> grad(x.size()), m1(x.size(), 0.0), m2(x.size(), 0.0);
        double lr = cfg.opt_lr;
        double loss = opt_loss_and_gradient(scaled, x, dim, grad);
        for (std::size_t step = 1; step <= cfg.opt_steps; ++step) {
            if (!std::isfinite(loss)) throw ConvergenceError("opt_complete: loss is not finite", step);
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < x.size(); ++i) {
                m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                x[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
            }
            lr *= decay;
            loss = opt_loss_and_gradient(scaled, x, dim, grad);
            ++steps_run;
        }
        if (!std::isfinite(loss)) throw ConvergenceError("opt_complete: loss is not finite", cfg.opt_steps);
        if (loss < best_loss) {
            best_loss = loss;
            best_coords = x;
        }
    }

    Trajectory traj(n, dim);
    for (std::size_t i = 0; i < best_coords.size(); ++i) traj.coords[i] = best_coords[i] * unit;
    CompletionResult result;
    result.method = CompletionMethod::opt;
    result.completed = edm_from_trajectory(traj);
    result.completed.set_squared(pm.matrix.squared());
    result.iterations = steps_run;
    result.final_loss = best_loss * unit2 * unit2;
    return result;
}

CompletionResult nn_complete(const MaskedMatrix& pm, IndexMetric metric) {
    require_known(pm);
    const std::size_t n = pm.size();
    std::vector<std::size_t> known;
    for (std::size_t idx = 0; idx < n * n; ++idx)
        if (pm.mask.bits()[idx]) known.push_back(idx);

    auto distance = [metric](std::size_t di, std::size_t dj) {
        return metric == IndexMetric::manhattan ? di + dj : std::max(di, dj);
    };

    DistanceMatrix out = pm.matrix;
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (pm.known(i, j)) continue;
            // lexicographic (distance, |di|, flat index)
            auto best = std::make_tuple(std::numeric_limits<std::size_t>::max(), std::size_t{0}, std::size_t{0});
            for (std::size_t idx : known) {
                const std::size_t r = idx / n, c = idx % n;
                const std::size_t di = r > i ? r - i : i - r;
                const std::size_t dj = c > j ? c - j : j - c;
                const auto key = std::make_tuple(distance(di, dj), di, idx);
                if (key < best) best = key;
            }
            const double v = pm.matrix.entries()[std::get<2>(best)];
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    CompletionResult result;
    result.method = CompletionMethod::nn;
    result.completed = std::move(out);
    return result;
}

std::vector<double> db_search_errors(const MaskedMatrix& pm, std::span<const DistanceMatrix> database) {
    const auto& k = simd::kernels();
    std::vector<double> errors(database.size());
    for (std::size_t i = 0; i < database.size(); ++i) {
        if (database[i].size() != pm.size())
            throw std::invalid_argument("db_search: database entry " + std::to_string(i) + " has size " +
                                        std::to_string(database[i].size()) + ", query has " + std::to_string(pm.size()));
        errors[i] = k.masked_sq_diff(pm.size() * pm.size(), database[i].entries().data(), pm.matrix.entries().data(),
                                     pm.mask.bits().data());
    }
    return errors;
}

CompletionResult db_search_complete(const MaskedMatrix& pm, std::span<const DistanceMatrix> database) {
    if (database.empty()) throw std::invalid_argument("db_search_complete: empty database");
    const std::vector<double> errors = db_search_errors(pm, database);
    const std::size_t best = static_cast<std::size_t>(std::min_element(errors.begin(), errors.end()) - errors.begin());
    CompletionResult result;
    result.method = CompletionMethod::db;
    result.reference_index = best;
    result.final_loss = errors[best];
    result.completed = DistanceMatrix(pm.size(), pm.matrix.squared());
    simd::kernels().select(result.completed.entries().data(), pm.size() * pm.size(), pm.mask.bits().data(),
                           pm.matrix.entries().data(), database[best].entries().data());
    for (std::size_t i = 0; i < pm.size(); ++i) result.completed(i, i) = 0.0;
    return result;
}

EnsembleMean::EnsembleMean(std::span<const MaskedMatrix> cells) {
    if (cells.empty()) throw std::invalid_argument("EnsembleMean: no cells");
    n_ = cells.front().size();
    sum_.assign(n_ * n_, 0.0);
    count_.assign(n_ * n_, 0);
    for (const MaskedMatrix& cell : cells) {
        if (cell.size() != n_) throw std::invalid_argument("EnsembleMean: cells differ in size");
        for (std::size_t idx = 0; idx < n_ * n_; ++idx)
            if (cell.mask.bits()[idx]) {
                sum_[idx] += cell.matrix.entries()[idx];
                ++count_[idx];
            }
    }
}

CompletionResult EnsembleMean::complete(const MaskedMatrix& pm) const {
    if (pm.size() != n_) throw std::invalid_argument("EnsembleMean: cell size differs from the ensemble");
    const std::size_t n = n_;
    CompletionResult result;
    result.method = CompletionMethod::mean;
    result.completed = pm.matrix;
    bool need_fallback = false;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (!pm.known(i, j) && count_[i * n + j] == 0) need_fallback = true;
    DistanceMatrix fallback;
    if (need_fallback) fallback = nn_complete(pm).completed;

    for (std::size_t i = 0; i < n; ++i) {
        result.completed(i, i) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (pm.known(i, j)) continue;
            double v;
            if (count_[i * n + j] > 0) {
                v = sum_[i * n + j] / static_cast<double>(count_[i * n + j]);
            } else {
                v = fallback(i, j);
                ++result.fallback_entries;
            }
            result.completed(i, j) = v;
            result.completed(j, i) = v;
        }
    }
    return result;
}

CompletionResult ensemble_mean_complete(std::span<const MaskedMatrix> cells, std::size_t target) {
    if (target >= cells.size()) throw std::out_of_range("ensemble_mean_complete: target index out of range");
    return EnsembleMean(cells).complete(cells[target]);
}

CompletionResult complete(const MaskedMatrix& pm, const CompletionConfig& cfg, std::uint64_t seed) {
    switch (cfg.method) {
        case CompletionMethod::fista: return fista_complete(pm, cfg);
        case CompletionMethod::opt: return opt_complete(pm, cfg, seed);
        case CompletionMethod::nn: return nn_complete(pm, cfg.nn_metric);
        case CompletionMethod::db:
        case CompletionMethod::mean: break;
    }
    throw std::invalid_argument("complete: method '" + std::string(method_name(cfg.method)) +
                                "' needs a database or an ensemble of cells");
}

}  // namespace fbmedm
