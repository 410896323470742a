#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fbmedm/edm.hpp"

namespace fbmedm {

enum class CompletionMethod { fista, opt, nn, db, mean };

std::string_view method_name(CompletionMethod m);
CompletionMethod parse_completion_method(std::string_view name);

enum class IndexMetric { manhattan, chebyshev };

struct CompletionConfig {
    CompletionMethod method = CompletionMethod::fista;

    // FISTA. beta <= 0 selects beta_scale * (mean known entry).
    double beta = 0.0;
    double beta_scale = 1e-4;
    // Start with a larger threshold and shrink it geometrically towards beta
    // (factor per iteration); 1 disables continuation.
    double beta_start_scale = 0.1;
    double beta_decay = 0.97;
    double fista_tol = 1e-7;
    std::size_t fista_max_iter = 5000;

    // Trajectory optimization (Adam on coordinates).
    std::size_t opt_steps = 5000;
    double opt_lr = 0.05;
    double opt_lr_final_ratio = 1e-3;  // exponential decay of the learning rate over opt_steps
    std::size_t opt_dim = 3;
    std::size_t opt_restarts = 1;

    IndexMetric nn_metric = IndexMetric::manhattan;

    void validate() const;
};

struct CompletionResult {
    DistanceMatrix completed;
    std::size_t iterations = 0;
    double final_loss = 0.0;
    CompletionMethod method = CompletionMethod::fista;
    std::size_t reference_index = 0;  // database search: matched entry
    std::size_t fallback_entries = 0; // ensemble mean: pairs filled by nearest neighbour
    std::vector<double> loss_history; // FISTA: objective after every iteration
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::size_t iteration)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}
    std::size_t iteration() const { return iteration_; }

private:
    std::size_t iteration_;
};

// U (S - beta)_+ V^T
Eigen::MatrixXd soft_threshold(const Eigen::MatrixXd& a, double beta);

// 0.5 * |B o (A - A~)|_F^2 + beta * |A|_*, with the diagonal counted as known (zero).
double fista_objective(const Eigen::MatrixXd& a, const MaskedMatrix& pm, double beta);

CompletionResult fista_complete(const MaskedMatrix& pm, const CompletionConfig& cfg = {});

// L(x) = sum over known pairs i<j of (|x_i - x_j|^2 - a~_ij)^2 and its gradient.
// `coords` is row-major n x dim; `gradient` receives the same layout.
double opt_loss_and_gradient(const MaskedMatrix& pm, std::span<const double> coords, std::size_t dim,
                             std::span<double> gradient);

CompletionResult opt_complete(const MaskedMatrix& pm, const CompletionConfig& cfg = {}, std::uint64_t seed = 0);

CompletionResult nn_complete(const MaskedMatrix& pm, IndexMetric metric = IndexMetric::manhattan);

// |B o (A_i - A~)|_F^2 for every database entry.
std::vector<double> db_search_errors(const MaskedMatrix& pm, std::span<const DistanceMatrix> database);

CompletionResult db_search_complete(const MaskedMatrix& pm, std::span<const DistanceMatrix> database);

// Entry-wise sums and counts of the known values over a set of cells; fills
// the unknown entries of any cell of the same size from them.
class EnsembleMean {
public:
    explicit EnsembleMean(std::span<const MaskedMatrix> cells);
    CompletionResult complete(const MaskedMatrix& pm) const;

private:
    std::size_t n_ = 0;
    std::vector<double> sum_;
    std::vector<std::size_t> count_;
};

// Unknown entries of cells[target] take the mean of that entry over all cells
// where it is known; entries known nowhere fall back to nearest-neighbour fill.
CompletionResult ensemble_mean_complete(std::span<const MaskedMatrix> cells, std::size_t target);

// Dispatch on cfg.method (db and mean need their extra inputs and are rejected here).
CompletionResult complete(const MaskedMatrix& pm, const CompletionConfig& cfg, std::uint64_t seed = 0);

}  // namespace fbmedm
