#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fbmedm/fbm.hpp"

namespace fbmedm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense n x n matrix of pairwise distances, row-major. Entries are squared
// distances unless `squared` is false (raw distances, used for reporting).
// Producers in this library (edm_from_trajectory, the completion methods,
// postprocess_edm) return symmetric hollow non-negative matrices; arbitrary
// data can still be loaded and checked with validate_edm.
class DistanceMatrix {
public:
    static constexpr std::size_t kDefaultMaxSize = 1024;

    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n, bool squared = true);
    DistanceMatrix(std::size_t n, std::vector<double> entries, bool squared = true);
    static DistanceMatrix from_rows(const std::vector<std::vector<double>>& rows, bool squared = true);

    std::size_t size() const { return n_; }
    bool squared() const { return squared_; }
    void set_squared(bool squared) { squared_ = squared; }

    double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return entries_[i * n_ + j]; }

    std::span<const double> entries() const { return entries_; }
    std::span<double> entries() { return entries_; }

    Eigen::Map<const RowMatrix> matrix() const { return {entries_.data(), Eigen::Index(n_), Eigen::Index(n_)}; }
    Eigen::Map<RowMatrix> matrix() { return {entries_.data(), Eigen::Index(n_), Eigen::Index(n_)}; }

    // Copy holding raw distances (sqrt of the entries when squared, else a plain copy).
    DistanceMatrix to_raw() const;
    DistanceMatrix to_squared() const;

    bool operator==(const DistanceMatrix&) const = default;

private:
    std::size_t n_ = 0;
    bool squared_ = true;
    std::vector<double> entries_;
};

// Symmetric binary known-entry mask: 1 = known, 0 = unknown. The diagonal is 0.
class Mask {
public:
    Mask() = default;
    explicit Mask(std::size_t n, bool known = false);
    static Mask all_known(std::size_t n) { return Mask(n, true); }
    static Mask from_rows(const std::vector<std::vector<int>>& rows);

    std::size_t size() const { return n_; }
    bool known(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
    // Sets both (i,j) and (j,i); setting the diagonal is ignored.
    void set(std::size_t i, std::size_t j, bool known);

    std::span<const std::uint8_t> bits() const { return bits_; }

    // Number of unknown pairs above the diagonal.
    std::size_t missing_pairs() const;
    // mu = 2m / (n(n-1))
    double missing_ratio() const;
    std::size_t degree(std::size_t i) const;

    bool operator==(const Mask&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> bits_;
};

// Partial EDM: a matrix whose unknown entries are set to 0 and must not be read
// except as solver initialization.
struct MaskedMatrix {
    DistanceMatrix matrix;
    Mask mask;

    std::size_t size() const { return matrix.size(); }
    bool known(std::size_t i, std::size_t j) const { return mask.known(i, j); }
};

struct EdmValidity {
    double max_asymmetry = 0.0;
    double max_abs_diagonal = 0.0;
    double most_negative = 0.0;  // <= 0
    double max_triangle_violation = 0.0;
    std::array<std::size_t, 3> worst_triple{0, 0, 0};  // (i, j, k) with sqrt(a_ij) > sqrt(a_ik) + sqrt(a_kj)
    std::size_t triples_checked = 0;
    bool symmetric = true;
    bool hollow = true;
    bool nonnegative = true;
    bool triangle = true;

    bool ok() const { return symmetric && hollow && nonnegative && triangle; }
};

struct ValidateOptions {
    // Tolerances are relative: entry checks use tol * max|a_ij|, the triangle
    // check uses tol * sqrt(max|a_ij|).
    double tol = 1e-9;
    bool check_triangle = true;
    std::size_t sample_triples = 0;  // 0 = all n^3 triples
    std::uint64_t seed = 0;
};

EdmValidity validate_edm(const DistanceMatrix& m, const ValidateOptions& options = {});

// a_ij = |x_i - x_j|^2
DistanceMatrix edm_from_trajectory(const Trajectory& trajectory);

// (n-1) x (n-1) Gram matrix with the first point as origin.
Eigen::MatrixXd gram_from_edm(const DistanceMatrix& m);

class SchoenbergError : public std::runtime_error {
public:
    SchoenbergError(const std::string& what, std::vector<double> spectrum);
    const std::vector<double>& spectrum() const { return spectrum_; }

private:
    std::vector<double> spectrum_;
};

struct RealizeOptions {
    std::size_t dim = 3;
    // Eigenvalues below rel_tol * lambda_max count as zero.
    double rel_tol = 1e-8;
    // Return the classical-MDS embedding instead of throwing.
    bool best_effort = false;
};

struct Realization {
    Trajectory points;
    std::vector<double> spectrum;  // Gram eigenvalues, descending
    double residual = 0.0;         // max |a_ij - a_ij(points)|
    bool exact = true;             // Schoenberg criterion satisfied
};

Realization realize(const DistanceMatrix& m, const RealizeOptions& options = {});

enum class RankNorm { spectral_l2, nuclear };

// Share of the first r singular values: sqrt(sum_{i<=r} s_i^2 / sum s_i^2) for
// spectral_l2, sum_{i<=r} s_i / sum s_i for nuclear.
double rank_fraction(const DistanceMatrix& m, std::size_t r, RankNorm norm = RankNorm::spectral_l2);

// Each pair above the diagonal is unknown with probability mu.
Mask random_mask(std::size_t n, double mu, std::uint64_t seed);

// Unknown: the diagonal and every entry in a dropped row or column.
Mask row_col_mask(std::size_t n, std::span<const std::size_t> drop);

MaskedMatrix apply_mask(const DistanceMatrix& m, const Mask& b);

}  // namespace fbmedm
