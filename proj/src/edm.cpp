#include "fbmedm/edm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fbmedm/rng.hpp"
#include "fbmedm/simd.hpp"

namespace fbmedm {

namespace {
void check_size(std::size_t n) {
    if (n > DistanceMatrix::kDefaultMaxSize)
        throw std::invalid_argument("matrix size " + std::to_string(n) + " exceeds the cap of " +
                                    std::to_string(DistanceMatrix::kDefaultMaxSize));
}
}  // namespace

DistanceMatrix::DistanceMatrix(std::size_t n, bool squared) : n_(n), squared_(squared), entries_(n * n, 0.0) {
    check_size(n);
}

DistanceMatrix::DistanceMatrix(std::size_t n, std::vector<double> entries, bool squared)
    : n_(n), squared_(squared), entries_(std::move(entries)) {
    check_size(n);
    if (entries_.size() != n * n) throw std::invalid_argument("DistanceMatrix: entry count is not n*n");
}

DistanceMatrix DistanceMatrix::from_rows(const std::vector<std::vector<double>>& rows, bool squared) {
    const std::size_t n = rows.size();
    std::vector<double> entries;
    entries.reserve(n * n);
    for (const auto& row : rows) {
        if (row.size() != n) throw std::invalid_argument("DistanceMatrix: rows must form a square matrix");
        entries.insert(entries.end(), row.begin(), row.end());
    }
    return DistanceMatrix(n, std::move(entries), squared);
}

DistanceMatrix DistanceMatrix::to_raw() const {
    DistanceMatrix out = *this;
    if (squared_) {
        for (double& v : out.entries_) v = std::sqrt(std::max(v, 0.0));
        out.squared_ = false;
    }
    return out;
}

DistanceMatrix DistanceMatrix::to_squared() const {
    DistanceMatrix out = *this;
    if (!squared_) {
        for (double& v : out.entries_) v = v * v;
        out.squared_ = true;
    }
    return out;
}

Mask::Mask(std::size_t n, bool known) : n_(n), bits_(n * n, known ? 1 : 0) {
    for (std::size_t i = 0; i < n; ++i) bits_[i * n + i] = 0;
}

Mask Mask::from_rows(const std::vector<std::vector<int>>& rows) {
    const std::size_t n = rows.size();
    Mask m(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) throw std::invalid_argument("Mask: rows must form a square matrix");
        for (std::size_t j = 0; j < n; ++j) {
            if (rows[i][j] != rows[j][i]) throw std::invalid_argument("Mask: not symmetric");
            if (i != j && rows[i][j] != 0) m.bits_[i * n + j] = 1;
        }
    }
    return m;
}

void Mask::set(std::size_t i, std::size_t j, bool known) {
    if (i >= n_ || j >= n_) throw std::out_of_range("Mask::set index out of range");
    if (i == j) return;
    bits_[i * n_ + j] = known ? 1 : 0;
    bits_[j * n_ + i] = known ? 1 : 0;
}

std::size_t Mask::missing_pairs() const {
    std::size_t m = 0;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j) m += bits_[i * n_ + j] == 0;
    return m;
}

double Mask::missing_ratio() const {
    if (n_ < 2) return 0.0;
    return 2.0 * static_cast<double>(missing_pairs()) / (static_cast<double>(n_) * static_cast<double>(n_ - 1));
}

std::size_t Mask::degree(std::size_t i) const {
    std::size_t d = 0;
    for (std::size_t j = 0; j < n_; ++j) d += bits_[i * n_ + j];
    return d;
}

EdmValidity validate_edm(const DistanceMatrix& m, const ValidateOptions& options) {
    EdmValidity report;
    const std::size_t n = m.size();
    double scale = 0.0;
    for (double v : m.entries()) scale = std::max(scale, std::abs(v));
    const double entry_tol = options.tol * std::max(scale, 1e-300);

    for (std::size_t i = 0; i < n; ++i) {
        report.max_abs_diagonal = std::max(report.max_abs_diagonal, std::abs(m(i, i)));
        for (std::size_t j = 0; j < n; ++j) {
            report.max_asymmetry = std::max(report.max_asymmetry, std::abs(m(i, j) - m(j, i)));
            report.most_negative = std::min(report.most_negative, m(i, j));
        }
    }
    report.symmetric = report.max_asymmetry <= entry_tol;
    report.hollow = report.max_abs_diagonal <= entry_tol;
    report.nonnegative = -report.most_negative <= entry_tol;

    if (!options.check_triangle || n < 3) return report;

    const DistanceMatrix raw = m.squared() ? m.to_raw() : m;
    const double distance_scale = m.squared() ? std::sqrt(scale) : scale;
    const double tri_tol = options.tol * std::max(distance_scale, 1e-300);
    auto check = [&](std::size_t i, std::size_t j, std::size_t k) {
        const double v = raw(i, j) - raw(i, k) - raw(k, j);
        ++report.triples_checked;
        if (v > report.max_triangle_violation) {
            report.max_triangle_violation = v;
            report.worst_triple = {i, j, k};
        }
    };
    if (options.sample_triples == 0) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k)
                    if (k != i && k != j) check(i, j, k);
    } else {
        RandomStream rng(options.seed, stream_id({0x7A1ull}));
        for (std::size_t s = 0; s < options.sample_triples; ++s) {
            const std::size_t i = rng() % n, j = rng() % n, k = rng() % n;
            if (i == j || j == k || i == k) continue;
            check(i, j, k);
        }
    }
    report.triangle = report.max_triangle_violation <= tri_tol;
    return report;
}

DistanceMatrix edm_from_trajectory(const Trajectory& trajectory) {
    if (!trajectory.finite()) throw std::invalid_argument("edm_from_trajectory: non-finite coordinates");
    DistanceMatrix out(trajectory.n_points);
    simd::kernels().pairwise_sq_dist(trajectory.coords.data(), trajectory.n_points, trajectory.dim,
                                     out.entries().data());
    return out;
}

Eigen::MatrixXd gram_from_edm(const DistanceMatrix& m) {
    const std::size_t n = m.size();
    if (n == 0) throw std::invalid_argument("gram_from_edm: empty matrix");
    const DistanceMatrix a = m.squared() ? m : m.to_squared();
    Eigen::MatrixXd g(n - 1, n - 1);
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 1; j < n; ++j) g(i - 1, j - 1) = 0.5 * (a(0, i) - a(i, j) + a(0, j));
    return g;
}

SchoenbergError::SchoenbergError(const std::string& what, std::vector<double> spectrum)
    : std::runtime_error(what), spectrum_(std::move(spectrum)) {}

Realization realize(const DistanceMatrix& m, const RealizeOptions& options) {
    const std::size_t n = m.size();
    const std::size_t dim = options.dim;
    Realization out;
    out.points = Trajectory(n, dim);
    if (n <= 1) return out;

    const Eigen::MatrixXd g = gram_from_edm(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (g + g.transpose()));
    if (eig.info() != Eigen::Success) throw std::runtime_error("realize: eigendecomposition failed");

    const Eigen::Index k = g.rows();
    // Eigen sorts ascending; flip to descending
    out.spectrum.resize(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) out.spectrum[i] = eig.eigenvalues()(k - 1 - i);

    const double lambda_max = std::max(out.spectrum.front(), 0.0);
    const double threshold = options.rel_tol * std::max(lambda_max, std::abs(out.spectrum.back()));
    const bool negative = out.spectrum.back() < -threshold;
    const auto rank = static_cast<std::size_t>(
        std::count_if(out.spectrum.begin(), out.spectrum.end(), [&](double v) { return v > threshold; }));
    out.exact = !negative && rank <= dim;
    if (!out.exact && !options.best_effort) {
        std::string why = negative ? "Gram matrix has a negative eigenvalue " + std::to_string(out.spectrum.back())
                                   : "Gram matrix rank " + std::to_string(rank) + " exceeds dim " + std::to_string(dim);
        throw SchoenbergError("realize: Schoenberg criterion fails: " + why, out.spectrum);
    }

    const auto used = static_cast<Eigen::Index>(std::min<std::size_t>(dim, static_cast<std::size_t>(k)));
    for (Eigen::Index c = 0; c < used; ++c) {
        const double lambda = out.spectrum[c];
        if (lambda <= 0.0) break;
        const double s = std::sqrt(lambda);
        const auto col = eig.eigenvectors().col(k - 1 - c);
        for (std::size_t i = 1; i < n; ++i) out.points.at(i, c) = s * col(Eigen::Index(i - 1));
    }

    const DistanceMatrix back = edm_from_trajectory(out.points);
    const DistanceMatrix a = m.squared() ? m : m.to_squared();
    for (std::size_t i = 0; i < n * n; ++i)
        out.residual = std::max(out.residual, std::abs(back.entries()[i] - a.entries()[i]));
    return out;
}

double rank_fraction(const DistanceMatrix& m, std::size_t r, RankNorm norm) {
    const std::size_t n = m.size();
    if (r > n) throw std::invalid_argument("rank_fraction: r exceeds the matrix size");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(m.matrix()));
    const Eigen::VectorXd& s = svd.singularValues();  // descending
    double head = 0.0, total = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double v = norm == RankNorm::spectral_l2 ? s(i) * s(i) : s(i);
        total += v;
        if (static_cast<std::size_t>(i) < r) head += v;
    }
    if (total == 0.0) return 1.0;
    return norm == RankNorm::spectral_l2 ? std::sqrt(head / total) : head / total;
}

Mask random_mask(std::size_t n, double mu, std::uint64_t seed) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw std::domain_error("random_mask: mu must lie in [0, 1]");
    Mask b(n, true);
    RandomStream rng(seed, stream_id({0x3A5Cull, n}));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (rng.uniform() < mu) b.set(i, j, false);
    return b;
}

Mask row_col_mask(std::size_t n, std::span<const std::size_t> drop) {
    Mask b(n, true);
    std::vector<bool> seen(n, false);
    for (std::size_t d : drop) {
        if (d >= n) throw std::out_of_range("row_col_mask: index " + std::to_string(d) + " out of range");
        if (seen[d]) throw std::invalid_argument("row_col_mask: duplicate index " + std::to_string(d));
        seen[d] = true;
        for (std::size_t j = 0; j < n; ++j) b.set(d, j, false);
    }
    return b;
}

MaskedMatrix apply_mask(const DistanceMatrix& m, const Mask& b) {
    if (m.size() != b.size())
        throw std::invalid_argument("apply_mask: matrix is " + std::to_string(m.size()) + "x" +
                                    std::to_string(m.size()) + " but mask is " + std::to_string(b.size()));
    MaskedMatrix out{m, b};
    const std::size_t n = m.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (!b.known(i, j)) out.matrix(i, j) = 0.0;
    return out;
}

}  // namespace fbmedm
