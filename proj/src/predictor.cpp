#include "fbmedm/predictor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fbmedm {

void GaussianEnsembleSpec::validate(double tol) const {
    const auto d = static_cast<Eigen::Index>(n * n);
    if (n == 0 || mean.size() != d || cov.rows() != d || cov.cols() != d)
        throw std::invalid_argument("GaussianEnsembleSpec: mean/cov do not match n*n = " + std::to_string(d));
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, cov.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("GaussianEnsembleSpec: covariance is not symmetric");
}

Eigen::VectorXd GaussianEnsembleSpec::conditional_mean(std::span<const double> values,
                                                       std::span<const std::uint8_t> known) const {
    const std::size_t d = n * n;
    if (values.size() != d || known.size() != d) throw std::invalid_argument("conditional_mean: shape mismatch");
    std::vector<Eigen::Index> k_idx, u_idx;
    for (std::size_t i = 0; i < d; ++i) (known[i] ? k_idx : u_idx).push_back(static_cast<Eigen::Index>(i));
    Eigen::VectorXd out = mean;
    if (k_idx.empty()) return out;
    Eigen::VectorXd resid(k_idx.size());
    for (std::size_t a = 0; a < k_idx.size(); ++a) resid(a) = values[k_idx[a]] - mean(k_idx[a]);
    const Eigen::MatrixXd skk = cov(k_idx, k_idx);
    const Eigen::VectorXd w = skk.ldlt().solve(resid);
    if (!u_idx.empty()) {
        const Eigen::VectorXd shift = cov(u_idx, k_idx) * w;
        for (std::size_t a = 0; a < u_idx.size(); ++a) out(u_idx[a]) += shift(a);
    }
    for (Eigen::Index k : k_idx) out(k) = values[k];
    return out;
}

AnalyticEpsilon::AnalyticEpsilon(GaussianEnsembleSpec spec, NoiseSchedule schedule)
    : spec_(std::move(spec)), schedule_(std::move(schedule)) {
    spec_.validate();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (spec_.cov + spec_.cov.transpose()));
    if (es.info() != Eigen::Success) throw std::runtime_error("AnalyticEpsilon: eigendecomposition failed");
    eigvals_ = es.eigenvalues();
    eigvecs_ = es.eigenvectors();
    const double scale = std::max(1.0, eigvals_.cwiseAbs().maxCoeff());
    if (eigvals_.minCoeff() < -1e-10 * scale)
        throw std::invalid_argument("AnalyticEpsilon: covariance is not positive semidefinite (eigenvalue " +
                                    std::to_string(eigvals_.minCoeff()) + ")");
    eigvals_ = eigvals_.cwiseMax(0.0);
}

void AnalyticEpsilon::predict(std::span<const double> x, std::size_t batch, std::size_t t,
                              std::span<double> out) const {
    const auto d = static_cast<Eigen::Index>(spec_.n * spec_.n);
    if (x.size() != batch * static_cast<std::size_t>(d) || out.size() != x.size())
        throw std::invalid_argument("AnalyticEpsilon::predict: shape mismatch");
    const double ab = schedule_.alpha_bar(t);
    const double sab = std::sqrt(ab);
    // eps = Q diag(sqrt(1-ab) / (ab l + 1 - ab)) Q^T (x - sqrt(ab) m)
    const Eigen::VectorXd gain =
        (std::sqrt(1.0 - ab) / (ab * eigvals_.array() + (1.0 - ab))).matrix();
    Eigen::Map<const Eigen::MatrixXd> xs(x.data(), d, static_cast<Eigen::Index>(batch));
    Eigen::Map<Eigen::MatrixXd> os(out.data(), d, static_cast<Eigen::Index>(batch));
    // Column by column: a blocked product would round differently with the
    // batch width, and chains must not depend on how they are batched.
    Eigen::VectorXd r(d), proj(d);
    for (Eigen::Index c = 0; c < xs.cols(); ++c) {
        r = xs.col(c) - sab * spec_.mean;
        proj.noalias() = eigvecs_.transpose() * r;
        proj = gain.cwiseProduct(proj);
        os.col(c).noalias() = eigvecs_ * proj;
    }
}

Eigen::VectorXd AnalyticEpsilon::denoise(const Eigen::VectorXd& xt, std::size_t t) const {
    const double ab = schedule_.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const Eigen::VectorXd gain = (sab * eigvals_.array() / (ab * eigvals_.array() + (1.0 - ab))).matrix();
    return spec_.mean + eigvecs_ * (gain.asDiagonal() * (eigvecs_.transpose() * (xt - sab * spec_.mean)));
}

}  // namespace fbmedm
