#include "fbmedm/simd.hpp"

namespace fbmedm::simd {
namespace {

void pairwise_sq_dist(const double* points, std::size_t n, std::size_t dim, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i * n + i] = 0.0;
        const double* pi = points + i * dim;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double* pj = points + j * dim;
            double acc = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = pi[k] - pj[k];
                acc += d * d;
            }
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
    }
}

void affine3(double* out, std::size_t len, double a, const double* x, double b, const double* y,
             double c, const double* z) {
    if (z == nullptr) {
        for (std::size_t i = 0; i < len; ++i) out[i] = a * x[i] + b * y[i];
        return;
    }
    for (std::size_t i = 0; i < len; ++i) out[i] = a * x[i] + b * y[i] + c * z[i];
}

void select(double* out, std::size_t len, const std::uint8_t* mask, const double* known,
            const double* other) {
    for (std::size_t i = 0; i < len; ++i) out[i] = mask[i] ? known[i] : other[i];
}

double masked_sq_diff(std::size_t len, const double* a, const double* b, const std::uint8_t* mask) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        if (mask[i]) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
    }
    return acc;
}

double dot(std::size_t len, const double* x, const double* y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += x[i] * y[i];
    return acc;
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{pairwise_sq_dist, affine3, select, masked_sq_diff, dot};
    return table;
}

}  // namespace fbmedm::simd
