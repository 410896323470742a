#pragma once

// Elementwise kernels used by the EDM builders, the completion solvers and the
// diffusion samplers. Each kernel has a scalar reference implementation and,
// on x86-64, an AVX2/FMA variant. The variant is picked once at startup from
// CPUID; FBMEDM_SIMD=scalar in the environment forces the reference path.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace fbmedm::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
    // out[i*n+j] = |p_i - p_j|^2 for row-major points (n x dim). Only the
    // upper triangle is computed; the lower one is mirrored so the result is
    // exactly symmetric.
    void (*pairwise_sq_dist)(const double* points, std::size_t n, std::size_t dim, double* out);

    // out = a*x + b*y + c*z. z may be null (then c is ignored). out may alias x or y.
    void (*affine3)(double* out, std::size_t len, double a, const double* x, double b,
                    const double* y, double c, const double* z);

    // out = mask ? known : other. Exact selection, no arithmetic.
    void (*select)(double* out, std::size_t len, const std::uint8_t* mask, const double* known,
                   const double* other);

    // sum over i with mask[i] != 0 of (a[i] - b[i])^2
    double (*masked_sq_diff)(std::size_t len, const double* a, const double* b,
                             const std::uint8_t* mask);

    // sum of x[i]*y[i]
    double (*dot)(std::size_t len, const double* x, const double* y);
};

const KernelTable& scalar_kernels();
#if FBMEDM_HAVE_AVX2
const KernelTable& avx2_kernels();
#endif

bool isa_available(Isa isa);
Isa active_isa();
std::string_view isa_name(Isa isa);

// Table for the active ISA.
const KernelTable& kernels();
const KernelTable& kernels_for(Isa isa);

}  // namespace fbmedm::simd
