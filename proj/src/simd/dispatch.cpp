#include "fbmedm/simd.hpp"

#include <cstdlib>
#include <string>

namespace fbmedm::simd {

bool isa_available(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if FBMEDM_HAVE_AVX2
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa active_isa() {
    static const Isa chosen = [] {
        if (const char* env = std::getenv("FBMEDM_SIMD"); env && std::string(env) == "scalar")
            return Isa::scalar;
        return isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
    }();
    return chosen;
}

const KernelTable& kernels_for(Isa isa) {
#if FBMEDM_HAVE_AVX2
    if (isa == Isa::avx2 && isa_available(Isa::avx2)) return avx2_kernels();
#endif
    (void)isa;
    return scalar_kernels();
}

const KernelTable& kernels() {
    static const KernelTable& table = kernels_for(active_isa());
    return table;
}

}  // namespace fbmedm::simd
