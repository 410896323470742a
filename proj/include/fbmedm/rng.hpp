#pragma once

// Counter-based random streams (Philox4x32-10). A stream is addressed by a
// 64-bit seed and a 64-bit stream id, so any consumer can derive independent
// substreams (per trajectory, per sampler step, ...) without sharing state.
// Output is bit-reproducible across runs of this implementation.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

namespace fbmedm {

inline constexpr const char* kRngAlgorithm = "philox4x32-10;u53;box-muller";

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

// Mix a tuple of integers into a single stream id.
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts);

class RandomStream {
public:
    using result_type = std::uint64_t;

    RandomStream(std::uint64_t seed, std::uint64_t stream);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();

    // Uniform on (0, 1): never returns exactly 0 or 1.
    double uniform();
    double normal();
    void fill_normal(std::span<double> out);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffered_ = 0;  // remaining 64-bit words in buffer_
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace fbmedm
