#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fbmedm/edm.hpp"

namespace fbmedm {

// How an adopted vertex counts towards the links of the vertices still outside.
enum class AdoptionRule {
    // Only known mask entries count as links.
    known_links,
    // After adoption every pair involving the vertex is treated as known, so
    // it links to all remaining vertices. This is the literal row-clearing
    // variant; it accepts graphs whose completion is not unique.
    clear_adopted_rows,
};

struct RigidityOptions {
    std::size_t min_links = 4;  // D + 1
    AdoptionRule rule = AdoptionRule::known_links;
};

struct RigidityResult {
    bool rigid = false;
    std::vector<std::size_t> order;        // vertices in adoption order, seed clique first
    std::vector<std::size_t> seed_clique;  // greedy clique the adoption starts from
};

// Greedy one-sided rigidity test. rigid == true means the partial graph of the
// mask (1 = known distance) is rigid in min_links - 1 dimensions for points in
// general position; rigid == false is inconclusive. Ties go to the lowest index.
RigidityResult is_rigid(const Mask& b, const RigidityOptions& options = {});

// Monte-Carlo fraction of random_mask(n, mu) draws that pass is_rigid. Trial k
// uses the mask seed seed ^ k.
double rigid_fraction(std::size_t n, double mu, std::size_t trials, std::uint64_t seed,
                      const RigidityOptions& options = {}, unsigned jobs = 1);

}  // namespace fbmedm
