#include "fbmedm/rigidity.hpp"

#include <stdexcept>
#include <string>

#include "fbmedm/parallel.hpp"

namespace fbmedm {

RigidityResult is_rigid(const Mask& b, const RigidityOptions& options) {
    const std::size_t n = b.size();
    if (options.min_links < 1) throw std::invalid_argument("is_rigid: min_links must be positive");
    if (n < options.min_links)
        throw std::invalid_argument("is_rigid: need at least " + std::to_string(options.min_links) + " vertices");

    RigidityResult result;

    // Greedy clique from every start vertex; keep the first largest.
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> clique{i};
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !b.known(i, j)) continue;
            bool joins = true;
            for (std::size_t k : clique) {
                if (!b.known(k, j)) {
                    joins = false;
                    break;
                }
            }
            if (joins) clique.push_back(j);
        }
        if (clique.size() > result.seed_clique.size()) result.seed_clique = std::move(clique);
    }

    std::vector<bool> adopted(n, false);
    std::vector<bool> cleared(n, false);
    std::vector<std::size_t> links(n, 0);  // links of each outside vertex into the adopted set
    auto adopt = [&](std::size_t v) {
        adopted[v] = true;
        result.order.push_back(v);
        const bool all = options.rule == AdoptionRule::clear_adopted_rows && cleared[v];
        for (std::size_t u = 0; u < n; ++u)
            if (!adopted[u] && (all || b.known(u, v))) ++links[u];
    };
    for (std::size_t v : result.seed_clique) adopt(v);

    while (result.order.size() < n) {
        std::size_t best = n;
        std::size_t best_links = 0;
        for (std::size_t u = 0; u < n; ++u) {
            if (adopted[u]) continue;
            if (best == n || links[u] > best_links) {
                best = u;
                best_links = links[u];
            }
        }
        if (best_links < options.min_links) return result;
        cleared[best] = true;
        adopt(best);
    }
    result.rigid = true;
    return result;
}

double rigid_fraction(std::size_t n, double mu, std::size_t trials, std::uint64_t seed,
                      const RigidityOptions& options, unsigned jobs) {
    if (trials < 1) throw std::invalid_argument("rigid_fraction: trials must be positive");
    std::vector<char> rigid(trials, 0);
    parallel_for(trials, jobs, [&](std::size_t k) {
        rigid[k] = is_rigid(random_mask(n, mu, seed ^ static_cast<std::uint64_t>(k)), options).rigid ? 1 : 0;
    });
    std::size_t count = 0;
    for (char r : rigid) count += static_cast<std::size_t>(r);
    return static_cast<double>(count) / static_cast<double>(trials);
}

}  // namespace fbmedm
